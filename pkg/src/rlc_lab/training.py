"""Training and evaluation for RLC hypernetworks and the deterministic baselines.

RLCs are trained on a smoothed objective: each hard vote sgn(<a, x> - b) is
replaced by tanh(<a, x> - b) and averaged over ``amplification`` draws,
then passed through a scaled logistic loss. Noise is a network input, so
the gradient of this surrogate is exact (pathwise). Hard majority votes are
used only for evaluation.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .baselines import DeepSetsSpec, GinSpec, deepsets_forward, gin_forward
from .diffcore import (
    AdagradState,
    ConfigurationError,
    CosineSchedule,
    ParamStore,
    Tensor,
    adagrad_step,
    no_grad,
    param_count,
    softplus,
    tanh,
    transpose,
)
from .invariant_samplers import RGraphC, RSetC, RSphereC
from .rlc_core import predict_majority, sgn
from .tasks import Dataset, Split

LOSS_SCALE = 4.0


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.5
    batch_size: int = 250
    max_epochs: int = 1000
    patience: int = 30
    amplification: int = 1000
    eval_majority_m: int = 1001
    seed: int = 0
    loss_scale: float = LOSS_SCALE
    temperature: float | None = None  # None: sqrt of the input dimension

    def __post_init__(self):
        if self.amplification < 1:
            raise ConfigurationError("amplification must be at least 1")
        if self.patience < 1:
            raise ConfigurationError("patience must be at least 1")
        if self.eval_majority_m < 1 or self.eval_majority_m % 2 == 0:
            raise ConfigurationError("eval_majority_m must be a positive odd count")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigurationError("batch_size and max_epochs must be positive")

    @property
    def schedule(self) -> CosineSchedule:
        return CosineSchedule(self.learning_rate, self.max_epochs)


@dataclass
class TrainReport:
    model: str
    train_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_acc: float = 0.0
    test_acc: float = float("nan")
    param_count: int = 0
    epochs_run: int = 0
    wall_clock: float = field(default=0.0, compare=False)

    def to_json(self) -> str:
        """Stable JSON record (keys sorted)."""
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainReport":
        return cls(**json.loads(text))


# -- models -----------------------------------------------------------------


SAMPLER_KINDS = {"rsetc": RSetC, "rgraphc": RGraphC, "rspherec": RSphereC}


def make_sampler(kind: str, size: int, arch: dict[str, Any], rng: np.random.Generator):
    if kind not in SAMPLER_KINDS:
        raise ConfigurationError(f"unknown sampler kind {kind!r}")
    return SAMPLER_KINDS[kind].create(size, rng=rng, **arch)


@dataclass
class RLCModel:
    sampler: Any

    name = "rlc"

    @property
    def params(self) -> ParamStore:
        return self.sampler.params

    def predict(self, ds: Dataset, m: int, seed: int, shared_draws: bool = True) -> np.ndarray:
        """Majority of ``m`` draws per row.

        With ``shared_draws`` one bank of ``m`` classifiers (seeded by ``seed``)
        votes on every row. Each row still sees ``m`` i.i.d. draws; rows are
        merely correlated. Otherwise row i uses its own stream ``(seed, i)``.
        """
        sampler = self.sampler.resized(ds.size) if ds.size != self.sampler.d else self.sampler
        X = ds.vectors()
        if shared_draws:
            A, b = sampler.sample_batch(np.random.default_rng([seed, 0]), m)
            plus = np.count_nonzero(X @ A.T - b >= 0.0, axis=1)
            return np.where(2 * plus >= m, 1, -1)
        return np.array([predict_majority(sampler, x, m, np.random.default_rng([seed, i])).label for i, x in enumerate(X)])


@dataclass
class BaselineModel:
    spec: DeepSetsSpec | GinSpec
    params: ParamStore

    def logits(self, inputs: np.ndarray) -> Tensor:
        if isinstance(self.spec, GinSpec):
            return gin_forward(self.spec, self.params, inputs)
        return deepsets_forward(self.spec, self.params, inputs)

    def predict(self, ds: Dataset, m: int = 1, seed: int = 0, shared_draws: bool = True) -> np.ndarray:
        with no_grad():
            return sgn(self.logits(ds.inputs).data)


@dataclass
class ConstantModel:
    label: int

    def predict(self, ds: Dataset, m: int = 1, seed: int = 0, shared_draws: bool = True) -> np.ndarray:
        return np.full(len(ds), self.label)


def evaluate(model, ds: Dataset, eval_majority_m: int = 1001, seed: int = 0, shared_draws: bool = True) -> float:
    """Fraction of rows whose hard prediction equals the label."""
    if len(ds) == 0:
        return float("nan")
    pred = model.predict(ds, eval_majority_m, seed, shared_draws)
    return float(np.mean(pred == ds.labels))


def fit_constant(train: Dataset) -> ConstantModel:
    """Majority training label; ties go to +1."""
    plus = int(np.sum(train.labels == 1))
    return ConstantModel(1 if 2 * plus >= len(train) else -1)


def constant_classifier_accuracy(ds: Dataset, fit_on: Dataset | None = None) -> float:
    """Accuracy of always predicting the majority label.

    Without ``fit_on`` this is max(#pos, #neg) / n on ``ds`` itself; with it
    the rule is fit on ``fit_on`` (normally the training split) and applied
    to ``ds``.
    """
    if len(ds) == 0:
        raise ConfigurationError("empty dataset")
    if fit_on is None:
        plus = int(np.sum(ds.labels == 1))
        return max(plus, len(ds) - plus) / len(ds)
    return evaluate(fit_constant(fit_on), ds)


# -- losses -----------------------------------------------------------------


def surrogate_score(sampler, X: np.ndarray, amplification: int, rng: np.random.Generator, temperature: float = 1.0) -> Tensor:
    """mean_j tanh((<a_j, x> - b_j) / temperature) over ``amplification`` fresh draws.

    The hard vote is unchanged by the temperature; it only keeps tanh out of
    saturation when the input has many nonzero entries.
    """
    if amplification < 1:
        raise ConfigurationError("amplification must be at least 1")
    if temperature <= 0:
        raise ConfigurationError("temperature must be positive")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    A, b = sampler.coefficients(sampler.draw_noise(rng, amplification))
    scores = Tensor(X) @ transpose(A) - b
    if temperature != 1.0:
        scores = scores * (1.0 / temperature)
    return tanh(scores).mean(axis=1)


def rlc_loss(score, label, scale: float = LOSS_SCALE) -> Tensor:
    """log(1 + exp(-label * scale * score)), elementwise."""
    score = score if isinstance(score, Tensor) else Tensor(score)
    y = np.asarray(label, dtype=np.float64)
    return softplus(score * Tensor(-scale * y))


def logistic_loss(logit: Tensor, label) -> Tensor:
    return softplus(logit * Tensor(-np.asarray(label, dtype=np.float64)))


# -- training loop ----------------------------------------------------------


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _fit(model, batch_loss, split: Split, cfg: TrainConfig, name: str) -> tuple[ParamStore, TrainReport]:
    params = model.params
    state = AdagradState(cfg.learning_rate)
    shuffle_rng = np.random.default_rng([cfg.seed, 2])
    noise_rng = np.random.default_rng([cfg.seed, 3])
    val_seed = cfg.seed * 1000 + 7
    report = TrainReport(name, param_count=param_count(params))
    best = params.copy()
    best_acc = -1.0
    since_best = 0
    t0 = time.perf_counter()
    for epoch in range(cfg.max_epochs):
        lr = cfg.schedule(epoch)
        total, count = 0.0, 0
        for idx in _batches(len(split.train), cfg.batch_size, shuffle_rng):
            params.zero_grad()
            loss = batch_loss(idx, noise_rng)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDiverged(f"{name}: non-finite loss {value} at epoch {epoch}")
            loss.backward()
            adagrad_step(params, params.grads(), state, lr=lr)
            total += value * len(idx)
            count += len(idx)
        report.train_loss.append(total / count)
        acc = evaluate(model, split.validation, cfg.eval_majority_m, val_seed)
        report.val_acc.append(acc)
        if acc > best_acc:
            best_acc, best, since_best = acc, params.copy(), 0
            report.best_epoch = epoch
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    report.epochs_run = len(report.val_acc)
    report.best_val_acc = best_acc
    params.load_flat(best.flat())
    report.test_acc = evaluate(model, split.test, cfg.eval_majority_m, cfg.seed * 1000 + 11)
    report.wall_clock = time.perf_counter() - t0
    return params, report


def train_rlc(split: Split, sampler_kind: str, arch: dict[str, Any] | None, cfg: TrainConfig) -> tuple[RLCModel, TrainReport]:
    """Mini-batch Adagrad on the smoothed RLC objective with early stopping.

    Returns the model holding the best-validation parameters.
    """
    arch = dict(arch or {})
    sampler = make_sampler(sampler_kind, split.train.size, arch, np.random.default_rng([cfg.seed, 1]))
    model = RLCModel(sampler)
    X = split.train.vectors()
    y = split.train.labels

    temperature = math.sqrt(X.shape[1]) if cfg.temperature is None else cfg.temperature

    def batch_loss(idx, rng):
        score = surrogate_score(sampler, X[idx], cfg.amplification, rng, temperature)
        return rlc_loss(score, y[idx], cfg.loss_scale).mean()

    _, report = _fit(model, batch_loss, split, cfg, sampler_kind)
    return model, report


def train_baseline(split: Split, spec: DeepSetsSpec | GinSpec, cfg: TrainConfig) -> tuple[BaselineModel, TrainReport]:
    """Same loop as :func:`train_rlc` with a logistic loss on the logit."""
    model = BaselineModel(spec, spec.init(np.random.default_rng([cfg.seed, 1])))
    inputs = split.train.inputs
    y = split.train.labels

    def batch_loss(idx, rng):
        return logistic_loss(model.logits(inputs[idx]), y[idx]).mean()

    name = "gin" if isinstance(spec, GinSpec) else "deepsets"
    _, report = _fit(model, batch_loss, split, cfg, name)
    return model, report
