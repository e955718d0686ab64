"""Randomized linear classifiers.

A coefficient sampler produces draws ``(a, b)``; one draw predicts
``sgn(<a, x> - b)`` and ``m`` draws predict by majority. ``sgn(0)`` is +1
everywhere in this package, and majority ties also go to +1.

Samplers are immutable. Every draw consumes a caller-owned
``numpy.random.Generator``, so results are reproducible from a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .diffcore import ConfigurationError, MlpSpec, ParamStore, Tensor, mlp_forward, no_grad


def sgn(z):
    """Sign with sgn(0) = +1; works on scalars and arrays."""
    if np.ndim(z) == 0:
        return 1 if z >= 0 else -1
    return np.where(np.asarray(z) >= 0, 1, -1)


@dataclass(frozen=True)
class LinearClassifier:
    a: np.ndarray
    b: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        if a.size == 0:
            raise ConfigurationError("a linear classifier needs d > 0")
        if not (np.all(np.isfinite(a)) and math.isfinite(self.b)):
            raise ConfigurationError("non-finite classifier coefficients")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.a.size


class CoefficientSampler(Protocol):
    """Pushforward of input-independent noise onto linear-classifier coefficients."""

    dim: int

    def sample_batch(self, rng: np.random.Generator, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``m`` i.i.d. draws as ``(A, b)`` with ``A.shape == (m, dim)``."""
        ...


def sample_one(sampler: CoefficientSampler, rng: np.random.Generator) -> LinearClassifier:
    A, b = sampler.sample_batch(rng, 1)
    return LinearClassifier(A[0], float(b[0]))


def predict_once(lc: LinearClassifier, x) -> int:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != lc.dim:
        raise ConfigurationError(f"input has dimension {x.size}, classifier has {lc.dim}")
    return sgn(float(lc.a @ x) - lc.b)


@dataclass(frozen=True)
class AmplifiedPrediction:
    votes_plus: int
    votes_minus: int

    @property
    def m(self) -> int:
        return self.votes_plus + self.votes_minus

    @property
    def label(self) -> int:
        return 1 if self.votes_plus >= self.votes_minus else -1

    @property
    def p_hat(self) -> float:
        return self.votes_plus / self.m

    @property
    def std_error(self) -> float:
        p = self.p_hat
        return math.sqrt(p * (1.0 - p) / self.m)


def _draw_votes(sampler: CoefficientSampler, x: np.ndarray, m: int, rng: np.random.Generator, chunk: int = 50_000) -> int:
    plus = 0
    left = m
    while left > 0:
        n = min(left, chunk)
        A, b = sampler.sample_batch(rng, n)
        plus += int(np.count_nonzero(A @ x - b >= 0.0))
        left -= n
    return plus


def predict_majority(sampler: CoefficientSampler, x, m: int, rng: np.random.Generator) -> AmplifiedPrediction:
    if m < 1:
        raise ConfigurationError("m must be at least 1")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != sampler.dim:
        raise ConfigurationError(f"input has dimension {x.size}, sampler has {sampler.dim}")
    plus = _draw_votes(sampler, x, m, rng)
    return AmplifiedPrediction(plus, m - plus)


def estimate_limiting(sampler: CoefficientSampler, x, m: int, rng: np.random.Generator) -> tuple[int, float]:
    """Monte-Carlo estimate of the limiting classifier's label and P(+1)."""
    pred = predict_majority(sampler, x, m, rng)
    return pred.label, pred.p_hat


@dataclass(frozen=True)
class BiasEstimate:
    epsilon_hat: float
    margins: np.ndarray = field(repr=False)


def estimate_min_bias(sampler: CoefficientSampler, inputs: Iterable, m: int, rng: np.random.Generator) -> BiasEstimate:
    """Smallest |p_hat(x) - 1/2| over a finite evaluation set.

    A prediction takes values in {-1, +1}. Its total-variation distance to a
    Rademacher variable is (|p - 1/2| + |(1 - p) - 1/2|) / 2 = |p - 1/2|, so
    the per-input margin is exactly that distance.
    """
    margins = [abs(estimate_limiting(sampler, x, m, rng)[1] - 0.5) for x in inputs]
    if not margins:
        raise ConfigurationError("need at least one input")
    arr = np.asarray(margins)
    return BiasEstimate(float(arr.min()), arr)


@dataclass(frozen=True)
class HoeffdingBound:
    squared_form: float
    standard_form: float


def hoeffding_bound(epsilon: float, m: int) -> HoeffdingBound:
    """Lower bounds on P(majority of m votes == limiting label).

    ``standard_form`` is 1 - exp(-2 eps^2 m), what Hoeffding's inequality
    gives for m i.i.d. votes with bias eps. ``squared_form`` uses exponent
    -2 eps^2 m^2 (exponent quadratic in m); it is reported for
    comparison but is not a valid bound in general.
    """
    if not 0.0 <= epsilon <= 0.5:
        raise ConfigurationError("epsilon must lie in [0, 0.5]")
    if m < 1:
        raise ConfigurationError("m must be at least 1")
    return HoeffdingBound(
        squared_form=1.0 - math.exp(-2.0 * epsilon**2 * m**2),
        standard_form=1.0 - math.exp(-2.0 * epsilon**2 * m),
    )


# -- concrete samplers ------------------------------------------------------


@dataclass(frozen=True)
class FixedSampler:
    """Always emits the same classifier."""

    a: np.ndarray
    b: float = 0.0

    @property
    def dim(self) -> int:
        return int(np.asarray(self.a).size)

    def sample_batch(self, rng, m):
        a = np.asarray(self.a, dtype=np.float64).reshape(1, -1)
        return np.repeat(a, m, axis=0), np.full(m, float(self.b))


@dataclass(frozen=True)
class DiscreteSampler:
    """Draws row ``j`` of ``(weights, biases)`` with probability ``probs[j]``."""

    weights: np.ndarray
    biases: np.ndarray
    probs: np.ndarray

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def sample_batch(self, rng, m):
        idx = rng.choice(len(self.probs), size=m, p=self.probs)
        return self.weights[idx], self.biases[idx]


@dataclass(frozen=True)
class HyperSampler:
    """Generic hypernetwork: noise in R^noise_dim -> (a, b) in R^(d+1)."""

    spec: MlpSpec
    params: ParamStore
    prefix: str = "hyper"

    @property
    def dim(self) -> int:
        return self.spec.out_width - 1

    @property
    def noise_dim(self) -> int:
        return self.spec.in_width

    def coefficients(self, noise: np.ndarray) -> tuple[Tensor, Tensor]:
        out = mlp_forward(self.spec, self.params, Tensor(noise), self.prefix)
        d = self.dim
        # split columns via fixed selection matrices so both halves stay on the tape
        sel_a = np.eye(d + 1, d)
        sel_b = np.zeros((d + 1, 1))
        sel_b[d, 0] = 1.0
        A = out @ Tensor(sel_a)
        b = (out @ Tensor(sel_b)).reshape(out.shape[0])
        return A, b

    def sample_batch(self, rng, m):
        noise = rng.standard_normal((m, self.noise_dim))
        with no_grad():
            A, b = self.coefficients(noise)
        return A.data, b.data


@dataclass(frozen=True)
class SignUnit:
    w: np.ndarray
    b: float
    o: float


def sign_network(units: Sequence[SignUnit], x) -> float:
    """N(x) = sum_j o_j sgn(<w_j, x> - b_j)."""
    x = np.asarray(x, dtype=np.float64)
    return float(sum(u.o * sgn(float(np.asarray(u.w) @ x) - u.b) for u in units))


def from_sign_network(units: Sequence[SignUnit | tuple]) -> DiscreteSampler:
    """Sampler whose limiting classifier equals sgn(N) for a one-hidden-layer sign network.

    Each unit is reflected so its output weight is nonnegative; then unit j
    is drawn with probability |o_j| / sum |o_k|.
    """
    units = [u if isinstance(u, SignUnit) else SignUnit(*u) for u in units]
    if not units:
        raise ConfigurationError("need at least one unit")
    o = np.array([u.o for u in units], dtype=np.float64)
    if not np.any(o != 0.0):
        raise ConfigurationError("all output weights are zero")
    flips = np.where(o >= 0.0, 1.0, -1.0)
    W = np.stack([np.asarray(u.w, dtype=np.float64).reshape(-1) for u in units]) * flips[:, None]
    b = np.array([u.b for u in units], dtype=np.float64) * flips
    probs = np.abs(o) / np.abs(o).sum()
    return DiscreteSampler(W, b, probs)


@dataclass(frozen=True)
class CertificateSampler:
    """Randomized verifier for an inner-product decidable property.

    With t ~ Bernoulli(1/2 + gamma) and s drawn from the certificate support,
    emits a = t*s and b = t*threshold, i.e. predicts sgn(t * (<s, x> - threshold)).
    """

    support: Callable[[np.random.Generator, int], np.ndarray]
    threshold: float
    gamma: float
    dim: int

    def __post_init__(self):
        if not 0.0 < self.gamma < 0.5:
            raise ConfigurationError("gamma must lie in (0, 0.5)")

    def sample_batch(self, rng, m):
        t = (rng.random(m) < 0.5 + self.gamma).astype(np.float64)
        S = np.asarray(self.support(rng, m), dtype=np.float64)
        if S.shape != (m, self.dim):
            raise ConfigurationError(f"support sampler returned {S.shape}, expected {(m, self.dim)}")
        return S * t[:, None], t * self.threshold

    def success_probability(self, hit_probability: float, label: int) -> float:
        """Exact P(correct) given P(<s, x> >= threshold) under the support distribution."""
        if label == 1:
            return 0.5 - self.gamma + hit_probability * (0.5 + self.gamma)
        # t = 1 is needed to emit -1, and then <s, x> < threshold holds for every s
        return 0.5 + self.gamma


def certificate_sampler(support, threshold: float, gamma: float, dim: int | None = None) -> CertificateSampler:
    """Build a :class:`CertificateSampler`.

    ``support`` is either a callable ``(rng, m) -> (m, dim)`` array or a finite
    collection of vectors drawn uniformly.
    """
    if callable(support):
        if dim is None:
            raise ConfigurationError("dim is required with a callable support")
        return CertificateSampler(support, float(threshold), float(gamma), int(dim))
    return CertificateSampler(uniform_support(support), float(threshold), float(gamma), int(np.asarray(support).shape[1]))


def uniform_support(vectors) -> Callable[[np.random.Generator, int], np.ndarray]:
    vecs = np.asarray(vectors, dtype=np.float64)
    if vecs.ndim != 2 or len(vecs) == 0:
        raise ConfigurationError("support must be a nonempty list of vectors")

    def draw(rng: np.random.Generator, m: int) -> np.ndarray:
        return vecs[rng.integers(len(vecs), size=m)]

    return draw
