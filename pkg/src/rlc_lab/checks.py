"""Non-training property suite behind ``rlc-lab verify``."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .baselines import GinSpec, gin_forward, k33, prism
from .diffcore import (
    MlpSpec,
    ParamStore,
    Tensor,
    finite_difference_grads,
    init_mlp,
    max_relative_error,
    mlp_forward,
    no_grad,
)
from .invariant_samplers import RGraphC, RSetC, RSphereC, coupling_invariance_check
from .rlc_core import (
    DiscreteSampler,
    SignUnit,
    certificate_sampler,
    from_sign_network,
    hoeffding_bound,
    predict_majority,
    sgn,
    sign_network,
)
from .tasks import all_graphs, enumerate_spanning_trees, complete_graph, is_connected, tree_threshold
from .training import surrogate_score


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.1f}s)"


# -- gradient checks --------------------------------------------------------

MLP_SHAPES = [(3, 4, 1), (2, 5, 5, 2), (4, 3, 3, 3, 1)]


def _autodiff(loss: Callable[[], Tensor], params: ParamStore, fault: float) -> dict[str, np.ndarray]:
    params.zero_grad()
    loss().backward()
    grads = params.grads()
    if fault:
        grads = {k: g * (1.0 + fault) + fault for k, g in grads.items()}
    return grads


def mlp_gradient_error(seed: int = 0, fault: float = 0.0) -> float:
    """Worst relative error over a few MLP shapes and activations."""
    rng = np.random.default_rng([seed, 100])
    worst = 0.0
    for widths in MLP_SHAPES:
        for act in ("relu", "tanh", "identity"):
            spec = MlpSpec(widths, act)
            params = init_mlp(spec, rng)
            x = rng.standard_normal((6, widths[0]))
            target = rng.standard_normal((6, widths[-1]))

            def loss():
                diff = mlp_forward(spec, params, Tensor(x)) - Tensor(target)
                return (diff * diff).mean()

            auto = _autodiff(loss, params, fault)
            with no_grad():
                fd = finite_difference_grads(lambda: float(loss().data), params)
            worst = max(worst, max_relative_error(auto, fd))
    return worst


def surrogate_gradient_error(seed: int = 0, fault: float = 0.0) -> dict[str, float]:
    """Relative error of d surrogate_score / d params for each invariant sampler."""
    rng = np.random.default_rng([seed, 101])
    samplers = {
        "rsetc": RSetC.create(5, rng=rng),
        "rgraphc": RGraphC.create(4, rng=rng),
        "rspherec": RSphereC.create(3, rng=rng),
    }
    out = {}
    for name, sampler in samplers.items():
        X = rng.standard_normal((4, sampler.dim))
        y = np.where(rng.random(4) < 0.5, 1.0, -1.0)
        noise_seed = int(rng.integers(2**31))

        def loss():
            # fresh generator each call: the finite differences see the same noise
            s = surrogate_score(sampler, X, 16, np.random.default_rng(noise_seed))
            return (s * Tensor(y)).mean()

        auto = _autodiff(loss, sampler.params, fault)
        with no_grad():
            fd = finite_difference_grads(lambda: float(loss().data), sampler.params)
        out[name] = max_relative_error(auto, fd)
    return out


# -- invariance -------------------------------------------------------------


def set_coupling_failures(seed: int = 0, sizes=(5, 9), n_perms: int = 100) -> int:
    rng = np.random.default_rng([seed, 102])
    failures = 0
    for d in sizes:
        spec = RSetC.create(d, rng=rng)
        for t in range(n_perms):
            x = rng.standard_normal(d)
            if not coupling_invariance_check("set", spec, x, rng.permutation(d), seed=int(rng.integers(2**31))):
                failures += 1
    return failures


def graph_coupling_failures(seed: int = 0, n: int = 4) -> int:
    rng = np.random.default_rng([seed, 103])
    spec = RGraphC.create(n, rng=rng)
    failures = 0
    for perm in itertools.permutations(range(n)):
        upper = np.triu(rng.random((n, n)) < 0.5, 1)
        x = (upper | upper.T).astype(np.float64).reshape(-1)
        if not coupling_invariance_check("graph", spec, x, np.array(perm), seed=int(rng.integers(2**31))):
            failures += 1
    return failures


def gin_regular_pair_identical(seed: int = 0, draws: int = 20) -> int:
    """Number of parameter draws where GIN logits on K33 and the prism are bit-identical."""
    spec = GinSpec()
    same = 0
    for t in range(draws):
        params = spec.init(np.random.default_rng([seed, 104, t]))
        with no_grad():
            a = gin_forward(spec, params, k33()).data
            b = gin_forward(spec, params, prism()).data
        same += int(np.array_equal(a, b))
    return same


# -- sign networks ----------------------------------------------------------


def random_sign_network(rng: np.random.Generator, units: int = 5, dim: int = 2) -> list[SignUnit]:
    return [SignUnit(rng.standard_normal(dim), float(rng.standard_normal()), float(rng.standard_normal())) for _ in range(units)]


def sign_network_grid_check(seed: int = 0, nets: int = 10, m: int = 100_000, grid: int = 10) -> tuple[int, int]:
    """(mismatches, points checked) at grid points with a resolvable margin."""
    rng = np.random.default_rng([seed, 105])
    axis = np.linspace(-2.0, 2.0, grid)
    mismatches = checked = 0
    for _ in range(nets):
        units = random_sign_network(rng)
        sampler = from_sign_network(units)
        for x in itertools.product(axis, axis):
            pred = predict_majority(sampler, np.array(x), m, rng)
            if abs(pred.p_hat - 0.5) <= 3.0 / math.sqrt(m):
                continue
            checked += 1
            mismatches += int(pred.label != sgn(sign_network(units, np.array(x))))
    return mismatches, checked


# -- certificates -----------------------------------------------------------


def connectivity_certificate(n: int, gamma: float):
    """Certificate sampler over uniform spanning trees of K_n."""
    trees = np.array(enumerate_spanning_trees(complete_graph(n)))
    return certificate_sampler(trees, tree_threshold(n), gamma), trees


def certificate_table(gamma: float, seed: int = 0, draws: int = 100_000, n: int = 4) -> list[dict]:
    """Exact and empirical success probabilities for every labeled graph on n vertices."""
    sampler, trees = connectivity_certificate(n, gamma)
    rng = np.random.default_rng([seed, 106])
    rows = []
    for adj in all_graphs(n):
        x = adj.reshape(-1).astype(np.float64)
        label = is_connected(adj)
        hit = float(np.mean(trees @ x >= sampler.threshold))
        exact = sampler.success_probability(hit, label)
        pred = predict_majority(sampler, x, draws, rng)
        empirical = pred.p_hat if label == 1 else 1.0 - pred.p_hat
        se = math.sqrt(exact * (1 - exact) / draws)
        rows.append({"label": label, "hit": hit, "exact": exact, "empirical": empirical, "se": se})
    return rows


def z_score(row: dict) -> float:
    """|empirical - exact| in standard errors; a degenerate exact value must be hit exactly."""
    diff = abs(row["empirical"] - row["exact"])
    if row["se"] == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / row["se"]


def max_safe_gamma(min_hit: float) -> float:
    """Largest gamma (exclusive) for which a connected graph with hit probability min_hit is still decided correctly."""
    # 1/2 - g + h (1/2 + g) > 1/2  <=>  g < h / (2 (1 - h))
    return min_hit / (2.0 * (1.0 - min_hit))


# -- amplification ----------------------------------------------------------


def bernoulli_vote_sampler(epsilon: float) -> DiscreteSampler:
    """On x = [1] votes +1 with probability 1/2 + epsilon."""
    return DiscreteSampler(np.array([[1.0], [-1.0]]), np.zeros(2), np.array([0.5 + epsilon, 0.5 - epsilon]))


def majority_error_rates(epsilon: float = 0.1, ms=(11, 101, 1001), reps: int = 10_000, seed: int = 0) -> dict[int, float]:
    sampler = bernoulli_vote_sampler(epsilon)
    rng = np.random.default_rng([seed, 107])
    x = np.array([1.0])
    out = {}
    for m in ms:
        wrong = 0
        per_chunk = max(1, 2_000_000 // m)
        left = reps
        while left:
            r = min(left, per_chunk)
            A, b = sampler.sample_batch(rng, r * m)
            plus = np.count_nonzero((A @ x - b >= 0).reshape(r, m), axis=1)
            wrong += int(np.count_nonzero(2 * plus < m))
            left -= r
        out[m] = wrong / reps
    return out


# -- suite ------------------------------------------------------------------


def _timed(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    t0 = time.perf_counter()
    ok, detail = fn()
    return CheckResult(name, bool(ok), detail, time.perf_counter() - t0)


def verify(seed: int = 0, inject_gradient_fault: float = 0.0, quick: bool = False) -> list[CheckResult]:
    """Run every non-training property check; ``inject_gradient_fault`` perturbs autodiff output."""
    fault = inject_gradient_fault
    m_sign = 20_000 if quick else 100_000
    draws = 20_000 if quick else 100_000

    def grad_mlp():
        err = mlp_gradient_error(seed, fault)
        return err < 1e-4, f"max relative error {err:.2e} (< 1e-4)"

    def grad_surrogate():
        errs = surrogate_gradient_error(seed, fault)
        worst = max(errs.values())
        return worst < 1e-3, ", ".join(f"{k} {v:.2e}" for k, v in errs.items()) + " (< 1e-3)"

    def set_coupling():
        f = set_coupling_failures(seed)
        return f == 0, f"{f} failures over 2 x 100 permutations"

    def graph_coupling():
        f = graph_coupling_failures(seed)
        return f == 0, f"{f} failures over all 24 permutations of 4 vertices"

    def sign_grid():
        bad, checked = sign_network_grid_check(seed, m=m_sign)
        return bad == 0 and checked > 0, f"{bad} mismatches at {checked} resolvable grid points"

    def cert():
        # the property is stated for gamma below the margin left by the rarest certificate
        min_hit = min(r["hit"] for r in certificate_table(0.01, seed, 1) if r["label"] == 1)
        gamma = 0.9 * max_safe_gamma(min_hit)
        rows = certificate_table(gamma, seed, draws)
        worst_z = max(z_score(r) for r in rows)
        lowest = min(r["exact"] for r in rows)
        return worst_z < 3.0 and lowest > 0.5, f"gamma={gamma:.4f}: min exact {lowest:.4f} > 0.5, max |z| {worst_z:.2f} < 3 over 64 graphs"

    def hoeffding():
        rates = majority_error_rates(seed=seed)
        ok = all(rates[m] <= math.exp(-2 * 0.01 * m) for m in rates)
        parts = [f"m={m}: {r:.4f} <= {1 - hoeffding_bound(0.1, m).standard_form:.4f}" for m, r in rates.items()]
        return ok, "; ".join(parts)

    def gin_pair():
        same = gin_regular_pair_identical(seed)
        return same == 20, f"{same}/20 draws bit-identical on K33 vs prism"

    checks = [
        ("gradient.mlp", grad_mlp),
        ("gradient.surrogate", grad_surrogate),
        ("coupling.sets", set_coupling),
        ("coupling.graphs", graph_coupling),
        ("sign_network.grid", sign_grid),
        ("certificate.n4", cert),
        ("hoeffding.standard", hoeffding),
        ("gin.regular_pair", gin_pair),
    ]
    return [_timed(name, fn) for name, fn in checks]
