"""Coefficient samplers whose weight distribution is invariant by construction.

* RSetC: shared noise u plus one noise per item; chunk i of the weights is
  f(u, u_i), so permuting items and their noises together changes nothing.
* RGraphC: shared, per-node and per-edge noises; weight (i, j) is
  f(u, u_i, u_j, u_ij). Relabeling vertices together with their noises
  leaves the score unchanged.
* RSphereC: a random scale times an i.i.d. standard normal vector, which is
  orthogonally invariant in distribution.

Every noise source is a scalar standard normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .diffcore import (
    ConfigurationError,
    MlpSpec,
    ParamStore,
    Tensor,
    init_mlp,
    mlp_forward,
    no_grad,
    param_count,
    scale_rows,
)
from .rlc_core import LinearClassifier, sample_one


def _hidden_widths(hidden: int | tuple[int, ...] | list[int]) -> tuple[int, ...]:
    return (hidden,) if isinstance(hidden, int) else tuple(hidden)


class _NoiseSampler:
    """Shared plumbing: differentiable ``coefficients(noise)`` plus a graph-free draw."""

    params: ParamStore

    def draw_noise(self, rng: np.random.Generator, m: int) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def coefficients(self, noise: dict[str, np.ndarray]) -> tuple[Tensor, Tensor]:
        raise NotImplementedError

    def sample_batch(self, rng: np.random.Generator, m: int) -> tuple[np.ndarray, np.ndarray]:
        noise = self.draw_noise(rng, m)
        with no_grad():
            A, b = self.coefficients(noise)
        return A.data, b.data

    def param_count(self) -> int:
        return param_count(self.params)


@dataclass(frozen=True)
class RSetC(_NoiseSampler):
    d: int
    k: int
    f: MlpSpec
    g: MlpSpec
    params: ParamStore

    def __post_init__(self):
        if self.f.in_width != 2 or self.g.in_width != 2:
            raise ConfigurationError("RSetC networks take (shared, own) noise pairs")
        if self.f.out_width != self.k or self.g.out_width != 1:
            raise ConfigurationError("RSetC f must output k weights and g one bias")

    @classmethod
    def create(cls, d: int, k: int = 1, hidden=5, rng: np.random.Generator | None = None, activation: str = "relu") -> "RSetC":
        rng = np.random.default_rng(0) if rng is None else rng
        h = _hidden_widths(hidden)
        f = MlpSpec((2, *h, k), activation)
        g = MlpSpec((2, *h, 1), activation)
        params = init_mlp(f, rng, prefix="f")
        init_mlp(g, rng, params, prefix="g")
        return cls(d, k, f, g, params)

    @property
    def dim(self) -> int:
        return self.d * self.k

    def resized(self, d: int) -> "RSetC":
        """Same networks and parameters, different set size."""
        return replace(self, d=d)

    def draw_noise(self, rng, m):
        u = rng.standard_normal(m)
        items = rng.standard_normal((m, self.d))
        ub = rng.standard_normal(m)
        return {"u": u, "items": items, "ub": ub}

    def coefficients(self, noise):
        u, items, ub = noise["u"], noise["items"], noise["ub"]
        m, d = items.shape
        pairs = np.stack([np.broadcast_to(u[:, None], (m, d)), items], axis=-1)
        A = mlp_forward(self.f, self.params, Tensor(pairs.reshape(m * d, 2)), "f").reshape(m, d * self.k)
        b = mlp_forward(self.g, self.params, Tensor(np.stack([u, ub], axis=-1)), "g").reshape(m)
        return A, b


@dataclass(frozen=True)
class RGraphC(_NoiseSampler):
    d: int
    f: MlpSpec
    g: MlpSpec
    params: ParamStore

    def __post_init__(self):
        if self.f.in_width != 4 or self.f.out_width != 1:
            raise ConfigurationError("RGraphC f maps (shared, node i, node j, edge) to one weight")
        if self.g.in_width != 2 or self.g.out_width != 1:
            raise ConfigurationError("RGraphC g maps (shared, bias noise) to one bias")

    @classmethod
    def create(cls, d: int, hidden=(2, 2, 2), rng: np.random.Generator | None = None, activation: str = "relu") -> "RGraphC":
        rng = np.random.default_rng(0) if rng is None else rng
        h = _hidden_widths(hidden)
        f = MlpSpec((4, *h, 1), activation)
        g = MlpSpec((2, *h, 1), activation)
        params = init_mlp(f, rng, prefix="f")
        init_mlp(g, rng, params, prefix="g")
        return cls(d, f, g, params)

    @property
    def dim(self) -> int:
        return self.d * self.d

    def resized(self, d: int) -> "RGraphC":
        return replace(self, d=d)

    def draw_noise(self, rng, m):
        d = self.d
        u = rng.standard_normal(m)
        nodes = rng.standard_normal((m, d))
        raw = rng.standard_normal((m, d, d))
        # one draw per unordered pair (diagonal included), mirrored
        upper = np.triu(raw)
        edges = upper + np.swapaxes(np.triu(raw, 1), 1, 2)
        ub = rng.standard_normal(m)
        return {"u": u, "nodes": nodes, "edges": edges, "ub": ub}

    def coefficients(self, noise):
        u, nodes, edges, ub = noise["u"], noise["nodes"], noise["edges"], noise["ub"]
        m, d = nodes.shape
        quad = np.empty((m, d, d, 4))
        quad[..., 0] = u[:, None, None]
        quad[..., 1] = nodes[:, :, None]
        quad[..., 2] = nodes[:, None, :]
        quad[..., 3] = edges
        A = mlp_forward(self.f, self.params, Tensor(quad.reshape(m * d * d, 4)), "f").reshape(m, d * d)
        b = mlp_forward(self.g, self.params, Tensor(np.stack([u, ub], axis=-1)), "g").reshape(m)
        return A, b


@dataclass(frozen=True)
class RSphereC(_NoiseSampler):
    d: int
    f: MlpSpec
    g: MlpSpec
    params: ParamStore

    def __post_init__(self):
        if self.f.in_width != 2 or self.f.out_width != 1:
            raise ConfigurationError("RSphereC f maps (shared, scale noise) to one scale")
        if self.g.in_width != 2 or self.g.out_width != 1:
            raise ConfigurationError("RSphereC g maps (shared, bias noise) to one bias")

    @classmethod
    def create(cls, d: int, hidden=5, rng: np.random.Generator | None = None, activation: str = "relu") -> "RSphereC":
        rng = np.random.default_rng(0) if rng is None else rng
        h = _hidden_widths(hidden)
        f = MlpSpec((2, *h, 1), activation)
        g = MlpSpec((2, *h, 1), activation)
        params = init_mlp(f, rng, prefix="f")
        init_mlp(g, rng, params, prefix="g")
        return cls(d, f, g, params)

    @property
    def dim(self) -> int:
        return self.d

    def resized(self, d: int) -> "RSphereC":
        return replace(self, d=d)

    def draw_noise(self, rng, m):
        u = rng.standard_normal(m)
        ua = rng.standard_normal(m)
        gauss = rng.standard_normal((m, self.d))
        ub = rng.standard_normal(m)
        return {"u": u, "ua": ua, "gauss": gauss, "ub": ub}

    def coefficients(self, noise):
        u, ua, gauss, ub = noise["u"], noise["ua"], noise["gauss"], noise["ub"]
        m = u.shape[0]
        scale = mlp_forward(self.f, self.params, Tensor(np.stack([u, ua], axis=-1)), "f").reshape(m)
        A = scale_rows(scale, Tensor(gauss))
        b = mlp_forward(self.g, self.params, Tensor(np.stack([u, ub], axis=-1)), "g").reshape(m)
        return A, b


def rsetc_sample(spec: RSetC, rng: np.random.Generator) -> LinearClassifier:
    return sample_one(spec, rng)


def rgraphc_sample(spec: RGraphC, rng: np.random.Generator) -> LinearClassifier:
    return sample_one(spec, rng)


def rspherec_sample(spec: RSphereC, rng: np.random.Generator) -> LinearClassifier:
    return sample_one(spec, rng)


# -- coupling checks --------------------------------------------------------


def _rowwise(spec: MlpSpec, params: ParamStore, rows: np.ndarray, prefix: str) -> np.ndarray:
    # one row per call, so a value cannot depend on its position in a batch
    with no_grad():
        return np.stack([mlp_forward(spec, params, Tensor(r[None, :]), prefix).data[0] for r in rows])


def exact_score(a: np.ndarray, x: np.ndarray, b: float) -> float:
    """<a, x> - b with a correctly rounded, order-independent sum."""
    return math.fsum((np.asarray(a) * np.asarray(x)).tolist()) - b


def _check_perm(perm, d: int) -> np.ndarray:
    p = np.asarray(perm)
    if p.shape != (d,) or sorted(p.tolist()) != list(range(d)):
        raise ConfigurationError(f"not a permutation of range({d}): {perm!r}")
    return p.astype(int)


def _set_score(spec: RSetC, noise: dict, x: np.ndarray) -> float:
    u, items, ub = noise["u"][0], noise["items"][0], noise["ub"][0]
    a = _rowwise(spec.f, spec.params, np.column_stack([np.full(spec.d, u), items]), "f").reshape(-1)
    b = _rowwise(spec.g, spec.params, np.array([[u, ub]]), "g")[0, 0]
    return exact_score(a, x, b)


def _graph_score(spec: RGraphC, noise: dict, x: np.ndarray) -> float:
    d = spec.d
    u, nodes, edges, ub = noise["u"][0], noise["nodes"][0], noise["edges"][0], noise["ub"][0]
    ii, jj = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    quad = np.column_stack([np.full(d * d, u), nodes[ii.ravel()], nodes[jj.ravel()], edges.ravel()])
    a = _rowwise(spec.f, spec.params, quad, "f").reshape(-1)
    b = _rowwise(spec.g, spec.params, np.array([[u, ub]]), "g")[0, 0]
    return exact_score(a, x, b)


def coupling_invariance_check(kind: str, spec, x, group_element, seed: int, m: int = 10_000, alpha: float = 0.01) -> bool:
    """Check that acting on the input is matched by acting on the noise.

    For ``"set"`` and ``"graph"`` one noise draw is taken; the score of
    ``g . x`` under the permuted noise must equal the score of ``x`` under
    the original noise bit for bit. For ``"sphere"`` ``group_element`` is an
    orthogonal matrix and the verdict is a two-sample Kolmogorov-Smirnov
    test on the score distributions at ``x`` and ``Q x``.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if kind == "set":
        perm = _check_perm(group_element, spec.d)
        noise = spec.draw_noise(rng, 1)
        gx = x.reshape(spec.d, spec.k)[perm].reshape(-1)
        moved = dict(noise, items=noise["items"][:, perm])
        return _set_score(spec, moved, gx) == _set_score(spec, noise, x)
    if kind == "graph":
        perm = _check_perm(group_element, spec.d)
        noise = spec.draw_noise(rng, 1)
        gx = x.reshape(spec.d, spec.d)[np.ix_(perm, perm)].reshape(-1)
        moved = dict(
            noise,
            nodes=noise["nodes"][:, perm],
            edges=noise["edges"][:, perm][:, :, perm],
        )
        return _graph_score(spec, moved, gx) == _graph_score(spec, noise, x)
    if kind == "sphere":
        Q = np.asarray(group_element, dtype=np.float64)
        if Q.shape != (spec.d, spec.d) or not np.allclose(Q.T @ Q, np.eye(spec.d), atol=1e-9):
            raise ConfigurationError("group element must be an orthogonal d x d matrix")
        A, b = spec.sample_batch(rng, m)
        A2, b2 = spec.sample_batch(rng, m)
        return bool(stats.ks_2samp(A @ x - b, A2 @ (Q @ x) - b2).pvalue > alpha)
    raise ConfigurationError(f"unknown sampler kind {kind!r}")


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    return stats.ortho_group.rvs(d, random_state=rng) if d > 1 else np.array([[rng.choice([-1.0, 1.0])]])
