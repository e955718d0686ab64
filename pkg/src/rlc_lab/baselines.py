"""Deterministic invariant baselines: Deep Sets and a sum-readout GIN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import (
    ConfigurationError,
    MlpSpec,
    ParamStore,
    Tensor,
    init_mlp,
    mlp_forward,
    neighbor_sum,
    pool_sum,
    reshape,
)


@dataclass(frozen=True)
class DeepSetsSpec:
    """rho(sum_i phi(x_i)); ``depth`` hidden layers of width ``hidden`` in each net."""

    k: int = 1
    hidden: int = 5
    depth: int = 1
    activation: str = "relu"

    @property
    def phi(self) -> MlpSpec:
        return MlpSpec((self.k, *[self.hidden] * self.depth, self.hidden), self.activation)

    @property
    def rho(self) -> MlpSpec:
        return MlpSpec((self.hidden, *[self.hidden] * self.depth, 1), self.activation)

    def init(self, rng: np.random.Generator) -> ParamStore:
        params = init_mlp(self.phi, rng, prefix="phi")
        return init_mlp(self.rho, rng, params, prefix="rho")


def deepsets_forward(spec: DeepSetsSpec, params: ParamStore, set_input) -> Tensor:
    """Logits for a batch of sets (B, d, k), or one set (d, k) / (d,) for k = 1."""
    x = set_input if isinstance(set_input, Tensor) else Tensor(np.asarray(set_input, dtype=np.float64))
    single = False
    if x.data.ndim == 1:
        x = reshape(x, (1, -1, 1)) if spec.k == 1 else reshape(x, (1, -1, spec.k))
        single = True
    elif x.data.ndim == 2:
        # (B, d) with k = 1, or a single (d, k) set
        if spec.k == 1:
            x = reshape(x, (*x.shape, 1))
        else:
            x = reshape(x, (1, *x.shape))
            single = True
    if x.shape[-1] != spec.k:
        raise ConfigurationError(f"items have width {x.shape[-1]}, phi expects {spec.k}")
    z = mlp_forward(spec.phi, params, x, "phi")
    pooled = pool_sum(z, axis=1)
    logit = mlp_forward(spec.rho, params, pooled, "rho").reshape(pooled.shape[0])
    return logit.reshape(()) if single else logit


@dataclass(frozen=True)
class GinSpec:
    num_layers: int = 3
    hidden: int = 2
    activation: str = "relu"

    def node_mlp(self, layer: int) -> MlpSpec:
        width_in = 1 if layer == 0 else self.hidden
        return MlpSpec((width_in, self.hidden, self.hidden), self.activation)

    @property
    def readout(self) -> MlpSpec:
        return MlpSpec((self.hidden, 1), "identity")

    def init(self, rng: np.random.Generator) -> ParamStore:
        params = ParamStore()
        for layer in range(self.num_layers):
            init_mlp(self.node_mlp(layer), rng, params, prefix=f"gin{layer}")
            params[f"eps{layer}"] = Tensor(0.0)
        return init_mlp(self.readout, rng, params, prefix="readout")


def gin_forward(spec: GinSpec, params: ParamStore, graph) -> Tensor:
    """Logits for a batch of adjacency matrices (B, n, n), or a single (n, n).

    Node features start at the constant 1; each layer computes
    MLP((1 + eps) h_v + sum_{u in N(v)} h_u); readout is linear in sum_v h_v.
    """
    adj = graph.adjacency if hasattr(graph, "adjacency") else graph
    adj = np.asarray(adj, dtype=np.float64)
    single = adj.ndim == 2
    if single:
        adj = adj[None]
    B, n, _ = adj.shape
    h = Tensor(np.ones((B, n, 1)))
    for layer in range(spec.num_layers):
        mixed = h * (1.0 + params[f"eps{layer}"]) + neighbor_sum(adj, h)
        h = mlp_forward(spec.node_mlp(layer), params, mixed, f"gin{layer}")
    pooled = pool_sum(h, axis=1)
    logit = mlp_forward(spec.readout, params, pooled, "readout").reshape(B)
    return logit.reshape(()) if single else logit


def k33() -> np.ndarray:
    adj = np.zeros((6, 6), dtype=np.int8)
    adj[:3, 3:] = 1
    return adj | adj.T


def prism() -> np.ndarray:
    """Triangular prism: two triangles joined by a perfect matching."""
    adj = np.zeros((6, 6), dtype=np.int8)
    for a, b in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (0, 3), (1, 4), (2, 5)]:
        adj[a, b] = adj[b, a] = 1
    return adj
