"""Synthetic tasks: sorting and sign on sets, connectivity on G(n, p) graphs."""

from __future__ import annotations

import io
import itertools
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffcore import ConfigurationError
from .rlc_core import sgn

DEFAULT_SIZES = (1000, 100, 100)


def _require_odd(d: int) -> None:
    if d < 1 or d % 2 == 0:
        raise ConfigurationError(f"set size must be odd, got {d}")


def label_sorting(x) -> int:
    """sgn(x_(1) - x_(2) + x_(3) - ...) over the ascending order statistics."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    _require_odd(x.size)
    w = np.where(np.arange(x.size) % 2 == 0, 1.0, -1.0)
    return sgn(float(np.sort(x) @ w))


def label_sign(x) -> int:
    """Sign of (#positive - #negative) coordinates; zeros count as positive."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    _require_odd(x.size)
    return sgn(int(np.sum(sgn(x))))


SET_ORACLES = {"sorting": label_sorting, "sign": label_sign}


@dataclass
class Dataset:
    """``inputs`` is (N, d) for sets and (N, n, n) adjacency for graphs."""

    kind: str
    size: int
    inputs: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def is_graph(self) -> bool:
        return self.kind == "graph"

    def vectors(self) -> np.ndarray:
        """Rows as flat vectors (vectorized adjacency for graphs)."""
        return self.inputs.reshape(len(self.inputs), -1)

    def base_rate(self) -> float:
        return float(np.mean(self.labels == 1)) if len(self) else 0.0


@dataclass
class Split:
    train: Dataset
    validation: Dataset
    test: Dataset


@dataclass(frozen=True)
class GraphSample:
    n: int
    adjacency: np.ndarray
    label: int | None = None

    def vec(self) -> np.ndarray:
        return self.adjacency.reshape(-1).astype(np.float64)


def unvec(v, n: int) -> np.ndarray:
    return np.asarray(v, dtype=np.float64).reshape(n, n)


def _set_dataset(task: str, d: int, n: int, rng: np.random.Generator) -> Dataset:
    oracle = SET_ORACLES[task]
    X = rng.standard_normal((n, d))
    y = np.array([oracle(row) for row in X], dtype=np.int64)
    return Dataset(task, d, X, y)


def gen_set_dataset(task: str, d: int, sizes=DEFAULT_SIZES, seed: int = 0, ood_size: int | None = None) -> Split:
    """i.i.d. N(0, 1) sets labeled by the task oracle.

    With ``ood_size`` the test split uses sets of that size instead of ``d``.
    """
    if task not in SET_ORACLES:
        raise ConfigurationError(f"unknown set task {task!r}")
    _require_odd(d)
    rng = np.random.default_rng([seed, 0])
    n_tr, n_va, n_te = sizes
    train = _set_dataset(task, d, n_tr, rng)
    val = _set_dataset(task, d, n_va, rng)
    test_d = d if ood_size is None else ood_size
    _require_odd(test_d)
    test = _set_dataset(task, test_d, n_te, rng)
    return Split(train, val, test)


def ood_set_size(d: int) -> int:
    """Smallest odd size that is at least twice ``d``.

    The sorting label is constant (-1) on even sizes, so a literal 2d would
    make the out-of-distribution test set single-class.
    """
    return 2 * d + 1


def gnp_probability(n: int) -> float:
    return min(1.0, 1.1 * math.log(n) / n)


def gen_gnp(n: int, p: float, seed_or_rng) -> GraphSample:
    if n < 2:
        raise ConfigurationError("need at least two vertices")
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError("edge probability must lie in [0, 1]")
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    upper = np.triu(rng.random((n, n)) < p, 1)
    adj = (upper | upper.T).astype(np.int8)
    return GraphSample(n, adj)


def _adjacency(graph) -> np.ndarray:
    return graph.adjacency if isinstance(graph, GraphSample) else np.asarray(graph)


def is_connected(graph) -> int:
    """+1 iff the graph has a single connected component (union-find)."""
    adj = _adjacency(graph)
    n = adj.shape[0]
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    components = n
    for i, j in zip(*np.nonzero(np.triu(adj, 1))):
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[ri] = rj
            components -= 1
    return 1 if components == 1 else -1


def is_connected_bfs(graph) -> int:
    adj = _adjacency(graph)
    n = adj.shape[0]
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for w in np.nonzero(adj[v])[0]:
            if int(w) not in seen:
                seen.add(int(w))
                queue.append(int(w))
    return 1 if len(seen) == n else -1


def all_graphs(n: int):
    """Every labeled simple graph on n vertices, as adjacency matrices."""
    pairs = list(itertools.combinations(range(n), 2))
    for mask in range(1 << len(pairs)):
        adj = np.zeros((n, n), dtype=np.int8)
        for bit, (i, j) in enumerate(pairs):
            if mask >> bit & 1:
                adj[i, j] = adj[j, i] = 1
        yield adj


MAX_ENUM_VERTICES = 6


def enumerate_spanning_trees(graph) -> list[np.ndarray]:
    """All spanning trees, each as a symmetric 0/1 vector in R^(n*n).

    Brute force over (n-1)-edge subsets, kept when acyclic.
    """
    adj = _adjacency(graph)
    n = adj.shape[0]
    if n > MAX_ENUM_VERTICES:
        raise ConfigurationError(f"spanning-tree enumeration is limited to n <= {MAX_ENUM_VERTICES}")
    if n == 1:
        return [np.zeros(1)]
    edges = [(int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(adj, 1)))]
    trees = []
    for subset in itertools.combinations(edges, n - 1):
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                i = parent[i]
            return i

        ok = True
        for i, j in subset:
            ri, rj = find(i), find(j)
            if ri == rj:
                ok = False
                break
            parent[ri] = rj
        if ok:
            t = np.zeros((n, n))
            for i, j in subset:
                t[i, j] = t[j, i] = 1.0
            trees.append(t.reshape(-1))
    return trees


def tree_threshold(n: int) -> float:
    """A spanning tree has n-1 undirected edges, counted twice in vec(A)."""
    return 2.0 * (n - 1)


def complete_graph(n: int) -> np.ndarray:
    return (np.ones((n, n)) - np.eye(n)).astype(np.int8)


def _graph_dataset(n: int, count: int, rng: np.random.Generator, p: float) -> Dataset:
    adj = np.stack([gen_gnp(n, p, rng).adjacency for _ in range(count)]) if count else np.zeros((0, n, n), np.int8)
    labels = np.array([is_connected(a) for a in adj], dtype=np.int64)
    return Dataset("graph", n, adj.astype(np.float64), labels)


def gen_connectivity_dataset(n: int, sizes=DEFAULT_SIZES, seed: int = 0, p: float | None = None) -> Split:
    """G(n, 1.1 ln(n)/n) graphs labeled by connectivity; no rebalancing."""
    if n < 3:
        raise ConfigurationError("connectivity task needs n >= 3")
    p = gnp_probability(n) if p is None else p
    rng = np.random.default_rng([seed, 1])
    n_tr, n_va, n_te = sizes
    return Split(_graph_dataset(n, n_tr, rng, p), _graph_dataset(n, n_va, rng, p), _graph_dataset(n, n_te, rng, p))


# -- serialization ----------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def dump_dataset(ds: Dataset) -> str:
    """Header ``kind d n_samples`` then one sample per line, label last.

    Graph rows hold the strict upper triangle of the adjacency, row-major.
    """
    out = io.StringIO()
    out.write(f"{ds.kind} {ds.size} {len(ds)}\n")
    iu = np.triu_indices(ds.size, 1) if ds.is_graph else None
    for x, y in zip(ds.inputs, ds.labels):
        vals = x[iu] if ds.is_graph else x
        if ds.is_graph:
            body = " ".join(str(int(v)) for v in vals)
        else:
            body = " ".join(_fmt(v) for v in vals)
        out.write(f"{body} {int(y)}\n".lstrip(" "))
    return out.getvalue()


def parse_dataset(text: str) -> Dataset:
    lines = text.strip("\n").split("\n")
    kind, size, count = lines[0].split()
    size, count = int(size), int(count)
    rows = [ln.split() for ln in lines[1 : 1 + count]]
    if len(rows) != count:
        raise ConfigurationError(f"header announces {count} samples, found {len(rows)}")
    labels = np.array([int(r[-1]) for r in rows], dtype=np.int64)
    if kind == "graph":
        iu = np.triu_indices(size, 1)
        inputs = np.zeros((count, size, size))
        for k, r in enumerate(rows):
            inputs[k][iu] = [float(v) for v in r[:-1]]
            inputs[k] = inputs[k] + inputs[k].T
    else:
        inputs = np.array([[float(v) for v in r[:-1]] for r in rows]).reshape(count, size)
    return Dataset(kind, size, inputs, labels)


def save_dataset(ds: Dataset, path: str | Path) -> None:
    Path(path).write_text(dump_dataset(ds))


def load_dataset(path: str | Path) -> Dataset:
    return parse_dataset(Path(path).read_text())
