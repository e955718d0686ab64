"""Dense float64 tensors with tape-based reverse-mode differentiation.

Only what the hypernetworks and baselines need: matrix products, row-bias
addition, a handful of elementwise maps, reshapes and axis reductions.
Small MLPs, Adagrad and a cosine learning-rate schedule sit on top.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np


class ConfigurationError(ValueError):
    """Raised on inconsistent shapes, widths or hyperparameters."""


class UsageError(RuntimeError):
    """Raised when the tape is used out of order."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate without recording the computation graph."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the entries."""
        return self.data.reshape(-1)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing -------------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: Sequence["Tensor"], backward) -> "Tensor":
        out = Tensor(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accum(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True).reshape(self.shape)
        else:
            self.grad += g

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.data.size != 1:
            raise UsageError("backward() needs a scalar loss")
        if self._backward is None:
            raise UsageError("backward() called on a tensor with no recorded forward pass")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accum(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # -- arithmetic -----------------------------------------------------

    def __add__(self, other) -> "Tensor":
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        return add(self, neg(_lift(other)))

    def __rsub__(self, other) -> "Tensor":
        return add(_lift(other), neg(self))

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __mul__(self, other) -> "Tensor":
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, _lift(other))

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)

    def sum(self, axis: int | None = None) -> "Tensor":
        return tsum(self, axis)

    def mean(self, axis: int | None = None) -> "Tensor":
        return tmean(self, axis)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _row_broadcast_ok(big: tuple[int, ...], small: tuple[int, ...]) -> bool:
    # scalar, or a vector matching the trailing axis
    return small == () or (len(small) == 1 and len(big) >= 1 and small[0] == big[-1])


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape == b.shape:
        return Tensor._make(a.data + b.data, (a, b), lambda g: (g, g))
    if _row_broadcast_ok(a.shape, b.shape):
        big, small, flip = a, b, False
    elif _row_broadcast_ok(b.shape, a.shape):
        big, small, flip = b, a, True
    else:
        raise ConfigurationError(f"cannot add shapes {a.shape} and {b.shape}")

    def back(g):
        gs = g.sum() if small.shape == () else g.reshape(-1, small.shape[0]).sum(axis=0)
        return (gs, g) if flip else (g, gs)

    return Tensor._make(a.data + b.data, (a, b), back)


def neg(a: Tensor) -> Tensor:
    return Tensor._make(-a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; either side may be a scalar."""
    if a.shape == b.shape:
        return Tensor._make(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))
    if b.shape == ():
        return Tensor._make(a.data * b.data, (a, b), lambda g: (g * b.data, (g * a.data).sum()))
    if a.shape == ():
        return Tensor._make(a.data * b.data, (a, b), lambda g: ((g * b.data).sum(), g * a.data))
    raise ConfigurationError(f"cannot multiply shapes {a.shape} and {b.shape}")


def scale_rows(s: Tensor, m: Tensor) -> Tensor:
    """Row i of ``m`` times scalar ``s[i]``; ``s`` has shape (rows,)."""
    if s.data.ndim != 1 or m.data.ndim != 2 or s.shape[0] != m.shape[0]:
        raise ConfigurationError(f"scale_rows needs (n,) and (n, k), got {s.shape} and {m.shape}")
    return Tensor._make(
        s.data[:, None] * m.data,
        (s, m),
        lambda g: ((g * m.data).sum(axis=1), g * s.data[:, None]),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D product, or a batched 3-D product with matching leading axis."""
    if a.data.ndim != b.data.ndim or a.data.ndim not in (2, 3):
        raise ConfigurationError(f"matmul needs two matrices or two batches, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2] or (a.data.ndim == 3 and a.shape[0] != b.shape[0]):
        raise ConfigurationError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None
        return ga, gb

    return Tensor._make(a.data @ b.data, (a, b), back)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ConfigurationError("transpose is defined for matrices only")
    return Tensor._make(a.data.T, (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.shape
    return Tensor._make(a.data.reshape(tuple(shape)), (a,), lambda g: (g.reshape(old),))


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        return Tensor._make(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape),))

    def back(g):
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape),)

    return Tensor._make(a.data.sum(axis=axis), (a,), back)


def pool_sum(a: Tensor, axis: int) -> Tensor:
    """Sum along ``axis`` after sorting, so the result is bit-identical under
    any reordering of that axis."""

    def back(g):
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape),)

    return Tensor._make(np.sort(a.data, axis=axis).sum(axis=axis), (a,), back)


def neighbor_sum(adj: np.ndarray, h: Tensor) -> Tensor:
    """out[b, v] = sum_u adj[b, v, u] * h[b, u], order-independent in u.

    ``adj`` is a constant (B, n, n) array, ``h`` has shape (B, n, w).
    """
    if adj.ndim != 3 or h.data.ndim != 3 or adj.shape[:2] != h.shape[:2] or adj.shape[2] != h.shape[1]:
        raise ConfigurationError(f"neighbor_sum shapes {adj.shape} and {h.shape} disagree")
    terms = adj[:, :, :, None] * h.data[:, None, :, :]
    out = np.sort(terms, axis=2).sum(axis=2)
    adj_t = np.swapaxes(adj, 1, 2)
    return Tensor._make(out, (h,), lambda g: (adj_t @ g,))


def tmean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return tsum(a, axis) * (1.0 / n)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0  # subgradient 0 at 0
    return Tensor._make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor._make(out, (a,), lambda g: (g * (1.0 - out * out),))


def identity(a: Tensor) -> Tensor:
    return a


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(a)), evaluated without overflow."""
    x = a.data
    out = np.logaddexp(0.0, x)
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    return Tensor._make(out, (a,), lambda g: (g * sig,))


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "relu": relu,
    "tanh": tanh,
    "identity": identity,
}


# -- MLPs -------------------------------------------------------------------


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ConfigurationError("an MLP needs at least an input and an output width")
        if any(w < 1 for w in self.layer_widths):
            raise ConfigurationError(f"widths must be positive: {self.layer_widths}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")

    @property
    def in_width(self) -> int:
        return self.layer_widths[0]

    @property
    def out_width(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    def param_count(self) -> int:
        w = self.layer_widths
        return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))


@dataclass
class ParamStore:
    """Named parameter tensors; MLP layers live under ``{prefix}.W{i}`` / ``{prefix}.b{i}``."""

    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __setitem__(self, name: str, value: Tensor) -> None:
        value.requires_grad = True
        self.tensors[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list[str]:
        return list(self.tensors)

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Gradients aligned with the store; unreachable parameters get zeros."""
        return {
            k: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
            for k, t in self.tensors.items()
        }

    def copy(self) -> "ParamStore":
        return ParamStore({k: Tensor(t.data.copy(), requires_grad=True) for k, t in self.tensors.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self.tensors.values()]) if self.tensors else np.zeros(0)

    def load_flat(self, vec: np.ndarray) -> None:
        if len(vec) != sum(t.data.size for t in self.tensors.values()):
            raise ConfigurationError("flat vector length does not match the store")
        pos = 0
        for t in self.tensors.values():
            n = t.data.size
            t.data = np.asarray(vec[pos : pos + n], dtype=np.float64).reshape(t.shape).copy()
            pos += n

    def to_dict(self) -> dict[str, list]:
        return {k: t.data.tolist() for k, t in self.tensors.items()}

    @classmethod
    def from_dict(cls, d: dict[str, list]) -> "ParamStore":
        return cls({k: Tensor(np.asarray(v, dtype=np.float64), requires_grad=True) for k, v in d.items()})


def param_count(params: ParamStore) -> int:
    return int(sum(t.data.size for t in params.tensors.values()))


def init_mlp(spec: MlpSpec, rng: np.random.Generator, store: ParamStore | None = None, prefix: str = "mlp") -> ParamStore:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    store = ParamStore() if store is None else store
    w = spec.layer_widths
    for i in range(spec.n_layers):
        bound = 1.0 / math.sqrt(w[i])
        store[f"{prefix}.W{i}"] = Tensor(rng.uniform(-bound, bound, size=(w[i], w[i + 1])))
        store[f"{prefix}.b{i}"] = Tensor(rng.uniform(-bound, bound, size=(w[i + 1],)))
    return store


def mlp_forward(spec: MlpSpec, params: ParamStore, x: Tensor, prefix: str = "mlp") -> Tensor:
    """Apply the MLP to the last axis of ``x`` (shape ``(..., in_width)``)."""
    x = _lift(x)
    if x.data.ndim == 0 or x.shape[-1] != spec.in_width:
        raise ConfigurationError(f"input last dimension {x.shape[-1:]} != MLP input width {spec.in_width}")
    lead = x.shape[:-1]
    h = x if x.data.ndim == 2 else reshape(x, (-1, spec.in_width))
    act = ACTIVATIONS[spec.activation]
    for i in range(spec.n_layers):
        try:
            W, b = params[f"{prefix}.W{i}"], params[f"{prefix}.b{i}"]
        except KeyError as exc:
            raise ConfigurationError(f"missing parameter {exc.args[0]}") from None
        if W.shape != (spec.layer_widths[i], spec.layer_widths[i + 1]):
            raise ConfigurationError(f"{prefix}.W{i} has shape {W.shape}, spec wants {spec.layer_widths[i:i + 2]}")
        h = matmul(h, W) + b
        if i < spec.n_layers - 1:
            h = act(h)
    if h.shape[:-1] != lead:
        h = reshape(h, (*lead, spec.out_width))
    return h


# -- optimisation -----------------------------------------------------------


@dataclass
class AdagradState:
    lr: float
    eps: float = 1e-10
    accum: dict[str, np.ndarray] = field(default_factory=dict)


def adagrad_step(params: ParamStore, grads: dict[str, np.ndarray], state: AdagradState, lr: float | None = None) -> ParamStore:
    """In-place Adagrad update; ``lr`` overrides the base rate (for schedules)."""
    rate = state.lr if lr is None else lr
    for name, t in params.tensors.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != t.shape:
            raise ConfigurationError(f"gradient for {name} has shape {g.shape}, parameter has {t.shape}")
        acc = state.accum.get(name)
        if acc is None:
            acc = state.accum[name] = np.zeros_like(t.data)
        acc += g * g
        t.data = t.data - rate * g / (np.sqrt(acc) + state.eps)
    return params


@dataclass(frozen=True)
class CosineSchedule:
    lr0: float
    total_epochs: int

    def __call__(self, t: float) -> float:
        t = min(max(t, 0.0), self.total_epochs)
        if t == self.total_epochs:
            return 0.0
        return self.lr0 * (1.0 + math.cos(math.pi * t / self.total_epochs)) / 2.0


# -- gradient checking ------------------------------------------------------


def finite_difference_grads(loss_fn: Callable[[], float], params: ParamStore, h: float = 1e-5) -> dict[str, np.ndarray]:
    """Central differences of ``loss_fn`` w.r.t. every parameter entry."""
    out: dict[str, np.ndarray] = {}
    for name, t in params.tensors.items():
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn()
            flat[i] = orig - h
            fm = loss_fn()
            flat[i] = orig
            g.reshape(-1)[i] = (fp - fm) / (2.0 * h)
        out[name] = g
    return out


def max_relative_error(a: dict[str, np.ndarray], b: dict[str, np.ndarray], floor: float = 1e-4) -> float:
    """max |a-b| / max(|a|, |b|, floor) over all coordinates.

    The floor keeps coordinates whose gradient is essentially zero (dead
    ReLUs) from dividing rounding noise by zero.
    """
    worst = 0.0
    for k in a:
        x, y = a[k], b[k]
        den = np.maximum(np.maximum(np.abs(x), np.abs(y)), floor)
        if x.size:
            worst = max(worst, float(np.max(np.abs(x - y) / den)))
    return worst
