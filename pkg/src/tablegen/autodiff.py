"""Dense-array numeric core with reverse-mode automatic differentiation.

Tensors hold float64 numpy buffers. Operations executed while a Tape is
active are recorded and can be differentiated by walking the tape in
reverse. A tape is confined to one thread; inference (no active tape)
runs the same operations as plain numpy with no recording overhead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for a primitive."""


class ContractError(ValueError):
    """An operation precondition was violated."""


class NumericsError(FloatingPointError):
    """A primitive produced a non-finite value while debug checks are on."""


_ACTIVE_TAPE: "Tape | None" = None
_DEBUG_CHECKS = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf checking after every primitive (off by default)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


class Tensor:
    """Dense float64 array, optionally participating in the active tape."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def detach(self) -> "Tensor":
        """Same values, severed from gradient flow."""
        return Tensor(self.data, requires_grad=False)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    # Arithmetic sugar; scalars are plain Python floats.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, mul(other, -1.0))
        return add(self, -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Topologically ordered record of primitive applications.

    Usage::

        with Tape() as tape:
            loss = ...
            tape.backward(loss)
    """

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise ContractError("a tape is already active on this thread")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None

    def backward(self, loss: Tensor) -> None:
        """Populate grads of every tensor reachable from a scalar loss."""
        if loss.data.size != 1:
            raise ContractError(f"backward requires a scalar loss, got shape {loss.data.shape}")
        loss.grad = np.ones_like(loss.data)
        for out, backward_fn in reversed(self.nodes):
            if out.grad is not None:
                backward_fn(out.grad)


def backward(loss: Tensor) -> None:
    """Backward pass on the active tape."""
    if _ACTIVE_TAPE is None:
        raise ContractError("backward called with no active tape")
    _ACTIVE_TAPE.backward(loss)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _emit(name: str, out_data: np.ndarray, inputs: tuple[Tensor, ...],
          backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    if _DEBUG_CHECKS and not np.all(np.isfinite(out_data)):
        raise NumericsError(f"{name} produced a non-finite value")
    tape = _ACTIVE_TAPE
    if tape is not None and any(t.requires_grad for t in inputs):
        out = Tensor(out_data, requires_grad=True)
        tape.nodes.append((out, backward_fn))
        return out
    return Tensor(out_data)


def constant(data) -> Tensor:
    return Tensor(data)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


# ---------------------------------------------------------------------------
# Primitives


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        s = float(b)
        out = a.data + s

        def bw(g):
            _accumulate(a, g)

        return _emit("add", out, (a,), bw)

    if a.data.shape == b.data.shape:
        out = a.data + b.data

        def bw(g):
            _accumulate(a, g)
            _accumulate(b, g)

        return _emit("add", out, (a, b), bw)

    # Row broadcast: [N, M] + [M].
    if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        out = a.data + b.data

        def bw(g):
            _accumulate(a, g)
            _accumulate(b, g.sum(axis=0))

        return _emit("add", out, (a, b), bw)

    raise ShapeError(f"add: shapes {a.data.shape} and {b.data.shape} do not conform")


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        s = float(b)
        out = a.data * s

        def bw(g):
            _accumulate(a, g * s)

        return _emit("mul", out, (a,), bw)

    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: shapes {a.data.shape} and {b.data.shape} do not conform")
    out = a.data * b.data
    ad, bd = a.data, b.data

    def bw(g):
        _accumulate(a, g * bd)
        _accumulate(b, g * ad)

    return _emit("mul", out, (a, b), bw)


def scale_rows(m: Tensor, s: Tensor) -> Tensor:
    """Multiply row i of a matrix by scalar s[i]."""
    if m.data.ndim != 2 or s.data.ndim != 1 or m.data.shape[0] != s.data.shape[0]:
        raise ShapeError(f"scale_rows: shapes {m.data.shape} and {s.data.shape} do not conform")
    md, sd = m.data, s.data
    out = md * sd[:, None]

    def bw(g):
        _accumulate(m, g * sd[:, None])
        _accumulate(s, (g * md).sum(axis=1))

    return _emit("scale_rows", out, (m, s), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    na, nb = ad.ndim, bd.ndim
    if na == 2 and nb == 2:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError(f"matmul: shapes {ad.shape} and {bd.shape} do not conform")
        out = ad @ bd

        def bw(g):
            _accumulate(a, g @ bd.T)
            _accumulate(b, ad.T @ g)

    elif na == 2 and nb == 1:
        if ad.shape[1] != bd.shape[0]:
            raise ShapeError(f"matmul: shapes {ad.shape} and {bd.shape} do not conform")
        out = ad @ bd

        def bw(g):
            _accumulate(a, np.outer(g, bd))
            _accumulate(b, ad.T @ g)

    elif na == 1 and nb == 2:
        if ad.shape[0] != bd.shape[0]:
            raise ShapeError(f"matmul: shapes {ad.shape} and {bd.shape} do not conform")
        out = ad @ bd

        def bw(g):
            _accumulate(a, bd @ g)
            _accumulate(b, np.outer(ad, g))

    elif na == 1 and nb == 1:
        if ad.shape[0] != bd.shape[0]:
            raise ShapeError(f"matmul: shapes {ad.shape} and {bd.shape} do not conform")
        out = np.asarray(ad @ bd)

        def bw(g):
            _accumulate(a, g * bd)
            _accumulate(b, g * ad)

    else:
        raise ShapeError(f"matmul: unsupported ranks {ad.shape} @ {bd.shape}")
    return _emit("matmul", out, (a, b), bw)


def dot(a: Tensor, b: Tensor) -> Tensor:
    return matmul(a, b)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected matrix, got shape {a.data.shape}")
    out = np.ascontiguousarray(a.data.T)

    def bw(g):
        _accumulate(a, g.T)

    return _emit("transpose", out, (a,), bw)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ContractError("concat of zero tensors")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)
    parts = tuple(parts)

    def bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if axis == 0:
                _accumulate(p, g[lo:hi])
            else:
                _accumulate(p, g[:, lo:hi])

    return _emit("concat", out, parts, bw)


def take_rows(m: Tensor, idx) -> Tensor:
    """Gather rows of a matrix; also serves as embedding lookup."""
    if m.data.ndim != 2:
        raise ShapeError(f"take_rows: expected matrix, got shape {m.data.shape}")
    idx = np.asarray(idx, dtype=np.intp)
    out = m.data[idx]

    def bw(g):
        if not m.requires_grad:
            return
        if m.grad is None:
            m.grad = np.zeros_like(m.data)
        np.add.at(m.grad, idx, g)

    return _emit("take_rows", out, (m,), bw)


embedding_lookup = take_rows


def slice1d(x: Tensor, lo: int, hi: int) -> Tensor:
    if x.data.ndim != 1:
        raise ShapeError(f"slice1d: expected vector, got shape {x.data.shape}")
    out = x.data[lo:hi].copy()

    def bw(g):
        if not x.requires_grad:
            return
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        x.grad[lo:hi] += g

    return _emit("slice1d", out, (x,), bw)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)
    orig = x.data.shape

    def bw(g):
        _accumulate(x, g.reshape(orig))

    return _emit("reshape", out, (x,), bw)


def gather_sum(x: Tensor, idx) -> Tensor:
    """Sum of selected coordinates of a vector (scalar output)."""
    if x.data.ndim != 1:
        raise ShapeError(f"gather_sum: expected vector, got shape {x.data.shape}")
    idx = np.asarray(idx, dtype=np.intp)
    out = np.asarray(x.data[idx].sum())

    def bw(g):
        if not x.requires_grad:
            return
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        np.add.at(x.grad, idx, g)

    return _emit("gather_sum", out, (x,), bw)


def pick(x: Tensor, i: int) -> Tensor:
    """Single coordinate of a vector (scalar output)."""
    return gather_sum(x, [int(i)])


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def bw(g):
        _accumulate(x, g * (1.0 - out * out))

    return _emit("tanh", out, (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bw(g):
        _accumulate(x, g * out * (1.0 - out))

    return _emit("sigmoid", out, (x,), bw)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)
    mask = x.data > 0

    def bw(g):
        _accumulate(x, g * mask)

    return _emit("relu", out, (x,), bw)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def bw(g):
        _accumulate(x, g * out)

    return _emit("exp", out, (x,), bw)


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)
    xd = x.data

    def bw(g):
        _accumulate(x, g / xd)

    return _emit("log", out, (x,), bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along one axis (max subtraction)."""
    xd = x.data
    mx = xd.max(axis=axis, keepdims=True)
    ex = np.exp(xd - mx)
    out = ex / ex.sum(axis=axis, keepdims=True)

    def bw(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        _accumulate(x, out * (g - inner))

    return _emit("softmax", out, (x,), bw)


def masked_row_softmax(s: Tensor) -> Tensor:
    """Row-wise softmax of a square score matrix with the diagonal excluded.

    Row i normalizes over j != i; diagonal outputs are exactly zero. The
    denominator is summed in sorted order so the result is invariant to
    permutations of the attended set (used by the row/column encoders).
    """
    sd = s.data
    if sd.ndim != 2 or sd.shape[0] != sd.shape[1]:
        raise ShapeError(f"masked_row_softmax: expected square matrix, got {sd.shape}")
    if sd.shape[0] < 2:
        raise ContractError("masked_row_softmax needs at least 2 elements per row")
    m = sd.copy()
    np.fill_diagonal(m, -np.inf)
    mx = m.max(axis=1, keepdims=True)
    ex = np.exp(m - mx)
    denom = np.sort(ex, axis=1).sum(axis=1, keepdims=True)
    out = ex / denom

    def bw(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        _accumulate(s, out * (g - inner))

    return _emit("masked_row_softmax", out, (s,), bw)


def matmul_sorted(a: Tensor, v: Tensor) -> Tensor:
    """Matrix product whose inner reduction is summed in sorted order.

    Equal to matmul(a, v) up to rounding, but invariant to a simultaneous
    permutation of a's columns and v's rows. Intended for small attention
    contexts only.
    """
    ad, vd = a.data, v.data
    if ad.ndim != 2 or vd.ndim != 2 or ad.shape[1] != vd.shape[0]:
        raise ShapeError(f"matmul_sorted: shapes {ad.shape} and {vd.shape} do not conform")
    prod = ad[:, :, None] * vd[None, :, :]
    out = np.sort(prod, axis=1).sum(axis=1)

    def bw(g):
        _accumulate(a, g @ vd.T)
        _accumulate(v, ad.T @ g)

    return _emit("matmul_sorted", out, (a, v), bw)


def mean_over_axis(x: Tensor, axis: int) -> Tensor:
    out = x.data.mean(axis=axis)
    n = x.data.shape[axis]

    def bw(g):
        _accumulate(x, np.expand_dims(g, axis) * np.ones_like(x.data) / n)

    return _emit("mean_over_axis", out, (x,), bw)


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum())

    def bw(g):
        _accumulate(x, np.broadcast_to(g, x.data.shape))

    return _emit("sum_all", out, (x,), bw)


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: scales kept units by 1/(1-p) at train time.

    Callers skip this op entirely in inference mode.
    """
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {p}")
    if p == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    out = x.data * mask

    def bw(g):
        _accumulate(x, g * mask)

    return _emit("dropout", out, (x,), bw)


# ---------------------------------------------------------------------------
# Parameters, checkpoints, gradient checking


class Parameter:
    """Trainable tensor with a name and its Adagrad accumulator."""

    __slots__ = ("name", "tensor", "accumulator")

    def __init__(self, name: str, data):
        self.name = name
        self.tensor = Tensor(data, requires_grad=True)
        self.accumulator = np.zeros_like(self.tensor.data)

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> np.ndarray | None:
        return self.tensor.grad

    def zero_grad(self) -> None:
        self.tensor.grad = None

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.data.shape})"


def parameters_to_dict(params: Iterable[Parameter]) -> dict:
    """Self-describing serialization: name -> shape + row-major values."""
    blob = {}
    for p in params:
        blob[p.name] = {
            "shape": list(p.tensor.data.shape),
            "data": p.tensor.data.ravel().tolist(),
            "accumulator": p.accumulator.ravel().tolist(),
        }
    return {"format_version": 1, "params": blob}


def parameters_from_dict(blob: dict, params: Iterable[Parameter]) -> None:
    """Load values into existing parameters, validating names and shapes."""
    if blob.get("format_version") != 1:
        raise ContractError(f"unsupported parameter format: {blob.get('format_version')!r}")
    stored = blob["params"]
    for p in params:
        if p.name not in stored:
            raise ContractError(f"checkpoint is missing parameter {p.name!r}")
        entry = stored[p.name]
        shape = tuple(entry["shape"])
        if shape != p.tensor.data.shape:
            raise ShapeError(
                f"checkpoint shape {shape} for {p.name!r} does not match {p.tensor.data.shape}")
        p.tensor.data = np.asarray(entry["data"], dtype=np.float64).reshape(shape)
        p.accumulator = np.asarray(entry["accumulator"], dtype=np.float64).reshape(shape)


@dataclass
class GradCheckReport:
    """Outcome of an autodiff-vs-finite-difference comparison."""

    passed: bool
    max_rel_error: float
    worst_param: str
    worst_coord: tuple[int, ...]
    n_checked: int
    tol: float
    per_param: dict[str, float] = field(default_factory=dict)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}: max relative error {self.max_rel_error:.3e} "
                f"(tol {self.tol:.1e}) at {self.worst_param}{list(self.worst_coord)} "
                f"over {self.n_checked} coordinates")


def grad_check(f: Callable[[], Tensor], params: Sequence[Parameter], tol: float,
               h: float = 1e-5, sample_size: int = 256, full_sweep_limit: int = 10_000,
               seed: int = 0) -> GradCheckReport:
    """Compare reverse-mode gradients of a deterministic scalar function
    against central finite differences.

    Sweeps every coordinate when the total count is below full_sweep_limit,
    otherwise checks a seeded random sample of sample_size coordinates.
    Relative error is |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    ad_grads = {p.name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for p in params}
    for p in params:
        p.zero_grad()

    coords: list[tuple[Parameter, tuple[int, ...]]] = []
    total = sum(p.data.size for p in params)
    if total <= full_sweep_limit:
        for p in params:
            for flat in range(p.data.size):
                coords.append((p, np.unravel_index(flat, p.data.shape)))
    else:
        rng = np.random.default_rng(seed)
        flat_choices = rng.choice(total, size=min(sample_size, total), replace=False)
        bounds = np.cumsum([p.data.size for p in params])
        for flat in sorted(flat_choices):
            pi = int(np.searchsorted(bounds, flat, side="right"))
            offset = flat - (0 if pi == 0 else bounds[pi - 1])
            coords.append((params[pi], np.unravel_index(int(offset), params[pi].data.shape)))

    max_err = 0.0
    worst = (params[0].name if params else "", (0,))
    per_param: dict[str, float] = {}
    for p, idx in coords:
        saved = p.data[idx]
        p.data[idx] = saved + h
        f_plus = float(f().data.reshape(()))
        p.data[idx] = saved - h
        f_minus = float(f().data.reshape(()))
        p.data[idx] = saved
        g_fd = (f_plus - f_minus) / (2.0 * h)
        g_ad = float(ad_grads[p.name][idx])
        err = abs(g_ad - g_fd) / max(1.0, abs(g_ad), abs(g_fd))
        per_param[p.name] = max(per_param.get(p.name, 0.0), err)
        if err > max_err:
            max_err = err
            worst = (p.name, tuple(int(i) for i in idx))
    return GradCheckReport(passed=max_err < tol, max_rel_error=max_err,
                           worst_param=worst[0], worst_coord=worst[1],
                           n_checked=len(coords), tol=tol, per_param=per_param)


def global_norm_clip(params: Iterable[Parameter], max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is <= max_norm."""
    sq = 0.0
    grads = []
    for p in params:
        if p.grad is not None:
            grads.append(p)
            sq += float((p.grad * p.grad).sum())
    norm = math.sqrt(sq)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in grads:
            p.tensor.grad *= scale
    return norm
