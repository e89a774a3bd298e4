"""Reverse-mode differentiation over dense numpy tensors.

A Tensor wraps a float32 (or float64, for verification) ndarray and the
recording needed to backpropagate: its parent tensors and a closure that
pushes an incoming gradient to them.  Ops are free functions; calling one
appends a node to the implicit graph, and backward(loss) walks it once in
reverse topological order.  Gradients accumulate additively, so a tensor
used twice (shared embeddings, shared encoder states) collects both
contributions; clearing between optimizer steps is the caller's job.

Everything is deterministic given inputs.  Outputs of every op are checked
finite unless set_finite_checks(False).
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Iterable, Sequence

import numpy as np

from . import backend
from ._kernels_py import _sigmoid
from .errors import ContractError, NumericError

_grad_enabled = True
_finite_checks = True


@contextmanager
def no_grad():
    """Disable recording inside the block; forward values only."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_finite_checks(enabled: bool) -> None:
    global _finite_checks
    _finite_checks = bool(enabled)


class Tensor:
    """A dense array plus the recording slot for reverse mode."""

    __slots__ = ("data", "grad", "_parents", "_bwd")

    def __init__(self, data: np.ndarray, parents=(), bwd=None):
        self.data = data
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = parents if _grad_enabled else ()
        self._bwd = bwd if _grad_enabled else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def from_array(values, dtype=np.float32) -> Tensor:
    """Wrap external values as a constant leaf tensor."""
    arr = np.asarray(values, dtype=dtype)
    _check_finite(arr, "from_array")
    return Tensor(arr)


def zeros(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype))


def _check_finite(arr: np.ndarray, op: str) -> None:
    if _finite_checks and not np.isfinite(arr).all():
        raise NumericError(f"non-finite values in output of {op}")


def _grad_buf(t: Tensor) -> np.ndarray:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    return t.grad


def _acc(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _same_dtype(*ts: Tensor) -> np.dtype:
    dt = ts[0].data.dtype
    for t in ts[1:]:
        if t.data.dtype != dt:
            raise ContractError(f"mixed dtypes {dt} vs {t.data.dtype}")
    return dt


def _node(data: np.ndarray, parents, bwd, op: str) -> Tensor:
    _check_finite(data, op)
    if not _grad_enabled:
        return Tensor(data)
    return Tensor(data, parents=tuple(parents), bwd=bwd)


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product with numpy 1-D/2-D semantics."""
    _same_dtype(a, b)
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0 or ad.shape[-1] != bd.shape[0]:
        raise ContractError(f"matmul shape mismatch: {ad.shape} @ {bd.shape}")
    out = ad @ bd

    def bwd(g):
        if ad.ndim == 2 and bd.ndim == 2:
            _acc(a, g @ bd.T)
            _acc(b, ad.T @ g)
        elif ad.ndim == 2 and bd.ndim == 1:
            _acc(a, np.outer(g, bd))
            _acc(b, ad.T @ g)
        elif ad.ndim == 1 and bd.ndim == 2:
            _acc(a, bd @ g)
            _acc(b, np.outer(ad, g))
        else:  # 1-D @ 1-D -> scalar
            _acc(a, g * bd)
            _acc(b, g * ad)

    return _node(out, (a, b), bwd, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts a (m,n) + (n,) row broadcast."""
    _same_dtype(a, b)
    ad, bd = a.data, b.data
    row_bcast = ad.ndim == 2 and bd.ndim == 1 and ad.shape[1] == bd.shape[0]
    if ad.shape != bd.shape and not row_bcast:
        raise ContractError(f"add shape mismatch: {ad.shape} + {bd.shape}")
    out = ad + bd

    def bwd(g):
        _acc(a, g)
        _acc(b, g.sum(axis=0) if row_bcast else g)

    return _node(out, (a, b), bwd, "add")


def add_n(ts: Sequence[Tensor]) -> Tensor:
    """Sum of same-shaped tensors as a single node."""
    if not ts:
        raise ContractError("add_n of empty list")
    _same_dtype(*ts)
    shape = ts[0].data.shape
    for t in ts[1:]:
        if t.data.shape != shape:
            raise ContractError(f"add_n shape mismatch: {shape} vs {t.data.shape}")
    out = ts[0].data.copy()
    for t in ts[1:]:
        out += t.data

    def bwd(g):
        for t in ts:
            _acc(t, g)

    return _node(out, ts, bwd, "add_n")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype(a, b)
    if a.data.shape != b.data.shape:
        raise ContractError(f"sub shape mismatch: {a.data.shape} - {b.data.shape}")
    out = a.data - b.data

    def bwd(g):
        _acc(a, g)
        _acc(b, -g)

    return _node(out, (a, b), bwd, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype(a, b)
    if a.data.shape != b.data.shape:
        raise ContractError(f"mul shape mismatch: {a.data.shape} * {b.data.shape}")
    out = a.data * b.data

    def bwd(g):
        _acc(a, g * b.data)
        _acc(b, g * a.data)

    return _node(out, (a, b), bwd, "mul")


def scale(a: Tensor, s: float) -> Tensor:
    out = a.data * a.data.dtype.type(s)

    def bwd(g):
        _acc(a, g * a.data.dtype.type(s))

    return _node(out, (a,), bwd, "scale")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bwd(g):
        _acc(a, g * (1.0 - out * out))

    return _node(out, (a,), bwd, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)

    def bwd(g):
        _acc(a, g * out * (1.0 - out))

    return _node(out, (a,), bwd, "sigmoid")


def softmax(v: Tensor) -> Tensor:
    """Stable softmax of a 1-D vector (max-subtracted)."""
    if v.data.ndim != 1:
        raise ContractError(f"softmax expects a vector, got shape {v.data.shape}")
    shifted = v.data - v.data.max()
    e = np.exp(shifted)
    out = e / e.sum()

    def bwd(g):
        _acc(v, out * (g - out @ g))

    return _node(out, (v,), bwd, "softmax")


def concat(ts: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    if not ts:
        raise ContractError("concat of empty list")
    _same_dtype(*ts)
    for t in ts:
        if t.data.ndim != 1:
            raise ContractError(f"concat expects vectors, got shape {t.data.shape}")
    sizes = [t.data.shape[0] for t in ts]
    out = np.concatenate([t.data for t in ts])

    def bwd(g):
        off = 0
        for t, n in zip(ts, sizes):
            _acc(t, g[off : off + n])
            off += n

    return _node(out, ts, bwd, "concat")


def stack(ts: Sequence[Tensor]) -> Tensor:
    """Stack equal-length 1-D tensors into a (len, dim) matrix."""
    if not ts:
        raise ContractError("stack of empty list")
    _same_dtype(*ts)
    dim = ts[0].data.shape[0]
    for t in ts:
        if t.data.shape != (dim,):
            raise ContractError(f"stack shape mismatch: {(dim,)} vs {t.data.shape}")
    out = np.stack([t.data for t in ts])

    def bwd(g):
        for i, t in enumerate(ts):
            _acc(t, g[i])

    return _node(out, ts, bwd, "stack")


def row_lookup(table: Tensor, index: int) -> Tensor:
    """Row of an embedding table; gradient scatters back to that row."""
    if table.data.ndim != 2:
        raise ContractError(f"row_lookup expects a matrix, got {table.data.shape}")
    if not 0 <= index < table.data.shape[0]:
        raise ContractError(
            f"row index {index} outside table extent {table.data.shape[0]}"
        )
    out = table.data[index].copy()

    def bwd(g):
        buf = _grad_buf(table)
        buf[index] += g

    return _node(out, (table,), bwd, "row_lookup")


def gather(v: Tensor, indices) -> Tensor:
    """Pick entries of a 1-D tensor; duplicate indices accumulate."""
    if v.data.ndim != 1:
        raise ContractError(f"gather expects a vector, got shape {v.data.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        raise ContractError("gather with empty index list")
    if idx.min() < 0 or idx.max() >= v.data.shape[0]:
        raise ContractError(f"gather index outside extent {v.data.shape[0]}")
    out = v.data[idx]

    def bwd(g):
        buf = _grad_buf(v)
        np.add.at(buf, idx, g)

    return _node(out, (v,), bwd, "gather")


def linear(W: Tensor, x: Tensor, b: Tensor) -> Tensor:
    """Fused W @ x + b for a vector x."""
    _same_dtype(W, x, b)
    if W.data.ndim != 2 or x.data.ndim != 1 or W.data.shape[1] != x.data.shape[0]:
        raise ContractError(f"linear shape mismatch: {W.data.shape} @ {x.data.shape}")
    if b.data.shape != (W.data.shape[0],):
        raise ContractError(f"linear bias mismatch: {W.data.shape} + {b.data.shape}")
    out = W.data @ x.data + b.data

    def bwd(g):
        _acc(W, np.outer(g, x.data))
        _acc(x, W.data.T @ g)
        _acc(b, g)

    return _node(out, (W, x, b), bwd, "linear")


def gru_cell(x: Tensor, h: Tensor, W: Tensor, U: Tensor, b: Tensor) -> Tensor:
    """One recurrent cell step; see backend kernels for the gate math."""
    _same_dtype(x, h, W, U, b)
    n = h.data.shape[0]
    e = x.data.shape[0]
    if W.data.shape != (3 * n, e) or U.data.shape != (3 * n, n) or b.data.shape != (3 * n,):
        raise ContractError(
            f"gru_cell shape mismatch: x{x.data.shape} h{h.data.shape} "
            f"W{W.data.shape} U{U.data.shape} b{b.data.shape}"
        )
    h_new, r, u, c = backend.gru_cell_forward(x.data, h.data, W.data, U.data, b.data)

    def bwd(g):
        backend.gru_cell_backward(
            np.ascontiguousarray(g), x.data, h.data, W.data, U.data, r, u, c,
            _grad_buf(x), _grad_buf(h), _grad_buf(W), _grad_buf(U), _grad_buf(b),
        )

    return _node(h_new, (x, h, W, U, b), bwd, "gru_cell")


def masked_cross_entropy(logits: Tensor, target_id: int, banned: Iterable[int] = ()) -> Tensor:
    """Negative log of the masked softmax probability of target_id.

    Entries listed in `banned` are treated as minus infinity (probability
    exactly zero); the target must not be banned.
    """
    if logits.data.ndim != 1:
        raise ContractError(f"cross entropy expects a vector, got {logits.data.shape}")
    n = logits.data.shape[0]
    if not 0 <= target_id < n:
        raise ContractError(f"target {target_id} outside extent {n}")
    banned_idx = np.asarray(sorted(set(banned)), dtype=np.int64)
    if banned_idx.size and (banned_idx.min() < 0 or banned_idx.max() >= n):
        raise ContractError(f"banned index outside extent {n}")
    if target_id in set(banned_idx.tolist()):
        raise ContractError(f"target {target_id} is banned")
    probs = _masked_softmax_np(logits.data, banned_idx)
    p_t = probs[target_id]
    if p_t <= 0:
        raise NumericError("target probability underflowed to zero")
    out = np.asarray(-math.log(p_t), dtype=logits.data.dtype)

    def bwd(g):
        d = probs * float(g)
        d[target_id] -= float(g)
        _acc(logits, d.astype(logits.data.dtype, copy=False))

    return _node(out, (logits,), bwd, "masked_cross_entropy")


def _masked_softmax_np(logits: np.ndarray, banned_idx: np.ndarray) -> np.ndarray:
    """Softmax with banned entries forced to probability zero (numpy only)."""
    work = logits.astype(np.float64, copy=True)
    if banned_idx.size:
        work[banned_idx] = -np.inf
    m = work.max()
    if not np.isfinite(m):
        raise ContractError("all entries banned in masked softmax")
    e = np.exp(work - m)
    return e / e.sum()


def masked_softmax(logits: Tensor, banned: Iterable[int] = ()) -> np.ndarray:
    """Detached masked-softmax probabilities (float64), for sampling/stats."""
    banned_idx = np.asarray(sorted(set(banned)), dtype=np.int64)
    return _masked_softmax_np(logits.data, banned_idx)


def mean_all(t: Tensor) -> Tensor:
    out = np.asarray(t.data.mean(), dtype=t.data.dtype)
    size = t.data.size

    def bwd(g):
        _acc(t, np.full_like(t.data, g / size))

    return _node(out, (t,), bwd, "mean_all")


def sum_all(t: Tensor) -> Tensor:
    out = np.asarray(t.data.sum(), dtype=t.data.dtype)

    def bwd(g):
        _acc(t, np.full_like(t.data, g))

    return _node(out, (t,), bwd, "sum_all")


def mean_scalars(ts: Sequence[Tensor]) -> Tensor:
    """Mean of scalar tensors as one node."""
    return scale(add_n(list(ts)), 1.0 / len(ts))


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into .grad over the recorded graph."""
    if loss.data.shape != ():
        raise ContractError(f"backward expects a scalar, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack_:
        node, processed = stack_.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack_.append((p, False))
    loss.grad = np.ones((), dtype=loss.data.dtype)
    for node in reversed(topo):
        if node._bwd is not None and node.grad is not None:
            node._bwd(node.grad)


# ---------------------------------------------------------------------------
# verification helpers (64-bit finite differences)


def finite_difference_gradients(loss_fn, tensors, step: float = 1e-3) -> list[np.ndarray]:
    """Central finite differences of loss_fn() w.r.t. each tensor in-place.

    loss_fn must rebuild the forward pass from current tensor values and
    return a float.  Tensors should be float64 for the stated accuracy.
    """
    grads = []
    for t in tensors:
        flat = t.data.reshape(-1)
        g = np.zeros(flat.shape, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = loss_fn()
            flat[i] = orig - step
            lm = loss_fn()
            flat[i] = orig
            g[i] = (lp - lm) / (2.0 * step)
        grads.append(g.reshape(t.data.shape))
    return grads


def gradient_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> float:
    """Worst componentwise relative error, floored to keep tiny entries sane."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
