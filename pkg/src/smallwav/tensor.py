"""Reverse-mode automatic differentiation on numpy arrays.

Small closure-tape design: every op returns a Tensor that remembers its
parents and a backward closure.  Calling ``backward()`` on a scalar loss
walks the tape in reverse topological order and accumulates gradients
with ``+=`` into every tensor that requires them.  There is no implicit
zeroing; optimizers must clear gradients between steps.

Only the ops the acoustic model needs are provided.  Shapes are checked
eagerly and failures name both operands.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "ShapeError",
    "NumericError",
    "Rng",
    "add",
    "sub",
    "neg",
    "mul",
    "matmul",
    "tsum",
    "tmean",
    "square",
    "tlog",
    "clamp_min",
    "softmax",
    "gelu",
    "layer_norm",
    "conv1d",
    "attention_core",
    "transpose",
]

_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT2PI = float(1.0 / np.sqrt(2.0 * np.pi))


class ShapeError(ValueError):
    """Operand shapes do not satisfy an op's contract."""


class NumericError(ValueError):
    """Operand values are outside an op's numeric domain."""


class Tensor:
    """A numpy array plus a gradient slot and a place on the tape.

    ``data`` holds the values, ``grad`` is either None or an array of the
    same shape, and ``requires_grad`` marks leaves that want gradients.
    Results of ops require grad whenever any parent does.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def detach(self) -> "Tensor":
        """A new leaf sharing this tensor's values, cut off from the tape."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(()))

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's grad.

        Only defined for scalars (size 1).  Gradients add onto whatever
        is already stored, so callers zero them between optimizer steps.
        """
        if self.data.size != 1:
            raise ShapeError(
                f"backward: root must be a scalar, got shape {self.shape}"
            )
        order = _toposort(self)
        if self.grad is None:
            self.grad = np.ones_like(self.data)
        else:
            self.grad = self.grad + np.ones_like(self.data)
        for node in order:
            if node._backward is not None:
                node._backward(node.grad)

    # Operator sugar.  Scalars and ndarrays lift to constant tensors.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return _getitem(self, idx)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"


def _toposort(root: Tensor) -> list:
    """Tape order from root back to leaves, iterative to spare the stack."""
    order = []
    seen = set()
    stack = [(root, iter(root._parents))]
    seen.add(id(root))
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if id(p) not in seen and (p._backward is not None or p.requires_grad):
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    order.reverse()
    return order


def _lift(x, like: Tensor | None = None) -> Tensor:
    """Wrap scalars and arrays as constant tensors, matching dtype if known."""
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    arr = np.asarray(x, dtype=dtype)
    if arr.dtype.kind != "f":
        arr = arr.astype(np.float64)
    return Tensor(arr)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g


def _make(data, parents, backward, requires_grad=None) -> Tensor:
    if requires_grad is None:
        requires_grad = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires_grad)
    if requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# elementwise and reduction ops


def add(a, b) -> Tensor:
    a = _lift(a, like=b if isinstance(b, Tensor) else None)
    b = _lift(b, like=a)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast")

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), bw)


def sub(a, b) -> Tensor:
    return add(a, neg(_lift(b, like=a if isinstance(a, Tensor) else None)))


def neg(a) -> Tensor:
    a = _lift(a)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, -g)

    return _make(-a.data, (a,), bw)


def mul(a, b) -> Tensor:
    a = _lift(a, like=b if isinstance(b, Tensor) else None)
    b = _lift(b, like=a)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), bw)


def matmul(a, b) -> Tensor:
    """Strict 2-D matrix product."""
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(
            f"matmul: expected 2-D operands, got {a.shape} @ {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {a.shape} @ {b.shape}"
        )
    data = a.data @ b.data

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _make(data, (a, b), bw)


def tsum(a, axis=None) -> Tensor:
    a = _lift(a)
    data = a.data.sum(axis=axis, keepdims=False)

    def bw(g):
        if not a.requires_grad:
            return
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    return _make(data, (a,), bw)


def tmean(a, axis=None) -> Tensor:
    a = _lift(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / float(n))


def square(a) -> Tensor:
    a = _lift(a)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, 2.0 * a.data * g)

    return _make(a.data * a.data, (a,), bw)


def tlog(a) -> Tensor:
    """Natural log.  Rejects non-positive inputs rather than emitting inf."""
    a = _lift(a)
    if np.any(a.data <= 0.0) or not np.all(np.isfinite(a.data)):
        raise NumericError("log: input must be finite and strictly positive")
    data = np.log(a.data)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g / a.data)

    return _make(data, (a,), bw)


def clamp_min(a, floor: float) -> Tensor:
    """Elementwise max(a, floor).  Gradient passes only where a > floor."""
    a = _lift(a)
    data = np.maximum(a.data, a.data.dtype.type(floor))

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g * (a.data > floor))

    return _make(data, (a,), bw)


def _getitem(a: Tensor, idx) -> Tensor:
    data = a.data[idx]

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            _accumulate(a, full)

    return _make(data, (a,), bw)


def transpose(a) -> Tensor:
    a = _lift(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected a 2-D tensor, got {a.shape}")

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g.T)

    return _make(a.data.T.copy(), (a,), bw)


# ---------------------------------------------------------------------------
# nonlinearities


def softmax(a, axis: int = -1) -> Tensor:
    """Shift-stable softmax along one axis."""
    a = _lift(a)
    if not np.all(np.isfinite(a.data)):
        raise NumericError("softmax: input must be finite")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        if a.requires_grad:
            inner = (g * y).sum(axis=axis, keepdims=True)
            _accumulate(a, y * (g - inner))

    return _make(y, (a,), bw)


def gelu(a) -> Tensor:
    """Exact Gaussian-error-linear unit, x * Phi(x)."""
    a = _lift(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * x.dtype.type(_INV_SQRT2)))
    data = x * cdf

    def bw(g):
        if a.requires_grad:
            pdf = np.exp(-0.5 * x * x) * x.dtype.type(_INV_SQRT2PI)
            _accumulate(a, g * (cdf + x * pdf))

    return _make(data, (a,), bw)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then affine.

    ``gain`` and ``bias`` are vectors matching the last axis.  Variance is
    the population variance with ``eps`` added before the square root.
    """
    x, gain, bias = _lift(x), _lift(gain), _lift(bias)
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain {gain.shape} and bias {bias.shape} "
            f"must both be ({d},) for input {x.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = (x.data - mu) * inv
    data = gain.data * xhat + bias.data

    def bw(g):
        if gain.requires_grad:
            _accumulate(gain, (g * xhat).reshape(-1, d).sum(axis=0))
        if bias.requires_grad:
            _accumulate(bias, g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gh = g * gain.data
            m1 = gh.mean(axis=-1, keepdims=True)
            m2 = (gh * xhat).mean(axis=-1, keepdims=True)
            _accumulate(x, inv * (gh - m1 - xhat * m2))

    return _make(data, (x, gain, bias), bw)


# ---------------------------------------------------------------------------
# structured ops


def conv1d(x, kernels, stride: int) -> Tensor:
    """Valid cross-correlation of a multichannel signal with a kernel bank.

    Args:
        x: Tensor of shape (C_in, L).
        kernels: Tensor of shape (C_out, C_in, K).
        stride: positive hop between output positions.

    Returns:
        Tensor of shape (C_out, L') with L' = floor((L - K) / stride) + 1.
        No padding is applied; L < K is a shape error.
    """
    x, kernels = _lift(x), _lift(kernels)
    if x.data.ndim != 2 or kernels.data.ndim != 3:
        raise ShapeError(
            f"conv1d: expected x (C_in, L) and kernels (C_out, C_in, K), "
            f"got {x.shape} and {kernels.shape}"
        )
    if stride < 1:
        raise ShapeError(f"conv1d: stride must be >= 1, got {stride}")
    c_in, length = x.data.shape
    c_out, c_in_k, k = kernels.data.shape
    if c_in_k != c_in:
        raise ShapeError(
            f"conv1d: channel mismatch, x {x.shape} vs kernels {kernels.shape}"
        )
    if length < k:
        raise ShapeError(
            f"conv1d: signal length {length} shorter than kernel width {k}"
        )
    # (C_in, L', K) view of every window the kernel touches.
    windows = np.lib.stride_tricks.sliding_window_view(x.data, k, axis=1)[:, ::stride]
    data = np.einsum("oik,ilk->ol", kernels.data, windows, optimize=True)
    l_out = data.shape[1]

    def bw(g):
        if kernels.requires_grad:
            _accumulate(kernels, np.einsum("ol,ilk->oik", g, windows, optimize=True))
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            # Scatter each kernel tap back onto the strided input positions.
            for tap in range(k):
                contrib = np.einsum("ol,oi->il", g, kernels.data[:, :, tap], optimize=True)
                gx[:, tap : tap + stride * l_out : stride] += contrib
            _accumulate(x, gx)

    return _make(data, (x, kernels), bw)


def attention_core(q, k, v, n_heads: int) -> Tensor:
    """Fused multi-head scaled dot-product attention over one sequence.

    Inputs are (N, d) projections; the op splits heads, applies
    softmax(Q K^T / sqrt(d_head)) per head, and merges heads back to
    (N, d).  The score computation always runs in floating point; the op
    refuses integer inputs so quantized layers cannot leak raw int8 here.
    """
    q, k, v = _lift(q), _lift(k), _lift(v)
    for name, t in (("q", q), ("k", k), ("v", v)):
        if t.data.dtype.kind != "f":
            raise TypeError(f"attention_core: {name} must be floating point, got {t.dtype}")
    if q.shape != k.shape or q.shape != v.shape:
        raise ShapeError(
            f"attention_core: q {q.shape}, k {k.shape}, v {v.shape} must match"
        )
    if q.data.ndim != 2:
        raise ShapeError(f"attention_core: expected (N, d) inputs, got {q.shape}")
    n, d = q.data.shape
    if d % n_heads != 0:
        raise ShapeError(
            f"attention_core: model width {d} not divisible by {n_heads} heads"
        )
    dh = d // n_heads
    scale = 1.0 / np.sqrt(dh)
    qh = q.data.reshape(n, n_heads, dh)
    kh = k.data.reshape(n, n_heads, dh)
    vh = v.data.reshape(n, n_heads, dh)
    scores = np.einsum("ihd,jhd->hij", qh, kh, optimize=True) * qh.dtype.type(scale)
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    att = e / e.sum(axis=-1, keepdims=True)
    data = np.einsum("hij,jhd->ihd", att, vh, optimize=True).reshape(n, d)

    def bw(g):
        gh = g.reshape(n, n_heads, dh)
        if v.requires_grad:
            _accumulate(v, np.einsum("hij,ihd->jhd", att, gh, optimize=True).reshape(n, d))
        if not (q.requires_grad or k.requires_grad):
            return
        datt = np.einsum("ihd,jhd->hij", gh, vh, optimize=True)
        inner = (datt * att).sum(axis=-1, keepdims=True)
        dscore = att * (datt - inner) * att.dtype.type(scale)
        if q.requires_grad:
            _accumulate(q, np.einsum("hij,jhd->ihd", dscore, kh, optimize=True).reshape(n, d))
        if k.requires_grad:
            _accumulate(k, np.einsum("hij,ihd->jhd", dscore, qh, optimize=True).reshape(n, d))

    return _make(data, (q, k, v), bw)


# ---------------------------------------------------------------------------
# randomness


class Rng:
    """Deterministic, splittable random stream on top of PCG64.

    ``Rng(seed)`` always yields the same draw sequence.  ``child(*key)``
    derives an independent stream from the seed plus an integer key path,
    so callers can hand out per-epoch or per-worker streams without
    coupling their draw counts.
    """

    def __init__(self, seed: int, _key: tuple = ()):
        self.seed = int(seed)
        self._key = tuple(int(k) for k in _key)
        ss = np.random.SeedSequence((self.seed,) + self._key)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *key: int) -> "Rng":
        return Rng(self.seed, self._key + tuple(key))

    def normal(self, shape, std: float = 1.0, dtype=np.float64) -> np.ndarray:
        return (self._gen.standard_normal(shape) * std).astype(dtype)

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def integers(self, low: int, high: int, size=None):
        """Draws from [low, high), matching numpy's Generator convention."""
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
