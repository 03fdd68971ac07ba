"""Rank-4 float32 tensors with tape-based reverse-mode differentiation.

Every value in the library is a dense (N, C, H, W) float32 array. Other
layouts ride on top of fixed conventions instead of extra ranks:

* conv weights       (Cout, Cin, kH, kW)
* conv bias          (1, C, 1, 1)
* matrices           (1, 1, R, C)
* scalars            (1, 1, 1, 1)

Ops record themselves on the active :class:`Tape` (a context manager,
thread-local) whenever any input has ``requires_grad``. Replaying the tape
in reverse order with :func:`backward` fills ``.grad`` buffers. Forward
passes outside a tape context record nothing and carry no overhead.
"""

from __future__ import annotations

import threading

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor", "Tape", "backward",
    "conv2d", "pixel_shuffle", "pixel_unshuffle",
    "softmax", "matmul", "matrix_transpose", "reshape", "concat", "narrow",
    "add", "hadamard", "relu", "leaky_relu", "sigmoid", "scale",
    "reduce_sum", "mse_loss",
]


class Tensor:
    """Dense rank-4 float32 value, optionally carrying a gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float32)
        if arr.ndim != 4:
            raise ValueError(f"tensors are rank-4 (N,C,H,W); got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"tensor dims must be positive; got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._tape = None

    @classmethod
    def zeros(cls, shape, requires_grad: bool = False) -> "Tensor":
        return cls(np.zeros(shape, dtype=np.float32), requires_grad=requires_grad)

    @classmethod
    def from_scalar(cls, value: float, requires_grad: bool = False) -> "Tensor":
        return cls(np.full((1, 1, 1, 1), value, dtype=np.float32), requires_grad=requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.size != 1:
            raise ValueError(f"item() needs a single-element tensor; got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class _Record:
    __slots__ = ("name", "out", "inputs", "backward_fn", "kink")

    def __init__(self, name, out, inputs, backward_fn, kink=None):
        self.name = name
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.kink = kink  # preactivation array of a kinked op, for gradcheck resampling


_LOCAL = threading.local()


def _tape_stack():
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered log of differentiable ops, confined to one thread.

    Usage::

        with Tape() as tape:
            loss = mse_loss(model(x), target)
        backward(loss, tape)

    A tape stays valid only while the parameter arrays it references are
    unchanged; record a fresh tape after every optimizer step.
    """

    def __init__(self):
        self._records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self, "tapes must be exited in LIFO order"
        return False

    def __len__(self) -> int:
        return len(self._records)

    def kink_margin(self) -> float:
        """Smallest |preactivation| across all kinked ops recorded, inf if none."""
        margin = np.inf
        for rec in self._records:
            if rec.kink is not None and rec.kink.size:
                margin = min(margin, float(np.abs(rec.kink).min()))
        return margin

    def zero_grad(self) -> None:
        for rec in self._records:
            rec.out.grad = None
            for t in rec.inputs:
                t.grad = None

    def backward_from(self, out: Tensor, seed: np.ndarray) -> None:
        """Replay the tape in reverse, seeding ``out.grad`` with ``seed``.

        All gradients previously held by tensors on this tape are cleared
        first, so each call computes grads for exactly one upstream seed.
        """
        if out._tape is not self:
            raise ValueError("backward requires a tensor produced on this tape; "
                             "run the forward pass inside the tape context first")
        seed = np.asarray(seed, dtype=np.float32)
        if seed.shape != out.shape:
            raise ValueError(f"seed shape {seed.shape} does not match output shape {out.shape}")
        self.zero_grad()
        out.grad = seed.copy()
        for rec in reversed(self._records):
            if rec.out.grad is not None:
                rec.backward_fn(rec.out.grad)


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate grads of every requires_grad tensor reachable from ``loss``."""
    if len(tape) == 0:
        raise ValueError("backward without a recorded forward pass")
    if loss.size != 1:
        raise ValueError(f"loss must be a scalar tensor; got shape {loss.shape}")
    tape.backward_from(loss, np.ones(loss.shape, dtype=np.float32))


def _ensure_grad(t: Tensor) -> np.ndarray:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    return t.grad


def _acc(t: Tensor, g) -> None:
    if t.requires_grad:
        _ensure_grad(t)
        t.grad += g


def _result(data, inputs, name, backward_fn, kink=None) -> Tensor:
    out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs))
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape._records.append(_Record(name, out, inputs, backward_fn, kink))
        out._tape = tape
    return out


def _pad_pair(padding):
    if isinstance(padding, tuple):
        ph, pw = padding
    else:
        ph = pw = int(padding)
    if ph < 0 or pw < 0:
        raise ValueError(f"padding must be >= 0; got {padding}")
    return ph, pw


# ---------------------------------------------------------------------------
# convolution and layout ops
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding=0) -> Tensor:
    """Strided 2-D cross-correlation plus bias.

    x: (N,Cin,H,W), weight: (Cout,Cin,kH,kW), bias: (1,Cout,1,1).
    Output spatial dims: floor((H + 2*pad - kH)/stride) + 1.
    Implemented as im2col + one sgemm; the backward pass reuses the
    unfolded columns.
    """
    n, cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin != cin_w:
        raise ValueError(f"conv2d channel mismatch: input {x.shape} expects weight "
                         f"Cin={cin}, got weight {weight.shape}")
    if bias.shape != (1, cout, 1, 1):
        raise ValueError(f"conv2d bias shape {bias.shape} does not match weight {weight.shape}; "
                         f"expected (1, {cout}, 1, 1)")
    if stride < 1:
        raise ValueError(f"stride must be >= 1; got {stride}")
    ph, pw = _pad_pair(padding)
    ho = (h + 2 * ph - kh) // stride + 1
    wo = (w + 2 * pw - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d kernel {weight.shape} does not fit input {x.shape} "
                         f"with stride={stride}, padding={padding}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # (N, Cin, Ho, Wo, kh, kw) -> (N*Ho*Wo, Cin*kh*kw)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, cin * kh * kw)
    w2 = weight.data.reshape(cout, -1)
    out = cols @ w2.T
    out = np.ascontiguousarray(out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))
    out += bias.data

    def bw(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, cout)
        if weight.requires_grad:
            _acc(weight, (g2.T @ cols).reshape(weight.shape))
        if bias.requires_grad:
            _acc(bias, g2.sum(axis=0).reshape(1, cout, 1, 1))
        if x.requires_grad:
            dcols = g2 @ w2
            dwin = dcols.reshape(n, ho, wo, cin, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            dxp = np.zeros((n, cin, h + 2 * ph, w + 2 * pw), dtype=np.float32)
            for ky in range(kh):
                for kx in range(kw):
                    dxp[:, :, ky:ky + stride * ho:stride, kx:kx + stride * wo:stride] += dwin[:, :, :, :, ky, kx]
            _acc(x, dxp[:, :, ph:ph + h, pw:pw + w])

    return _result(out, (x, weight, bias), "conv2d", bw)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Rearrange (N, C*r^2, H, W) -> (N, C, H*r, W*r); bijective, no arithmetic."""
    n, c_in, h, w = x.shape
    if r < 1 or c_in % (r * r) != 0:
        raise ValueError(f"pixel_shuffle needs channels divisible by r^2; got C={c_in}, r={r}")
    c = c_in // (r * r)
    out = x.data.reshape(n, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h * r, w * r)

    def bw(g):
        _acc(x, g.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(x.shape))

    return _result(np.ascontiguousarray(out), (x,), "pixel_shuffle", bw)


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Inverse of :func:`pixel_shuffle`: (N, C, H*r, W*r) -> (N, C*r^2, H, W)."""
    n, c, hr, wr = x.shape
    if r < 1 or hr % r != 0 or wr % r != 0:
        raise ValueError(f"pixel_unshuffle needs spatial dims divisible by r; got {x.shape}, r={r}")
    h, w = hr // r, wr // r
    out = x.data.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h, w)

    def bw(g):
        _acc(x, g.reshape(n, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(x.shape))

    return _result(np.ascontiguousarray(out), (x,), "pixel_unshuffle", bw)


def reshape(x: Tensor, shape) -> Tensor:
    """Row-major relabel to another rank-4 shape with the same element count."""
    shape = tuple(int(s) for s in shape)
    if len(shape) != 4 or int(np.prod(shape)) != x.size:
        raise ValueError(f"cannot reshape {x.shape} ({x.size} elements) to {shape}")
    old = x.shape

    def bw(g):
        _acc(x, g.reshape(old))

    return _result(x.data.reshape(shape), (x,), "reshape", bw)


def concat(tensors, axis: int) -> Tensor:
    """Concatenate along the batch (0) or channel (1) axis."""
    if axis not in (0, 1):
        raise ValueError(f"concat supports axis 0 or 1; got {axis}")
    tensors = list(tensors)
    ref = tensors[0].shape
    for t in tensors[1:]:
        if tuple(s for i, s in enumerate(t.shape) if i != axis) != \
           tuple(s for i, s in enumerate(ref) if i != axis):
            raise ValueError(f"concat shape mismatch on axis {axis}: {ref} vs {t.shape}")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * 4
            sl[axis] = slice(start, stop)
            _acc(t, g[tuple(sl)])

    out = np.concatenate([t.data for t in tensors], axis=axis)
    return _result(out, tuple(tensors), "concat", bw)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of ``length`` entries along axis 0 or 1."""
    if axis not in (0, 1):
        raise ValueError(f"narrow supports axis 0 or 1; got {axis}")
    if start < 0 or length < 1 or start + length > x.shape[axis]:
        raise ValueError(f"narrow range [{start}, {start + length}) out of bounds "
                         f"for axis {axis} of shape {x.shape}")
    sl = [slice(None)] * 4
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def bw(g):
        if x.requires_grad:
            _ensure_grad(x)
            x.grad[sl] += g

    return _result(x.data[sl], (x,), "narrow", bw)


# ---------------------------------------------------------------------------
# matrix ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes must match."""
    if a.shape[:2] != b.shape[:2] or a.shape[3] != b.shape[2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g):
        if a.requires_grad:
            _acc(a, np.matmul(g, b.data.transpose(0, 1, 3, 2)))
        if b.requires_grad:
            _acc(b, np.matmul(a.data.transpose(0, 1, 3, 2), g))

    return _result(out, (a, b), "matmul", bw)


def matrix_transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    def bw(g):
        _acc(x, g.transpose(0, 1, 3, 2))

    return _result(np.ascontiguousarray(x.data.transpose(0, 1, 3, 2)), (x,), "matrix_transpose", bw)


def softmax(x: Tensor) -> Tensor:
    """Softmax along the last axis, computed with max subtraction.

    Rows (all leading axes fixed) are nonnegative and sum to 1.
    """
    m = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(m.astype(np.float64))
    y = (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)

    def bw(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        _acc(x, y * (g - inner))

    return _result(y, (x,), "softmax", bw)


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------

def _check_same_shape(op, a, b):
    if a.shape != b.shape:
        raise ValueError(f"{op} shape mismatch: {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    _check_same_shape("add", a, b)

    def bw(g):
        _acc(a, g)
        _acc(b, g)

    return _result(a.data + b.data, (a, b), "add", bw)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two same-shape tensors."""
    _check_same_shape("hadamard", a, b)

    def bw(g):
        if a.requires_grad:
            _acc(a, g * b.data)
        if b.requires_grad:
            _acc(b, g * a.data)

    return _result(a.data * b.data, (a, b), "hadamard", bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bw(g):
        _acc(x, g * mask)

    return _result(np.where(mask, x.data, 0.0).astype(np.float32), (x,), "relu", bw,
                   kink=x.data)


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    mask = x.data > 0

    def bw(g):
        _acc(x, g * np.where(mask, 1.0, slope).astype(np.float32))

    out = np.where(mask, x.data, x.data * slope).astype(np.float32)
    return _result(out, (x,), "leaky_relu", bw, kink=x.data)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, overflow-safe on both tails."""
    d = x.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(np.float32)

    def bw(g):
        _acc(x, g * y * (1.0 - y))

    return _result(y, (x,), "sigmoid", bw)


def scale(x: Tensor, s: Tensor) -> Tensor:
    """Multiply a tensor by a trainable scalar parameter of shape (1,1,1,1)."""
    if s.shape != (1, 1, 1, 1):
        raise ValueError(f"scale factor must have shape (1,1,1,1); got {s.shape}")

    def bw(g):
        if x.requires_grad:
            _acc(x, g * s.data)
        if s.requires_grad:
            _acc(s, np.sum(g.astype(np.float64) * x.data, dtype=np.float64)
                 .astype(np.float32).reshape(1, 1, 1, 1))

    return _result(x.data * s.data, (x, s), "scale", bw)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def reduce_sum(x: Tensor) -> Tensor:
    """Sum of all elements, as a (1,1,1,1) scalar tensor."""
    total = np.sum(x.data, dtype=np.float64)

    def bw(g):
        _acc(x, np.broadcast_to(g.reshape(()), x.shape))

    return _result(np.float32(total).reshape(1, 1, 1, 1), (x,), "reduce_sum", bw)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared difference over every element (batch, channel, pixel)."""
    _check_same_shape("mse_loss", pred, target)
    diff = pred.data.astype(np.float64) - target.data
    val = np.float32(np.mean(diff * diff))

    def bw(g):
        c = float(g.reshape(())) * 2.0 / pred.size
        d = (c * diff).astype(np.float32)
        if pred.requires_grad:
            _acc(pred, d)
        if target.requires_grad:
            _acc(target, -d)

    return _result(val.reshape(1, 1, 1, 1), (pred, target), "mse_loss", bw)
