"""Reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps a dense numpy array plus an optional gradient buffer. Ops run
eagerly on the arrays and, while a Tape is active, append a node holding the
references and closures needed to replay the step in reverse. One backward
pass per tape; re-running backward without re-recording the graph is an
error. The op set is exactly what the segmentation, generation, and
discrimination networks and their losses require.

Training runs in single precision. Gradient checks should build float64
tensors; every op preserves the dtype of its inputs.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, DataError, NumericError, UsageError

_TAPE_STACK: list["Tape"] = []
_DEBUG = False


def set_debug(enabled: bool) -> None:
    """Toggle per-op finiteness and domain assertions (off by default)."""
    global _DEBUG
    _DEBUG = bool(enabled)


class Tensor:
    """A dense array with an optional gradient buffer of the same shape."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.item())

    def detach(self) -> "Tensor":
        """A view of the same values that no gradient will flow through."""
        return Tensor(self.data)

    def clear_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_scalar(self, -float(other))

    def __rsub__(self, other):
        return add_scalar(scale(self, -1.0), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)


class _Node:
    __slots__ = ("out", "inputs", "grad_fn")

    def __init__(self, out, inputs, grad_fn):
        self.out = out
        self.inputs = inputs
        self.grad_fn = grad_fn


class Tape:
    """Ordered record of forward ops, consumed by a single backward pass."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._produced: set[int] = set()
        self._consumed = False

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        if popped is not self:
            raise UsageError("tape exited out of order")
        return False

    def __len__(self):
        return len(self._nodes)


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _finish(out_data, inputs, grad_fn) -> Tensor:
    out = Tensor(out_data)
    if _DEBUG and not np.all(np.isfinite(out.data)):
        raise NumericError("op produced non-finite values")
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._nodes.append(_Node(out, inputs, grad_fn))
        tape._produced.add(id(out))
    return out


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise UsageError(f"{op} needs matching shapes, got {a.data.shape} and {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")
    return _finish(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")
    return _finish(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")
    return _finish(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(x: Tensor, c) -> Tensor:
    c = float(c)
    return _finish(x.data * c, (x,), lambda g: (g * c,))


def add_scalar(x: Tensor, c) -> Tensor:
    c = float(c)
    return _finish(x.data + c, (x,), lambda g: (g,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _finish(np.where(mask, x.data, 0.0), (x,), lambda g: (np.where(mask, g, 0.0),))


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    slope = float(slope)
    mask = x.data > 0
    y = np.where(mask, x.data, x.data * slope)
    return _finish(y, (x,), lambda g: (np.where(mask, g, g * slope),))


def sigmoid(x: Tensor) -> Tensor:
    # Split by sign so neither branch exponentiates a large positive value.
    pos = x.data >= 0
    e = np.exp(np.where(pos, -x.data, x.data))
    y = np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e))
    return _finish(y, (x,), lambda g: (g * y * (1.0 - y),))


def log(x: Tensor) -> Tensor:
    if _DEBUG and np.any(x.data <= 0):
        raise NumericError("log requires strictly positive inputs; clamp first")
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(x.data)
    return _finish(y, (x,), lambda g: (g / x.data,))


def absolute(x: Tensor) -> Tensor:
    return _finish(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    lo, hi = float(lo), float(hi)
    if not lo <= hi:
        raise UsageError(f"clamp needs lo <= hi, got [{lo}, {hi}]")
    inside = (x.data >= lo) & (x.data <= hi)
    return _finish(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


def sum_all(x: Tensor) -> Tensor:
    return _finish(x.data.sum(), (x,), lambda g: (np.full_like(x.data, float(g)),))


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    return _finish(x.data.mean(), (x,), lambda g: (np.full_like(x.data, float(g) / n),))


def softmax_channels(x: Tensor) -> Tensor:
    """Softmax over axis 1 of a [B, C, H, W] score tensor, max-stabilized."""
    if x.data.ndim != 4:
        raise UsageError(f"softmax_channels expects [B, C, H, W], got shape {x.data.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def grads(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return _finish(p, (x,), grads)


def gather_class(values: Tensor, labels: np.ndarray) -> Tensor:
    """Select values[b, labels[b, y, x], y, x], yielding a [B, H, W] tensor."""
    if values.data.ndim != 4:
        raise UsageError(f"gather_class expects [B, C, H, W], got shape {values.data.shape}")
    labels = np.asarray(labels)
    if not np.issubdtype(labels.dtype, np.integer):
        raise UsageError("gather_class needs an integer label array")
    b, c, h, w = values.data.shape
    if labels.shape != (b, h, w):
        raise UsageError(f"labels shape {labels.shape} does not match values {(b, h, w)}")
    bad = (labels < 0) | (labels >= c)
    if np.any(bad):
        bb, yy, xx = (int(v[0]) for v in np.nonzero(bad))
        raise DataError(
            f"label {int(labels[bb, yy, xx])} at pixel (batch {bb}, row {yy}, col {xx}) "
            f"is outside [0, {c})"
        )
    idx = labels[:, None]
    y = np.take_along_axis(values.data, idx, axis=1)[:, 0]

    def grads(g):
        z = np.zeros_like(values.data)
        np.put_along_axis(z, idx, g[:, None], axis=1)
        return (z,)

    return _finish(y, (values,), grads)


def upsample_nearest2x(x: Tensor) -> Tensor:
    """Duplicate every pixel of a [B, C, H, W] tensor into a 2x2 block."""
    if x.data.ndim != 4:
        raise UsageError(f"upsample_nearest2x expects [B, C, H, W], got shape {x.data.shape}")
    y = x.data.repeat(2, axis=2).repeat(2, axis=3)
    b, c, h, w = x.data.shape

    def grads(g):
        return (g.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return _finish(y, (x,), grads)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate [B, Cin, H, W] with [Cout, Cin, kh, kw] kernels."""
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ConfigurationError(
            f"conv2d expects 4d input and kernel, got {x.data.shape} and {kernel.data.shape}")
    b, cin, h, w = x.data.shape
    cout, kc, kh, kw = kernel.data.shape
    if kc != cin:
        raise ConfigurationError(f"kernel expects {kc} input channels, input has {cin}")
    if bias is not None and bias.data.shape != (cout,):
        raise ConfigurationError(f"bias shape {bias.data.shape} does not match {cout} output channels")
    stride = int(stride)
    padding = int(padding)
    if stride < 1 or padding < 0:
        raise ConfigurationError(f"invalid stride {stride} or padding {padding}")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ConfigurationError(
            f"kernel {kh}x{kw} does not fit input {h}x{w} with padding {padding}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    # [B, Cin, OH, OW, kh, kw] -> [B, Cin*kh*kw, OH*OW]
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(b, cin * kh * kw, oh * ow)
    wflat = kernel.data.reshape(cout, cin * kh * kw)
    out = np.matmul(wflat, cols).reshape(b, cout, oh, ow)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    need_x, need_w = x.requires_grad, kernel.requires_grad

    def grads(g):
        gflat = g.reshape(b, cout, oh * ow)
        gx = gw = gb = None
        if need_w:
            gw = np.tensordot(gflat, cols, axes=([0, 2], [0, 2])).reshape(kernel.data.shape)
        if need_x:
            gcols = np.matmul(wflat.T, gflat).reshape(b, cin, kh, kw, oh, ow)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += gcols[:, :, i, j]
            gx = gxp[:, :, padding:padding + h, padding:padding + w]
            if padding:
                gx = np.ascontiguousarray(gx)
        if bias is None:
            return (gx, gw)
        gb = g.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        return (gx, gw, gb)

    return _finish(out, inputs, grads)


def backward(tape: Tape, loss: Tensor) -> None:
    """Propagate d(loss)/d(leaf) into the grad buffers of every leaf tensor.

    The loss must be a scalar produced while the tape was active. Gradients
    accumulate into existing grad buffers, so zero or clear them between
    steps.
    """
    if tape._consumed:
        raise UsageError("tape already consumed; record a fresh forward graph first")
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if id(loss) not in tape._produced:
        raise UsageError("loss was not recorded on this tape")
    tape._consumed = True

    flow: dict[int, tuple[Tensor, np.ndarray]] = {
        id(loss): (loss, np.ones_like(loss.data))}
    for node in reversed(tape._nodes):
        entry = flow.pop(id(node.out), None)
        if entry is None:
            continue
        for t, g in zip(node.inputs, node.grad_fn(entry[1])):
            if g is None or not t.requires_grad:
                continue
            key = id(t)
            if key in flow:
                flow[key] = (t, flow[key][1] + g)
            else:
                flow[key] = (t, g)
    for t, g in flow.values():
        t.grad = g.copy() if t.grad is None else t.grad + g


def finite_diff_check(f, x: Tensor, eps: float = 1e-4) -> float:
    """Max relative error between reverse-mode and central-difference grads.

    f must map the tensor x to a scalar Tensor and be re-runnable. The
    relative error of element i is |a_i - n_i| / max(1e-8, |a_i| + |n_i|).
    Call with float64 data; single precision drowns the signal in rounding.
    """
    if not isinstance(x, Tensor) or not x.requires_grad:
        raise UsageError("finite_diff_check needs a Tensor with requires_grad=True")
    x.grad = None
    with Tape() as tape:
        y = f(x)
    if y.data.size != 1:
        raise UsageError(f"f must return a scalar, got shape {y.data.shape}")
    backward(tape, y)
    if x.grad is None:
        raise UsageError("f does not depend on x; nothing to check")
    analytic = x.grad.reshape(-1).copy()

    flat = x.data.reshape(-1)
    numeric = np.zeros_like(analytic)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(x).data)
        flat[i] = orig - eps
        lo = float(f(x).data)
        flat[i] = orig
        numeric[i] = (hi - lo) / (2.0 * eps)

    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))
