"""Dense float tensors with a tape for reverse-mode differentiation.

Every operation that touches a ``Value`` with ``requires_grad=True`` appends a
node to the calling thread's tape.  ``backward`` walks that tape in strict
reverse append order, accumulates adjoints into every ancestor that requires a
gradient, then clears the tape.  Model state lives in float32; the
finite-difference checker temporarily promotes the parameters it checks to
float64 so the oracle itself is trustworthy.
"""
from __future__ import annotations

import math
import threading
from contextlib import contextmanager

import numpy as np

__all__ = [
    "ShapeError",
    "TapeError",
    "Value",
    "Tape",
    "get_tape",
    "fresh_tape",
    "no_grad",
    "backward",
    "finite_diff_check",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "scale",
    "power",
    "relu",
    "exp",
    "log",
    "sigmoid",
    "sqrt",
    "clip",
    "sum",
    "mean",
    "reshape",
    "transpose",
    "concat",
    "broadcast_to",
    "matmul",
    "softmax",
    "log_softmax",
    "layer_norm",
    "depthwise_conv2d",
    "bilinear_resize",
    "interp_matrix",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NonFiniteError(ValueError):
    """NaN reached an op that cannot propagate it meaningfully."""


class TapeError(RuntimeError):
    """Raised when a node handle outlives the tape that recorded it."""


class _Node:
    __slots__ = ("tag", "inputs", "out", "backward")

    def __init__(self, tag, inputs, out, backward):
        self.tag = tag
        self.inputs = inputs
        self.out = out
        self.backward = backward


class Tape:
    """Append-only record of differentiable operations."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.generation = 0

    def __len__(self):
        return len(self.nodes)

    def record(self, tag, inputs, out, backward_fn):
        out._node = len(self.nodes)
        out._tape = self
        out._gen = self.generation
        self.nodes.append(_Node(tag, inputs, out, backward_fn))

    def clear(self):
        self.nodes = []
        self.generation += 1


class _State(threading.local):
    def __init__(self):
        self.tape = Tape()
        self.grad_enabled = True


_state = _State()


def get_tape() -> Tape:
    return _state.tape


@contextmanager
def fresh_tape():
    """Install an empty tape for the duration of the block."""
    previous = _state.tape
    _state.tape = Tape()
    try:
        yield _state.tape
    finally:
        _state.tape = previous


@contextmanager
def no_grad():
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Value:
    """A dense array that can take part in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_node", "_tape", "_gen")
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data)
        if arr.dtype != np.float32 and arr.dtype != np.float64:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._node = None
        self._tape = None
        self._gen = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def tape_id(self):
        return self._node

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Value(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Value(self.data)

    def zero_grad(self):
        self.grad = None

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return _getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sigmoid(self):
        return sigmoid(self)

    def sqrt(self):
        return sqrt(self)


# ----------------------------------------------------------------------
# plumbing
# ----------------------------------------------------------------------
def _lift(x, like=None):
    if isinstance(x, Value):
        return x
    dtype = like.dtype if like is not None else np.float32
    return Value(np.asarray(x, dtype=dtype))


def _check_live(v: Value):
    if v._node is not None and v.requires_grad:
        if v._tape is None or v._gen != v._tape.generation:
            raise TapeError("value belongs to a cleared tape; rebuild the forward pass")


def _result(data, tag, inputs, backward_fn):
    out = Value(data)
    if _state.grad_enabled and any(v.requires_grad for v in inputs):
        for v in inputs:
            _check_live(v)
        out.requires_grad = True
        _state.tape.record(tag, inputs, out, backward_fn)
    return out


def _broadcast_shape(a_shape, b_shape):
    try:
        return np.broadcast_shapes(a_shape, b_shape)
    except ValueError:
        raise ShapeError(f"shapes {a_shape} and {b_shape} are not broadcast-compatible") from None


def _unbroadcast(g, shape):
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss: Value, retain_tape=False):
    """Accumulate d(loss)/d(v) into ``v.grad`` for every ancestor requiring grad.

    Returns a mapping from each leaf Value that received a gradient to that
    gradient.  The tape is cleared afterwards unless ``retain_tape`` is set.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    if loss._node is None:
        loss.grad = np.ones_like(loss.data)
        return {loss: loss.grad}
    tape = loss._tape
    if tape is None or loss._gen != tape.generation:
        raise TapeError("loss belongs to a cleared tape")
    loss.grad = np.ones_like(loss.data)
    leaves = {}
    for node in reversed(tape.nodes[: loss._node + 1]):
        g = node.out.grad
        if g is None:
            continue
        grads = node.backward(g)
        for parent, gp in zip(node.inputs, grads):
            if gp is None or not parent.requires_grad:
                continue
            parent.grad = gp if parent.grad is None else parent.grad + gp
            if parent._node is None:
                leaves[parent] = True
    if not retain_tape:
        tape.clear()
    return {leaf: leaf.grad for leaf in leaves}


# ----------------------------------------------------------------------
# elementwise
# ----------------------------------------------------------------------
def add(a, b):
    a, b = _lift(a, b if isinstance(b, Value) else None), _lift(b, a if isinstance(a, Value) else None)
    _broadcast_shape(a.shape, b.shape)

    def _bw(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(g, b.shape) if b.requires_grad else None)

    return _result(a.data + b.data, "add", (a, b), _bw)


def sub(a, b):
    a, b = _lift(a, b if isinstance(b, Value) else None), _lift(b, a if isinstance(a, Value) else None)
    _broadcast_shape(a.shape, b.shape)

    def _bw(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(-g, b.shape) if b.requires_grad else None)

    return _result(a.data - b.data, "sub", (a, b), _bw)


def mul(a, b):
    a, b = _lift(a, b if isinstance(b, Value) else None), _lift(b, a if isinstance(a, Value) else None)
    _broadcast_shape(a.shape, b.shape)

    def _bw(g):
        return (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.shape) if b.requires_grad else None)

    return _result(a.data * b.data, "mul", (a, b), _bw)


def div(a, b):
    a, b = _lift(a, b if isinstance(b, Value) else None), _lift(b, a if isinstance(a, Value) else None)
    _broadcast_shape(a.shape, b.shape)

    def _bw(g):
        return (_unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None)

    return _result(a.data / b.data, "div", (a, b), _bw)


def neg(x):
    x = _lift(x)
    return _result(-x.data, "neg", (x,), lambda g: (-g,))


def scale(x, c: float):
    """Multiply by a Python constant, keeping the operand's dtype."""
    x = _lift(x)
    c = x.dtype.type(c)
    return _result(x.data * c, "scale", (x,), lambda g: (g * c,))


def power(x, p: float):
    x = _lift(x)
    out = x.data ** p
    return _result(out, "pow", (x,), lambda g: (g * p * x.data ** (p - 1),))


def relu(x):
    x = _lift(x)
    mask = x.data > 0
    return _result(np.where(mask, x.data, x.dtype.type(0)), "relu", (x,), lambda g: (g * mask,))


def exp(x):
    x = _lift(x)
    out = np.exp(x.data)
    return _result(out, "exp", (x,), lambda g: (g * out,))


def log(x):
    x = _lift(x)
    return _result(np.log(x.data), "log", (x,), lambda g: (g / x.data,))


def sigmoid(x):
    x = _lift(x)
    out = np.exp(-np.logaddexp(x.dtype.type(0), -x.data))
    return _result(out, "sigmoid", (x,), lambda g: (g * out * (1 - out),))


def sqrt(x):
    x = _lift(x)
    out = np.sqrt(x.data)
    return _result(out, "sqrt", (x,), lambda g: (g * 0.5 / out,))


def clip(x, lo: float, hi: float):
    """Clamp into [lo, hi]; the gradient passes only where no clamping happened."""
    x = _lift(x)
    inside = (x.data >= lo) & (x.data <= hi)
    out = np.clip(x.data, x.dtype.type(lo), x.dtype.type(hi))
    return _result(out, "clip", (x,), lambda g: (g * inside,))


# ----------------------------------------------------------------------
# reductions and shape manipulation
# ----------------------------------------------------------------------
def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x, axis=None, keepdims=False):
    x = _lift(x)
    axes = _normalize_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def _bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(out, "sum", (x,), _bw)


def mean(x, axis=None, keepdims=False):
    x = _lift(x)
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return scale(sum(x, axis=axes, keepdims=keepdims), 1.0 / count)


def reshape(x, shape):
    x = _lift(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} into {tuple(shape)}") from None
    return _result(out, "reshape", (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None):
    x = _lift(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(x.data.transpose(axes), "transpose", (x,), lambda g: (g.transpose(inverse),))


def _getitem(x, index):
    out = x.data[index]

    def _bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _result(np.array(out, copy=True), "getitem", (x,), _bw)


def concat(xs, axis=0):
    xs = [_lift(v) for v in xs]
    if not xs:
        raise ShapeError("concat needs at least one input")
    ref = xs[0].shape
    ax = axis % len(ref)
    for v in xs[1:]:
        if len(v.shape) != len(ref) or any(s != r for i, (s, r) in enumerate(zip(v.shape, ref)) if i != ax):
            raise ShapeError(f"cannot concatenate shapes {ref} and {v.shape} along axis {axis}")
    if len(xs) == 1:
        return xs[0]
    sizes = [v.shape[ax] for v in xs]
    bounds = np.cumsum(sizes)[:-1]
    out = np.concatenate([v.data for v in xs], axis=ax)

    def _bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _result(out, "concat", tuple(xs), _bw)


def broadcast_to(x, shape):
    x = _lift(x)
    shape = tuple(shape)
    if _broadcast_shape(x.shape, shape) != shape:
        raise ShapeError(f"cannot broadcast {x.shape} to {shape}")
    return _result(np.broadcast_to(x.data, shape).copy(), "broadcast", (x,),
                   lambda g: (_unbroadcast(g, x.shape),))


# ----------------------------------------------------------------------
# linear algebra
# ----------------------------------------------------------------------
def matmul(a, b):
    """Matrix product with numpy batch broadcasting over leading dimensions."""
    a, b = _lift(a, b if isinstance(b, Value) else None), _lift(b, a if isinstance(a, Value) else None)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def _bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _result(out, "matmul", (a, b), _bw)


def softmax(x, axis=-1):
    x = _lift(x)
    if np.isnan(x.data).any():
        raise NonFiniteError("softmax received NaN input")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def _bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, "softmax", (x,), _bw)


def log_softmax(x, axis=-1):
    x = _lift(x)
    if np.isnan(x.data).any():
        raise NonFiniteError("log_softmax received NaN input")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def _bw(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _result(out, "log_softmax", (x,), _bw)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize over the last axis, then apply a per-feature affine map."""
    x, gain, bias = _lift(x), _lift(gain), _lift(bias)
    D = x.shape[-1]
    if D == 0:
        raise ShapeError("layer_norm over an empty axis")
    if gain.shape != (D,) or bias.shape != (D,):
        raise ShapeError(f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match feature size {D}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = centered * inv
    out = xhat * gain.data + bias.data
    lead = tuple(range(x.ndim - 1))

    def _bw(g):
        gx = ggain = gbias = None
        if x.requires_grad:
            dxhat = g * gain.data
            gx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        if gain.requires_grad:
            ggain = (g * xhat).sum(axis=lead)
        if bias.requires_grad:
            gbias = g.sum(axis=lead)
        return gx, ggain, gbias

    return _result(out, "layer_norm", (x, gain, bias), _bw)


def depthwise_conv2d(x, kernel):
    """Per-channel 2-D correlation, stride 1, zero 'same' padding."""
    x, kernel = _lift(x), _lift(kernel)
    if x.ndim != 3 or kernel.ndim != 3:
        raise ShapeError(f"depthwise_conv2d expects C×H×W input and C×k×k kernel, got {x.shape} and {kernel.shape}")
    C, H, W = x.shape
    kc, kh, kw = kernel.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"depthwise_conv2d needs an odd square kernel, got {kh}×{kw}")
    if kc != C:
        raise ShapeError(f"depthwise_conv2d channel mismatch: input {C}, kernel {kc}")
    pad = kh // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    k = kernel.data
    out = np.zeros_like(x.data, dtype=np.result_type(x.data, k))
    for u in range(kh):
        for v in range(kw):
            out += k[:, u, v, None, None] * xp[:, u:u + H, v:v + W]

    def _bw(g):
        gx = gk = None
        if x.requires_grad:
            gxp = np.zeros_like(xp, dtype=g.dtype)
            for u in range(kh):
                for v in range(kw):
                    gxp[:, u:u + H, v:v + W] += k[:, u, v, None, None] * g
            gx = gxp[:, pad:pad + H, pad:pad + W]
        if kernel.requires_grad:
            gk = np.empty_like(k, dtype=g.dtype)
            for u in range(kh):
                for v in range(kw):
                    gk[:, u, v] = (g * xp[:, u:u + H, v:v + W]).sum(axis=(1, 2))
        return gx, gk

    return _result(out, "depthwise_conv2d", (x, kernel), _bw)


def interp_matrix(src: int, dst: int) -> np.ndarray:
    """Row-stochastic 1-D linear interpolation matrix (dst × src).

    Half-pixel centres: output sample i reads source coordinate
    (i + 0.5) * src / dst - 0.5, clamped to the valid range.
    """
    m = np.zeros((dst, src), dtype=np.float64)
    ratio = src / dst
    for i in range(dst):
        pos = min(max((i + 0.5) * ratio - 0.5, 0.0), src - 1)
        i0 = int(math.floor(pos))
        i1 = min(i0 + 1, src - 1)
        w = pos - i0
        m[i, i0] += 1.0 - w
        m[i, i1] += w
    return m


def bilinear_resize(x, height: int, width: int):
    """Resize a C×H×W map with bilinear interpolation (half-pixel convention)."""
    x = _lift(x)
    if x.ndim != 3:
        raise ShapeError(f"bilinear_resize expects C×H×W, got {x.shape}")
    if height < 1 or width < 1:
        raise ShapeError(f"target size must be positive, got {height}×{width}")
    _, H, W = x.shape
    if (H, W) == (height, width):
        return x
    out = x
    if H != height:
        out = matmul(Value(interp_matrix(H, height).astype(x.dtype)), out)
    if W != width:
        out = matmul(out, Value(interp_matrix(W, width).T.astype(x.dtype)))
    return out


# ----------------------------------------------------------------------
# verification
# ----------------------------------------------------------------------
def finite_diff_check(f, params, h=1e-3, samples=24, seed=0, floor=1e-8):
    """Compare tape gradients against central differences in float64.

    ``f`` takes no arguments and rebuilds a scalar Value from ``params`` on
    every call.  Returns the largest
    ``|analytic - central| / (|central| + floor)`` over the sampled coordinates.
    ``floor`` keeps gradients that are exactly zero (shift-invariant biases,
    inactive ReLU units) from amplifying central-difference rounding noise.
    """
    params = list(params)
    saved = [(p.data, p.requires_grad, p.grad) for p in params]
    try:
        for p in params:
            p.data = p.data.astype(np.float64)
            p.requires_grad = True
            p.grad = None
        with fresh_tape():
            loss = f()
            if loss.size != 1:
                raise ShapeError(f"finite_diff_check needs a scalar function, got shape {loss.shape}")
            backward(loss)
        analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]

        rng = np.random.default_rng(seed)
        per_param = max(1, -(-samples // max(len(params), 1)))
        coords = []
        for i, p in enumerate(params):
            k = min(per_param, p.size)
            coords.extend((i, int(j)) for j in rng.choice(p.size, size=k, replace=False))

        worst = 0.0
        with no_grad(), fresh_tape():
            for i, j in coords:
                flat = params[i].data.reshape(-1)
                orig = flat[j]
                flat[j] = orig + h
                fp = float(f().data)
                flat[j] = orig - h
                fm = float(f().data)
                flat[j] = orig
                central = (fp - fm) / (2 * h)
                a = float(analytic[i].reshape(-1)[j])
                worst = max(worst, abs(a - central) / (abs(central) + floor))
        return worst
    finally:
        for p, (data, req, grad) in zip(params, saved):
            p.data, p.requires_grad, p.grad = data, req, grad
