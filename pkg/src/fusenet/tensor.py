"""Dense tensors with reverse-mode automatic differentiation.

Everything in this library runs on a small tape-based autodiff engine:
each Tensor remembers the tensors it was computed from and a closure that
pushes gradients back to them.  ``Tensor.backward()`` seeds the output
gradient and walks the graph in reverse topological order.

Gradients are verified against central finite differences via
:func:`grad_check`, which is kept independent of the backward rules it
tests (it only calls forward functions).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "ConfigError",
    "add", "sub", "mul", "div", "neg", "scale", "shift",
    "matmul", "reshape", "transpose", "concat", "split",
    "tensor_sum", "tensor_mean", "tensor_max",
    "exp", "log", "sqrt", "square", "atan", "sigmoid", "silu", "softplus",
    "maximum", "minimum",
    "softmax", "layer_norm", "conv2d", "nearest_upsample",
    "grad_check", "GradCheckReport",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested op."""


class ConfigError(ValueError):
    """A configuration value violates an op's preconditions."""


class Tensor:
    """A dense n-d array node in the autodiff graph.

    Leaf tensors created with ``requires_grad=True`` accumulate gradients
    in ``.grad`` when :meth:`backward` is called on a downstream scalar.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn",
                 "_backward_done")

    def __init__(self, data, requires_grad=False, dtype=None,
                 _parents=(), _backward_fn=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(_parents)
        self._backward_fn = _backward_fn
        self._backward_done = False

    # -- basic introspection -------------------------------------------------

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

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return shift(self, other) if np.isscalar(other) else add(self, other)

    def __sub__(self, other):
        return shift(self, -other) if np.isscalar(other) else sub(self, other)

    def __mul__(self, other):
        return scale(self, other) if np.isscalar(other) else mul(self, other)

    def __truediv__(self, other):
        return scale(self, 1.0 / other) if np.isscalar(other) else div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    # -- backward pass -------------------------------------------------------

    def backward(self):
        """Run reverse-mode accumulation from this scalar output."""
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar output, got shape {self.shape}")
        if self._backward_done:
            raise RuntimeError(
                "backward() already ran on this output; rebuild the graph "
                "with a fresh forward pass before differentiating again")
        self._backward_done = True

        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _needs_grad(*tensors):
    return any(t.requires_grad for t in tensors)


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary_shapes_ok(a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"operand shapes {a.shape} and {b.shape} "
                         "are not broadcast-compatible") from None


# -- elementwise arithmetic --------------------------------------------------

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes_ok(a, b)
    out_data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return Tensor(out_data, requires_grad=_needs_grad(a, b),
                  _parents=(a, b), _backward_fn=backward)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes_ok(a, b)
    out_data = a.data - b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return Tensor(out_data, requires_grad=_needs_grad(a, b),
                  _parents=(a, b), _backward_fn=backward)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes_ok(a, b)
    out_data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return Tensor(out_data, requires_grad=_needs_grad(a, b),
                  _parents=(a, b), _backward_fn=backward)


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes_ok(a, b)
    out_data = a.data / b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g / b.data, a.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return Tensor(out_data, requires_grad=_needs_grad(a, b),
                  _parents=(a, b), _backward_fn=backward)


def neg(a):
    a = _as_tensor(a)

    def backward(g):
        _accumulate(a, -g)

    return Tensor(-a.data, requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


def scale(a, c):
    """Multiply by a python scalar constant."""
    a = _as_tensor(a)
    c = float(c)

    def backward(g):
        _accumulate(a, g * c)

    return Tensor(a.data * c, requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


def shift(a, c):
    """Add a python scalar constant."""
    a = _as_tensor(a)
    c = float(c)

    def backward(g):
        _accumulate(a, g)

    return Tensor(a.data + c, requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


def maximum(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes_ok(a, b)
    out_data = np.maximum(a.data, b.data)
    # ties route the full gradient to the first operand
    mask = (a.data >= b.data).astype(a.data.dtype)

    def backward(g):
        _accumulate(a, _unbroadcast(g * mask, a.shape))
        _accumulate(b, _unbroadcast(g * (1.0 - mask), b.shape))

    return Tensor(out_data, requires_grad=_needs_grad(a, b),
                  _parents=(a, b), _backward_fn=backward)


def minimum(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes_ok(a, b)
    out_data = np.minimum(a.data, b.data)
    mask = (a.data <= b.data).astype(a.data.dtype)

    def backward(g):
        _accumulate(a, _unbroadcast(g * mask, a.shape))
        _accumulate(b, _unbroadcast(g * (1.0 - mask), b.shape))

    return Tensor(out_data, requires_grad=_needs_grad(a, b),
                  _parents=(a, b), _backward_fn=backward)


# -- transcendental ----------------------------------------------------------

def exp(a):
    a = _as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * out_data)

    return Tensor(out_data, requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


def log(a):
    a = _as_tensor(a)

    def backward(g):
        _accumulate(a, g / a.data)

    return Tensor(np.log(a.data), requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


def sqrt(a):
    a = _as_tensor(a)
    out_data = np.sqrt(a.data)

    def backward(g):
        _accumulate(a, g * 0.5 / out_data)

    return Tensor(out_data, requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


def square(a):
    a = _as_tensor(a)

    def backward(g):
        _accumulate(a, g * 2.0 * a.data)

    return Tensor(a.data * a.data, requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


def atan(a):
    a = _as_tensor(a)

    def backward(g):
        _accumulate(a, g / (1.0 + a.data * a.data))

    return Tensor(np.arctan(a.data), requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


def sigmoid(a):
    a = _as_tensor(a)
    # piecewise form avoids overflow for large |x|
    out_data = np.where(a.data >= 0,
                        1.0 / (1.0 + np.exp(-np.abs(a.data))),
                        np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))

    def backward(g):
        _accumulate(a, g * out_data * (1.0 - out_data))

    return Tensor(out_data, requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


def silu(a):
    a = _as_tensor(a)
    s = np.where(a.data >= 0,
                 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                 np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
    out_data = a.data * s

    def backward(g):
        _accumulate(a, g * (s + a.data * s * (1.0 - s)))

    return Tensor(out_data, requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


def softplus(a):
    """log(1 + e^x), computed without overflow."""
    a = _as_tensor(a)
    out_data = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))
    s = np.where(a.data >= 0,
                 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                 np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))

    def backward(g):
        _accumulate(a, g * s)

    return Tensor(out_data, requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


# -- reductions --------------------------------------------------------------

def tensor_sum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        _accumulate(a, np.broadcast_to(gg, a.shape).copy())

    return Tensor(out_data, requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


def tensor_mean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return scale(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def tensor_max(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out_data = a.data.max(axis=axis, keepdims=keepdims)
    # gradient flows only to the (first) argmax positions
    expanded = a.data.max(axis=axis, keepdims=True) if axis is not None else out_data
    mask = (a.data == expanded).astype(a.data.dtype)
    mask /= mask.sum(axis=axis, keepdims=True) if axis is not None else mask.sum()

    def backward(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        _accumulate(a, mask * gg)

    return Tensor(out_data, requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


# -- shape ops ---------------------------------------------------------------

def reshape(a, shape):
    a = _as_tensor(a)
    shape = tuple(shape)
    try:
        out_data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {a.shape} ({a.size} values) "
                         f"into {shape}") from None

    def backward(g):
        _accumulate(a, g.reshape(a.shape))

    return Tensor(out_data, requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


def transpose(a, axes):
    a = _as_tensor(a)
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"axes {axes} is not a permutation for ndim {a.ndim}")
    inv = np.argsort(axes)

    def backward(g):
        _accumulate(a, g.transpose(inv))

    return Tensor(a.data.transpose(axes), requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    ref = tensors[0]
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(
                i != axis % ref.ndim and t.shape[i] != ref.shape[i]
                for i in range(ref.ndim)):
            raise ShapeError("concat requires identical non-axis dims, got "
                             f"{[t.shape for t in tensors]} on axis {axis}")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(idx)])

    return Tensor(out_data, requires_grad=_needs_grad(*tensors),
                  _parents=tuple(tensors), _backward_fn=backward)


def split(a, sections, axis=0):
    """Split into equal parts (int) or parts of given sizes (list)."""
    a = _as_tensor(a)
    n = a.shape[axis]
    if isinstance(sections, int):
        if n % sections != 0:
            raise ShapeError(f"axis {axis} of size {n} not divisible "
                             f"into {sections} parts")
        sizes = [n // sections] * sections
    else:
        sizes = list(sections)
        if sum(sizes) != n:
            raise ShapeError(f"split sizes {sizes} do not sum to {n}")
    offsets = np.cumsum([0] + sizes)
    outs = []
    for lo, hi in zip(offsets[:-1], offsets[1:]):
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(int(lo), int(hi))
        idx = tuple(idx)

        def backward(g, idx=idx):
            if a.requires_grad:
                if a.grad is None:
                    a.grad = np.zeros_like(a.data)
                a.grad[idx] += g

        outs.append(Tensor(a.data[idx].copy(), requires_grad=a.requires_grad,
                           _parents=(a,), _backward_fn=backward))
    return outs


# -- linear algebra ----------------------------------------------------------

def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} x {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        _accumulate(a, _unbroadcast(ga, a.shape))
        _accumulate(b, _unbroadcast(gb, b.shape))

    return Tensor(out_data, requires_grad=_needs_grad(a, b),
                  _parents=(a, b), _backward_fn=backward)


def nearest_upsample(x, factor):
    """Replicate each pixel of an NCHW map into a factor x factor block."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"nearest_upsample expects 4-d input, got {x.shape}")
    if factor < 1:
        raise ConfigError(f"upsample factor must be >= 1, got {factor}")
    out_data = x.data.repeat(factor, axis=2).repeat(factor, axis=3)

    def backward(g):
        B, C, H, W = x.shape
        _accumulate(x, g.reshape(B, C, H, factor, W, factor).sum(axis=(3, 5)))

    return Tensor(out_data, requires_grad=x.requires_grad,
                  _parents=(x,), _backward_fn=backward)


# -- neural primitives -------------------------------------------------------

def softmax(a, axis=-1):
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        _accumulate(a, out_data * (g - dot))

    return Tensor(out_data, requires_grad=a.requires_grad,
                  _parents=(a,), _backward_fn=backward)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then apply the affine (gamma, beta)."""
    if eps <= 0:
        raise ConfigError(f"layer_norm eps must be positive, got {eps}")
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    mu = tensor_mean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = tensor_mean(square(centered), axis=-1, keepdims=True)
    inv_std = div(Tensor(np.ones((), dtype=x.dtype)), sqrt(shift(var, eps)))
    normed = mul(centered, inv_std)
    return add(mul(normed, gamma), beta)


def conv2d(x, w, b=None, stride=1, padding=0):
    """2-d cross-correlation over NCHW input with OIkk kernels."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d x and w, got {x.shape}, {w.shape}")
    B, C, H, W = x.shape
    O, Cw, kh, kw = w.shape
    if C != Cw:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs kernel {w.shape}")
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if kh > Hp or kw > Wp:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {Hp}x{Wp}")
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    # windows: [B, C, Ho, Wo, kh, kw]
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, :, :]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(B, Ho * Wo, C * kh * kw)
    wmat = w.data.reshape(O, C * kh * kw)
    out_data = np.matmul(cols, wmat.T)                    # [B, Ho*Wo, O]
    out_data = out_data.transpose(0, 2, 1).reshape(B, O, Ho, Wo)
    if b is not None:
        b = _as_tensor(b)
        out_data = out_data + b.data.reshape(1, O, 1, 1)

    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        gmat = g.reshape(B, O, Ho * Wo).transpose(0, 2, 1)   # [B, Ho*Wo, O]
        gw = np.tensordot(gmat, cols, axes=([0, 1], [0, 1]))  # [O, C*kh*kw]
        _accumulate(w, gw.reshape(w.shape))
        if b is not None:
            _accumulate(b, g.sum(axis=(0, 2, 3)).reshape(b.shape))
        if x.requires_grad:
            gcols = np.matmul(gmat, wmat)                    # [B, Ho*Wo, C*kh*kw]
            gcols = gcols.reshape(B, Ho, Wo, C, kh, kw)
            gxp = np.zeros((B, C, Hp, Wp), dtype=x.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += \
                        gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            _accumulate(x, gxp[:, :, padding:padding + H, padding:padding + W]
                        if padding else gxp)

    return Tensor(out_data, requires_grad=_needs_grad(*parents),
                  _parents=parents, _backward_fn=backward)


# -- gradient checking -------------------------------------------------------

class GradCheckReport:
    """Result of comparing tape gradients with central finite differences."""

    def __init__(self, max_rel_error, tolerance, per_input):
        self.max_rel_error = max_rel_error
        self.tolerance = tolerance
        self.per_input = per_input

    @property
    def passed(self):
        return self.max_rel_error <= self.tolerance

    def __repr__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"GradCheckReport({status}, max_rel_error={self.max_rel_error:.3e}, "
                f"tolerance={self.tolerance:.1e})")


def grad_check(f, inputs, epsilon=1e-5, tolerance=1e-4, sample=None, seed=0):
    """Compare tape gradients of scalar-valued ``f`` with finite differences.

    ``f`` takes the given tensors and returns a scalar Tensor.  The relative
    error per input is ``max|analytic - numeric| / max(1, |analytic|_inf,
    |numeric|_inf)``.  Inputs the graph never touches get a zero analytic
    gradient, which finite differences confirm.

    ``sample`` caps the number of elements differenced per input (chosen by
    a seeded rng); with the default None every element is checked.
    """
    if not (1e-7 <= epsilon <= 1e-3):
        raise ConfigError(f"epsilon {epsilon} outside [1e-7, 1e-3]")
    inputs = list(inputs)
    for t in inputs:
        t.requires_grad = True
        t.zero_grad()

    out = f(*inputs)
    if not isinstance(out, Tensor) or out.size != 1:
        raise ValueError("grad_check requires f to return a scalar Tensor")
    out.backward()

    rng = np.random.default_rng(seed)
    per_input = []
    worst = 0.0
    for t in inputs:
        analytic = (t.grad if t.grad is not None
                    else np.zeros_like(t.data)).reshape(-1)
        flat = t.data.reshape(-1)
        if sample is not None and flat.size > sample:
            indices = list(rng.choice(flat.size, size=sample, replace=False))
        else:
            indices = list(range(flat.size))
        numeric = np.zeros(len(indices))
        checked = []
        for slot, i in enumerate(indices):
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = float(f(*inputs).data)
            flat[i] = orig - epsilon
            lo = float(f(*inputs).data)
            flat[i] = orig
            numeric[slot] = (hi - lo) / (2.0 * epsilon)
            checked.append(i)
        picked = analytic[checked] if checked else analytic[:0]
        denom = max(1.0, np.abs(picked).max(initial=0.0),
                    np.abs(numeric).max(initial=0.0))
        err = float(np.abs(picked - numeric).max(initial=0.0) / denom)
        per_input.append(err)
        worst = max(worst, err)
    return GradCheckReport(worst, tolerance, per_input)
