"""Reverse-mode automatic differentiation over float64 numpy arrays.

A ``Tensor`` wraps an ndarray and records, for every primitive applied to
it, the parent tensors and a closure that routes the output gradient back
to them. ``backward()`` on a scalar result replays those closures in
reverse topological order. The primitive set is deliberately small:
elementwise arithmetic with broadcasting, matmul, a stride-1 zero-padded
conv2d, the activations and reductions the model needs, concat, slicing
and reshape.

Conventions:
  * everything is float64;
  * image tensors are laid out (batch, height, width, channels) so that
    bias adds and attention gates broadcast naturally;
  * conv2d weights are (kh, kw, in_channels, out_channels) with odd
    kernel sizes and "same" zero padding;
  * max reductions route gradient to the first maximal element on ties.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_done")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
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
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return tslice(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    # -- backward pass ---------------------------------------------------
    def backward(self, grad=None):
        """Accumulate gradients of this tensor into every reachable parent.

        One backward pass per forward tape: closures are dropped after use.
        """
        if self._done:
            raise InvalidInputError("backward() already ran for this tape")
        if grad is None:
            if self.data.size != 1:
                raise InvalidInputError(
                    f"backward() without explicit gradient needs a scalar, got shape {self.data.shape}"
                )
            grad = np.ones_like(self.data)
        self.grad = np.asarray(grad, dtype=np.float64)

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                node._backward = None
                node._parents = ()
                node._done = True
        self._done = True


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _accum(t: Tensor, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, shape):
    """Sum a gradient over the axes that broadcasting expanded."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic ----------------------------------------------------------

def add(a, b):
    a, b = _lift(a), _lift(b)

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = _lift(a), _lift(b)

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = _lift(a), _lift(b)

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = _lift(a), _lift(b)

    def backward(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(a.data / b.data, (a, b), backward)


def power(a, exponent: float):
    """a ** exponent for a static scalar exponent."""
    a = _lift(a)
    k = float(exponent)

    def backward(g):
        _accum(a, g * k * np.power(a.data, k - 1.0))

    return _make(np.power(a.data, k), (a,), backward)


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise InvalidInputError(
            f"matmul expects 2-d operands, got {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise InvalidInputError(
            f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}"
        )

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward)


# -- activations ----------------------------------------------------------

def relu(x):
    x = _lift(x)
    mask = x.data > 0

    def backward(g):
        _accum(x, g * mask)

    return _make(np.where(mask, x.data, 0.0), (x,), backward)


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x):
    x = _lift(x)
    s = _sigmoid(x.data)

    def backward(g):
        _accum(x, g * s * (1.0 - s))

    return _make(s, (x,), backward)


def tanh(x):
    x = _lift(x)
    t = np.tanh(x.data)

    def backward(g):
        _accum(x, g * (1.0 - t * t))

    return _make(t, (x,), backward)


def softplus(x):
    x = _lift(x)

    def backward(g):
        _accum(x, g * _sigmoid(x.data))

    return _make(np.logaddexp(0.0, x.data), (x,), backward)


def exp(x):
    x = _lift(x)
    e = np.exp(x.data)

    def backward(g):
        _accum(x, g * e)

    return _make(e, (x,), backward)


def log(x):
    x = _lift(x)

    def backward(g):
        _accum(x, g / x.data)

    return _make(np.log(x.data), (x,), backward)


def expm1x(x):
    """expm1(x)/x, continued with value 1 at x = 0.

    Smooth helper for closed-form power-law integrals whose exponent
    passes through zero. Series branch keeps both the value and the
    derivative accurate near the removable singularity.
    """
    x = _lift(x)
    v = x.data
    small = np.abs(v) < 1e-4
    val = np.where(small, 1.0 + v / 2.0 + v * v / 6.0,
                   np.expm1(np.where(small, 1.0, v)) / np.where(small, 1.0, v))
    dval = np.where(
        small,
        0.5 + v / 3.0 + v * v / 8.0,
        (v * np.exp(np.where(small, 1.0, v)) - np.expm1(np.where(small, 1.0, v)))
        / np.where(small, 1.0, v * v),
    )

    def backward(g):
        _accum(x, g * dval)

    return _make(val, (x,), backward)


# -- reductions ------------------------------------------------------------

def tsum(x, axis=None, keepdims: bool = False):
    x = _lift(x)

    def backward(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.data.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(ge, x.data.shape).copy())

    return _make(x.data.sum(axis=axis, keepdims=keepdims), (x,), backward)


def mean(x, axis=None, keepdims: bool = False):
    x = _lift(x)
    if axis is None:
        n = x.data.size
    elif isinstance(axis, tuple):
        n = int(np.prod([x.data.shape[i] for i in axis]))
    else:
        n = x.data.shape[axis]

    def backward(g):
        if axis is None:
            _accum(x, np.broadcast_to(g / n, x.data.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(ge / n, x.data.shape).copy())

    return _make(x.data.mean(axis=axis, keepdims=keepdims), (x,), backward)


def tmax(x, axis=None, keepdims: bool = False):
    """Max reduction; ties send the gradient to the first maximal element."""
    x = _lift(x)
    if axis is None:
        flat_idx = int(np.argmax(x.data))
        val = x.data.reshape(-1)[flat_idx]

        def backward(g):
            gx = np.zeros_like(x.data)
            gx.reshape(-1)[flat_idx] = np.asarray(g).reshape(-1)[0]
            _accum(x, gx)

        return _make(np.asarray(val), (x,), backward)

    idx = np.argmax(x.data, axis=axis)
    val = np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis)
    if not keepdims:
        val = np.squeeze(val, axis=axis)

    def backward(g):
        ge = g if keepdims else np.expand_dims(g, axis)
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, np.expand_dims(idx, axis), ge, axis=axis)
        _accum(x, gx)

    return _make(val, (x,), backward)


def global_avg_pool(x):
    """(B, H, W, C) -> (B, C) spatial mean."""
    x = _lift(x)
    if x.data.ndim != 4:
        raise InvalidInputError(f"global_avg_pool expects 4-d input, got {x.data.shape}")
    return mean(x, axis=(1, 2))


# -- structural -------------------------------------------------------------

def reshape(x, shape):
    x = _lift(x)
    old = x.data.shape

    def backward(g):
        _accum(x, g.reshape(old))

    return _make(x.data.reshape(shape), (x,), backward)


def broadcast_to(x, shape):
    x = _lift(x)

    def backward(g):
        _accum(x, _unbroadcast(g, x.data.shape))

    return _make(np.broadcast_to(x.data, shape).copy(), (x,), backward)


def concat(tensors, axis: int = 0):
    tensors = [_lift(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(a, b)
            _accum(t, g[tuple(sl)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def tslice(x, key):
    x = _lift(x)

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[key] += g
        _accum(x, gx)

    return _make(x.data[key], (x,), backward)


# -- convolution -------------------------------------------------------------

def conv2d(x, w):
    """Stride-1, zero-padded ("same") 2-d convolution.

    x: (B, H, W, C); w: (kh, kw, C, O) with odd kh, kw. Returns (B, H, W, O).
    Internally builds one column buffer per call so both directions are
    single BLAS matmuls; the buffer is kept alive for the weight gradient.
    """
    x, w = _lift(x), _lift(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise InvalidInputError(
            f"conv2d expects 4-d input and kernel, got {x.data.shape} and {w.data.shape}"
        )
    B, H, W, C = x.data.shape
    kh, kw, Ci, O = w.data.shape
    if Ci != C:
        raise InvalidInputError(f"conv2d channel mismatch: input {C}, kernel {Ci}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise InvalidInputError(f"conv2d requires odd kernels, got {(kh, kw)}")
    ph, pw = kh // 2, kw // 2

    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    col = np.empty((B, H, W, kh * kw, C))
    k = 0
    for u in range(kh):
        for v in range(kw):
            col[:, :, :, k, :] = xp[:, u:u + H, v:v + W, :]
            k += 1
    col2 = col.reshape(B * H * W, kh * kw * C)
    w2 = w.data.reshape(kh * kw * C, O)
    out = (col2 @ w2).reshape(B, H, W, O)

    def backward(g):
        g2 = g.reshape(B * H * W, O)
        if w.requires_grad:
            _accum(w, (col2.T @ g2).reshape(kh, kw, C, O))
        if x.requires_grad:
            dcol = (g2 @ w2.T).reshape(B, H, W, kh * kw, C)
            dxp = np.zeros_like(xp)
            k2 = 0
            for u in range(kh):
                for v in range(kw):
                    dxp[:, u:u + H, v:v + W, :] += dcol[:, :, :, k2, :]
                    k2 += 1
            _accum(x, dxp[:, ph:ph + H, pw:pw + W, :])

    return _make(out, (x, w), backward)


# -- verification -------------------------------------------------------------

def grad_check(f, x: Tensor, h: float = 1e-5, coords=None) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` maps a Tensor to a scalar Tensor and must be pure. ``coords``
    optionally restricts the finite-difference probe to a subset of flat
    indices (the reverse-mode gradient is always complete); by default
    every coordinate is probed.
    """
    probe = Tensor(x.data.copy(), requires_grad=True)
    y = f(probe)
    if y.data.size != 1:
        raise InvalidInputError(f"grad_check needs a scalar-valued f, got shape {y.data.shape}")
    y.backward()
    g_ad = probe.grad.reshape(-1).copy() if probe.grad is not None else np.zeros(x.data.size)

    flat = x.data.reshape(-1)
    if coords is None:
        coords = range(flat.size)
    worst = 0.0
    for i in coords:
        bumped = flat.copy()
        bumped[i] += h
        f_plus = f(Tensor(bumped.reshape(x.data.shape))).item()
        bumped[i] -= 2 * h
        f_minus = f(Tensor(bumped.reshape(x.data.shape))).item()
        g_fd = (f_plus - f_minus) / (2 * h)
        err = abs(g_ad[i] - g_fd) / max(abs(g_ad[i]), abs(g_fd), 1e-8)
        worst = max(worst, err)
    return worst
