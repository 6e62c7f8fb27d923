"""A small reverse-mode differentiation engine over numpy arrays.

Only the operations needed by the augmentation objective and the toy encoder
are provided. Every op records its parents and a closure that maps the output
gradient to parent gradients; :meth:`Tensor.backward` replays them in reverse
topological order.
"""
from __future__ import annotations

import numpy as np


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def as_tensor(x) -> "Tensor":
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    # -- bookkeeping ---------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def numpy(self):
        return self.data

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        a, b = self.shape, other.shape
        return Tensor(self.data + other.data, _parents=(self, other),
                      _backward=lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)))

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, _parents=(self,), _backward=lambda g: (-g,))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def back(g):
            return (_unbroadcast(g * b.data, a.shape),
                    _unbroadcast(g * a.data, b.shape))
        return Tensor(a.data * b.data, _parents=(a, b), _backward=back)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other
        out = a.data / b.data

        def back(g):
            return (_unbroadcast(g / b.data, a.shape),
                    _unbroadcast(-g * out / b.data, b.shape))
        return Tensor(out, _parents=(a, b), _backward=back)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, p: float):
        x = self.data
        return Tensor(x ** p, _parents=(self,),
                      _backward=lambda g: (g * p * x ** (p - 1),))

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def back(g):
            ad, bd = a.data, b.data
            if bd.ndim == 1:
                ga = np.multiply.outer(g, bd) if ad.ndim > 1 else g * bd
                gb = np.tensordot(g, ad, axes=(tuple(range(g.ndim)), tuple(range(ad.ndim - 1))))
                return _unbroadcast(ga, ad.shape), gb
            if ad.ndim == 1:
                ga = (g[..., None, :] * bd).sum(axis=-1)
                return _unbroadcast(ga, ad.shape), ad[:, None] * g[..., None, :]
            ga = g @ np.swapaxes(bd, -1, -2)
            gb = np.swapaxes(ad, -1, -2) @ g
            return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)
        return Tensor(a.data @ b.data, _parents=(a, b), _backward=back)

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    # -- reductions ----------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        shape = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)
        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,), _backward=back)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- shape ---------------------------------------------------------
    def reshape(self, *shape):
        old = self.shape
        return Tensor(self.data.reshape(*shape), _parents=(self,),
                      _backward=lambda g: (g.reshape(old),))

    def transpose(self, *axes):
        inv = np.argsort(axes)
        return Tensor(self.data.transpose(axes), _parents=(self,),
                      _backward=lambda g: (g.transpose(inv),))

    def swapaxes(self, a, b):
        return Tensor(np.swapaxes(self.data, a, b), _parents=(self,),
                      _backward=lambda g: (np.swapaxes(g, a, b),))

    def __getitem__(self, idx):
        shape = self.shape

        basic = not any(isinstance(i, (list, np.ndarray)) for i in
                        (idx if isinstance(idx, tuple) else (idx,)))

        def back(g):
            full = np.zeros(shape)
            if basic:
                full[idx] += g
            else:
                np.add.at(full, idx, g)
            return (full,)
        return Tensor(self.data[idx], _parents=(self,), _backward=back)

    # -- elementwise ---------------------------------------------------
    def exp(self):
        out = np.exp(self.data)
        return Tensor(out, _parents=(self,), _backward=lambda g: (g * out,))

    def log(self):
        x = self.data
        return Tensor(np.log(x), _parents=(self,), _backward=lambda g: (g / x,))

    def sqrt(self):
        out = np.sqrt(self.data)
        return Tensor(out, _parents=(self,), _backward=lambda g: (g * 0.5 / out,))

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor(out, _parents=(self,), _backward=lambda g: (g * (1.0 - out * out),))

    def clamp_min(self, floor: float):
        """max(x, floor); the gradient is zero wherever the floor is active."""
        keep = self.data > floor
        return Tensor(np.where(keep, self.data, floor), _parents=(self,),
                      _backward=lambda g: (g * keep,))

    def zero_grad(self):
        self.grad = None


# -- free functions ----------------------------------------------------

def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))
    return Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                  _parents=tuple(tensors), _backward=back)


def maximum(a, b) -> Tensor:
    """Elementwise maximum; ties route the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data >= b.data

    def back(g):
        return (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape))
    return Tensor(np.where(pick_a, a.data, b.data), _parents=(a, b), _backward=back)


def where_const(mask, x: Tensor, fill: float) -> Tensor:
    """``fill`` where ``mask`` is true, ``x`` elsewhere (mask is a constant)."""
    mask = np.asarray(mask, dtype=bool)
    return Tensor(np.where(mask, fill, x.data), _parents=(x,),
                  _backward=lambda g: (_unbroadcast(np.where(mask, 0.0, g), x.shape),))


def hypot(re: Tensor, im: Tensor) -> Tensor:
    """sqrt(re**2 + im**2) with a zero subgradient at the origin."""
    out = np.hypot(re.data, im.data)
    safe = np.where(out > 0, out, 1.0)
    live = out > 0

    def back(g):
        s = np.where(live, g / safe, 0.0)
        return (_unbroadcast(s * re.data, re.shape), _unbroadcast(s * im.data, im.shape))
    return Tensor(out, _parents=(re, im), _backward=back)


def softplus(x: Tensor, beta: float = 1.0) -> Tensor:
    """log(1 + exp(beta*x)) / beta, computed without overflow."""
    z = beta * x.data
    out = np.logaddexp(0.0, z) / beta
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))
    return Tensor(out, _parents=(x,), _backward=lambda g: (g * sig,))


def log_softmax(x: Tensor, axis=-1) -> Tensor:
    m = np.max(x.data, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    shifted = x.data - m
    lse = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def back(g):
        return (g - soft * np.sum(g, axis=axis, keepdims=True),)
    return Tensor(out, _parents=(x,), _backward=back)


def softmax(x: Tensor, axis=-1) -> Tensor:
    m = np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def back(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)
    return Tensor(out, _parents=(x,), _backward=back)


def xlogx(x: Tensor) -> Tensor:
    """x*log(x), defined as 0 at x == 0."""
    d = x.data
    pos = d > 0
    logd = np.log(np.where(pos, d, 1.0))
    return Tensor(np.where(pos, d * logd, 0.0), _parents=(x,),
                  _backward=lambda g: (np.where(pos, g * (logd + 1.0), 0.0),))


def gelu(x: Tensor) -> Tensor:
    """tanh approximation of GELU."""
    c = np.sqrt(2.0 / np.pi)
    d = x.data
    inner = c * (d + 0.044715 * d ** 3)
    t = np.tanh(inner)
    out = 0.5 * d * (1.0 + t)

    def back(g):
        dinner = c * (1.0 + 3 * 0.044715 * d ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * d * (1.0 - t * t) * dinner),)
    return Tensor(out, _parents=(x,), _backward=back)


def layer_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.data
    mu = d.mean(axis=-1, keepdims=True)
    xc = d - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    w, b = weight, bias

    def back(g):
        gw = _unbroadcast(g * xhat, w.shape)
        gb = _unbroadcast(g, b.shape)
        gx_hat = g * w.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return gx, gw, gb
    return Tensor(xhat * w.data + b.data, _parents=(x, w, b), _backward=back)


def no_grad_value(t) -> np.ndarray:
    return t.data if isinstance(t, Tensor) else np.asarray(t)
