"""Dense float64 tensors with tape-style reverse-mode differentiation.

Every operation on tensors that require gradients records a node carrying a
monotonically increasing sequence number. ``Tensor.backward`` replays the
recorded nodes in exact reverse order of recording and accumulates gradients
into the ``grad`` slot of every leaf tensor that requires them.

Broadcasting is deliberately narrow: operands must have equal shapes, or one
side is a scalar, or one side is a per-channel vector (shape ``(C,)``,
``(1, C, 1, 1)`` or ``(N, C, 1, 1)``) against an ``N x C x H x W`` tensor.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, GradCheckError, ShapeError, UsageError

_sequence = itertools.count()
_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording inside the block (per thread)."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_seq")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._seq = next(_sequence)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _make(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: Callable) -> "Tensor":
        """Wrap an op result, recording a graph node when any parent needs gradients.

        ``backward(g)`` must return one gradient (or None) per parent.
        """
        out = cls(data)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @staticmethod
    def zeros(shape, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(shape), requires_grad=requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # -- autodiff ---------------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return

        nodes: dict[int, Tensor] = {}
        stack = [self]
        while stack:
            t = stack.pop()
            if id(t) in nodes:
                continue
            nodes[id(t)] = t
            stack.extend(t._parents)

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in sorted(nodes.values(), key=lambda t: t._seq, reverse=True):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- operators --------------------------------------------------------------

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
        return _unary(self, -self.data, lambda g: -g)

    def square(self):
        x = self.data
        return _unary(self, x * x, lambda g: 2.0 * x * g)

    def sqrt(self):
        return sqrt(self)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def exp(self):
        return exp(self)

    def abs(self):
        x = self.data
        return _unary(self, np.abs(x), lambda g: np.sign(x) * g)

    def sum(self):
        shape = self.shape
        return _unary(self, np.asarray(self.data.sum()), lambda g: np.broadcast_to(g, shape).copy())

    def mean(self):
        shape, n = self.shape, self.size
        return _unary(self, np.asarray(self.data.mean()), lambda g: np.full(shape, float(g) / n))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return _unary(self, self.data.reshape(shape), lambda g: g.reshape(old))

    def flatten(self):
        return self.reshape(self.shape[0], -1)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unary(x: Tensor, out: np.ndarray, grad_fn: Callable) -> Tensor:
    return Tensor._make(out, (x,), lambda g: (grad_fn(g),))


# -- broadcasting ------------------------------------------------------------------


def _channel_view(shape: tuple[int, ...], other: tuple[int, ...]) -> tuple[int, ...] | None:
    """Return the 4-D view shape if ``shape`` is a per-channel vector for ``other``."""
    if len(other) != 4:
        return None
    n, c = other[0], other[1]
    if shape == (c,):
        return (1, c, 1, 1)
    if len(shape) == 4 and shape[2:] == (1, 1) and shape[1] == c and shape[0] in (1, n):
        return shape
    return None


def _align(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        if a.size == 1 and a.ndim > b.ndim:
            a = a.reshape(())
        if b.size == 1 and b.ndim > a.ndim:
            b = b.reshape(())
        return a, b
    view = _channel_view(b.shape, a.shape)
    if view is not None:
        return a, b.reshape(view)
    view = _channel_view(a.shape, b.shape)
    if view is not None:
        return a.reshape(view), b
    raise ShapeError(f"cannot broadcast shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    if int(np.prod(shape)) == 1:
        return np.asarray(g.sum()).reshape(shape)
    # per-channel vector: keep axis 1, and axis 0 when it was per-sample
    axes = tuple(i for i in range(g.ndim) if i != 1 and not (i == 0 and len(shape) == 4 and shape[0] == g.shape[0]))
    return g.sum(axis=axes, keepdims=True).reshape(shape)


def _binary(a, b, fwd, grad_a, grad_b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    x, y = _align(a.data, b.data)
    out = fwd(x, y)
    sa, sb = a.shape, b.shape

    def backward(g):
        ga = _reduce_to(grad_a(g, x, y), sa) if a.requires_grad else None
        gb = _reduce_to(grad_b(g, x, y), sb) if b.requires_grad else None
        return ga, gb

    return Tensor._make(out, (a, b), backward)


def add(a, b) -> Tensor:
    return _binary(a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _binary(a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _binary(a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b) -> Tensor:
    b = as_tensor(b)
    if np.any(b.data == 0):
        raise DomainError("division by zero")
    return _binary(a, b, np.divide, lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y))


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0):
        raise DomainError(f"sqrt of negative value (min {x.data.min():.3g})")
    out = np.sqrt(x.data)
    return _unary(x, out, lambda g: g / (2.0 * out))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _unary(x, np.where(mask, x.data, 0.0), lambda g: g * mask)


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _unary(x, out, lambda g: g * out * (1.0 - out))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _unary(x, out, lambda g: g * out)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over H x W, keeping an ``N x C x 1 x 1`` result."""
    _require_4d(x, "global_avg_pool")
    n, c, h, w = x.shape
    return _unary(x, x.data.mean(axis=(2, 3), keepdims=True),
                  lambda g: np.broadcast_to(g / (h * w), (n, c, h, w)).copy())


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    for t in tensors:
        _require_4d(t, "concat_channels")
    ref = tensors[0].shape
    if any(t.shape[0] != ref[0] or t.shape[2:] != ref[2:] for t in tensors):
        raise ShapeError(f"concat_channels shape mismatch: {[t.shape for t in tensors]}")
    splits = np.cumsum([t.shape[1] for t in tensors])[:-1]
    out = np.concatenate([t.data for t in tensors], axis=1)
    return Tensor._make(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=1)))


def channel_mix(x: Tensor, w: Tensor) -> Tensor:
    """``out[:, i] = sum_j w[j, i] * x[:, j]`` for a C x C matrix ``w``."""
    _require_4d(x, "channel_mix")
    c = x.shape[1]
    if w.shape != (c, c):
        raise ShapeError(f"channel_mix needs a {c}x{c} matrix, got {w.shape}")
    xd, wd = x.data, w.data
    out = np.tensordot(wd, xd, axes=([0], [1])).transpose(1, 0, 2, 3)

    def backward(g):
        gx = np.tensordot(wd, g, axes=([1], [1])).transpose(1, 0, 2, 3) if x.requires_grad else None
        gw = np.tensordot(xd, g, axes=([0, 2, 3], [0, 2, 3])) if w.requires_grad else None
        return gx, gw

    return Tensor._make(np.ascontiguousarray(out), (x, w), backward)


# -- convolution ---------------------------------------------------------------------


def _conv_forward(x: np.ndarray, w: np.ndarray, keep_cols: bool):
    """Same-padded stride-1 correlation using a flat padded-grid layout.

    The padded input is laid out as ``C x (N*Hp*Wp)``; a kernel tap at (dy, dx)
    is then a contiguous column offset ``dy*Wp + dx``. Output positions on the
    padded grid that fall outside the image are discarded.
    """
    n, c, h, wd = x.shape
    co, _, k, _ = w.shape
    p = k // 2
    hp, wp = h + 2 * p, wd + 2 * p
    if p:
        xp = np.zeros((c, n, hp, wp))
        xp[:, :, p:p + h, p:p + wd] = x.transpose(1, 0, 2, 3)
    else:
        xp = np.ascontiguousarray(x.transpose(1, 0, 2, 3))
    flat = xp.reshape(c, -1)
    # the last valid output sits exactly at index length - 1
    length = n * hp * wp - (k - 1) * (wp + 1)
    if k == 1:
        cols = flat
    else:
        cols = np.empty((k, k, c, length))
        for dy in range(k):
            for dx in range(k):
                off = dy * wp + dx
                cols[dy, dx] = flat[:, off:off + length]
        cols = cols.reshape(k * k * c, length)
    grid = np.empty((co, n * hp * wp))
    np.matmul(w.transpose(0, 2, 3, 1).reshape(co, -1), cols, out=grid[:, :length])
    y = grid.reshape(co, n, hp, wp)[:, :, :h, :wd].transpose(1, 0, 2, 3)
    return np.ascontiguousarray(y), (cols if keep_cols else None)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Zero-padded ("same"), stride-1 2-D cross-correlation.

    ``weight`` has shape ``C_out x C_in x k x k`` with odd ``k``; ``bias`` is a
    length ``C_out`` vector or None.
    """
    _require_4d(x, "conv2d")
    if weight.ndim != 4:
        raise ShapeError(f"conv2d weight must be 4-D, got {weight.shape}")
    co, ci, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise ConfigError(f"conv2d kernel must be square with odd size, got {k}x{k2}")
    if ci != x.shape[1]:
        raise ShapeError(f"conv2d expects {ci} input channels, got {x.shape[1]}")
    if bias is not None and bias.shape != (co,):
        raise ShapeError(f"conv2d bias must have shape ({co},), got {bias.shape}")

    parents = (x, weight) if bias is None else (x, weight, bias)
    need_w = is_grad_enabled() and weight.requires_grad
    out, cols = _conv_forward(x.data, weight.data, keep_cols=need_w)
    if bias is not None:
        out += bias.data.reshape(1, co, 1, 1)
    n, _, h, wd = x.shape
    p = k // 2
    wdata = weight.data

    def backward(g):
        gx = gw = gb = None
        if x.requires_grad:
            flipped = wdata[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            gx, _ = _conv_forward(g, np.ascontiguousarray(flipped), keep_cols=False)
        if weight.requires_grad:
            hp, wp = h + 2 * p, wd + 2 * p
            if p:
                grid = np.zeros((co, n, hp, wp))
                grid[:, :, :h, :wd] = g.transpose(1, 0, 2, 3)
            else:
                grid = g.transpose(1, 0, 2, 3)
            gflat = grid.reshape(co, -1)[:, :cols.shape[1]]
            gw = (gflat @ cols.T).reshape(co, k, k, ci).transpose(0, 3, 1, 2)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw) if bias is None else (gx, gw, gb)

    return Tensor._make(out, parents, backward)


def _require_4d(x: Tensor, op: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op} expects an N x C x H x W tensor, got shape {x.shape}")


# -- gradient checking -------------------------------------------------------------


def finite_difference_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6) -> float:
    """Max relative error between the analytic and central-difference gradient.

    The error per coordinate is ``|g_analytic - g_numeric| / max(1, |g_numeric|)``.
    ``x`` is perturbed in place and restored afterwards.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ConfigError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    was = x.requires_grad
    x.requires_grad = True
    saved_grad, x.grad = x.grad, None
    try:
        out = f(x)
        if out.size != 1:
            raise UsageError("finite_difference_check needs a scalar-valued function")
        out.backward()
        analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

        numeric = np.empty_like(x.data)
        flat = x.data.reshape(-1)
        with no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                fp = f(x).item()
                flat[i] = orig - eps
                fm = f(x).item()
                flat[i] = orig
                if not (np.isfinite(fp) and np.isfinite(fm)):
                    raise GradCheckError(f"non-finite function value near coordinate {i}")
                numeric.reshape(-1)[i] = (fp - fm) / (2.0 * eps)
    finally:
        x.requires_grad = was
        x.grad = saved_grad
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(err.max()) if err.size else 0.0
