"""Generic value arithmetic underneath the tape.

Tape nodes hold either plain numpy arrays or :class:`PDual` pairs.  Running
the same recording with ``PDual`` leaves (primal plus directional tangents)
turns one reverse sweep into a batch of Hessian-vector products, which is how
dense Hessians are assembled.
"""

import numpy as np


def _pad_tangent(b, primal_ndim, target_ndim):
    """Insert singleton axes after the direction axis so that the tangent of a
    low-rank primal broadcasts correctly against a higher-rank operand."""
    k = target_ndim - primal_ndim
    if k <= 0:
        return b
    b = np.asarray(b)
    return b.reshape(b.shape[:1] + (1,) * k + b.shape[1:])


def _ndim(x):
    return np.ndim(x)


class PDual(object):
    """Primal value plus tangents along a batch of parameter-space directions.

    ``a`` is the primal array; ``b`` has shape ``(k,) + a.shape`` (broadcastable)
    where ``k`` enumerates directions.
    """

    __slots__ = ("a", "b")
    __array_ufunc__ = None  # force numpy to defer to our reflected operators

    def __init__(self, a, b):
        self.a = a
        self.b = b

    @property
    def shape(self):
        return np.shape(self.a)

    @property
    def ndim(self):
        return np.ndim(self.a)

    def __repr__(self):
        return f"PDual(a={self.a!r})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, o):
        if isinstance(o, PDual):
            m = max(self.ndim, o.ndim)
            return PDual(self.a + o.a,
                         _pad_tangent(self.b, self.ndim, m)
                         + _pad_tangent(o.b, o.ndim, m))
        m = max(self.ndim, _ndim(o))
        return PDual(self.a + o, _pad_tangent(self.b, self.ndim, m))

    __radd__ = __add__

    def __neg__(self):
        return PDual(-self.a, -np.asarray(self.b))

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if isinstance(o, PDual):
            m = max(self.ndim, o.ndim)
            sb = _pad_tangent(self.b, self.ndim, m)
            ob = _pad_tangent(o.b, o.ndim, m)
            return PDual(self.a * o.a, sb * o.a + self.a * ob)
        m = max(self.ndim, _ndim(o))
        return PDual(self.a * o, _pad_tangent(self.b, self.ndim, m) * o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, PDual):
            return self * o.reciprocal()
        m = max(self.ndim, _ndim(o))
        return PDual(self.a / o, _pad_tangent(self.b, self.ndim, m) / o)

    def __rtruediv__(self, o):
        return self.reciprocal() * o

    def reciprocal(self):
        r = 1.0 / self.a
        return PDual(r, -np.asarray(self.b) * (r * r))

    def __matmul__(self, o):
        if isinstance(o, PDual):
            return PDual(self.a @ o.a, self.b @ o.a + self.a @ o.b)
        return PDual(self.a @ o, self.b @ o)

    def __rmatmul__(self, o):
        return PDual(o @ self.a, o @ self.b)

    # -- elementwise functions ---------------------------------------------

    def tanh(self):
        t = np.tanh(self.a)
        return PDual(t, (1.0 - t * t) * np.asarray(self.b))

    def log(self):
        return PDual(np.log(self.a), np.asarray(self.b) / self.a)

    def sin(self):
        return PDual(np.sin(self.a), np.cos(self.a) * np.asarray(self.b))

    def cos(self):
        return PDual(np.cos(self.a), -np.sin(self.a) * np.asarray(self.b))

    def clamp_min(self, c):
        mask = (self.a > c).astype(float)
        return PDual(np.maximum(self.a, c), mask * np.asarray(self.b))

    # -- structural ops -----------------------------------------------------

    def sum(self, axis, keepdims=False):
        # axes are negative and index primal dimensions only, so the leading
        # direction axis of the tangent is never reduced
        return PDual(np.sum(self.a, axis=axis, keepdims=keepdims),
                     np.sum(self.b, axis=axis, keepdims=keepdims))

    def swap_last(self):
        return PDual(np.swapaxes(self.a, -1, -2), np.swapaxes(self.b, -1, -2))

    def take_col(self, i):
        return PDual(np.asarray(self.a)[..., i], np.asarray(self.b)[..., i])


# -- dispatch helpers (ndarray / scalar / PDual) ----------------------------

def primal(x):
    return x.a if isinstance(x, PDual) else x


def tanh(x):
    return x.tanh() if isinstance(x, PDual) else np.tanh(x)


def log(x):
    return x.log() if isinstance(x, PDual) else np.log(x)


def sin(x):
    return x.sin() if isinstance(x, PDual) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, PDual) else np.cos(x)


def clamp_min(x, c):
    return x.clamp_min(c) if isinstance(x, PDual) else np.maximum(x, c)


def swap_last(x):
    return x.swap_last() if isinstance(x, PDual) else np.swapaxes(x, -1, -2)


def take_col(x, i):
    return x.take_col(i) if isinstance(x, PDual) else np.asarray(x)[..., i]


def vsum(x, axis, keepdims=False):
    if isinstance(x, PDual):
        return x.sum(axis, keepdims=keepdims)
    return np.sum(x, axis=axis, keepdims=keepdims)


def unbroadcast(val, shape):
    """Reduce ``val`` (array or PDual) down to primal shape ``shape``, undoing
    numpy broadcasting performed in the forward op."""
    vnd = val.ndim if isinstance(val, PDual) else np.ndim(val)
    m = len(shape)
    if vnd > m:
        val = vsum(val, axis=tuple(range(-vnd, -m)) if m else tuple(range(-vnd, 0)))
        vnd = m
    if m == 0:
        return val
    vshape = val.shape if isinstance(val, PDual) else np.shape(val)
    axes = tuple(i - m for i in range(m) if shape[i] == 1 and vshape[i] != 1)
    if axes:
        val = vsum(val, axis=axes, keepdims=True)
    return val
