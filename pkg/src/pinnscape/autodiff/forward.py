"""Forward-mode spatial differentiation with second-order dual numbers.

A :class:`Dual2` carries a value, first derivatives d1 (one per input
dimension, at most two) and the symmetric matrix of second derivatives d2.
Components are generic: plain arrays for closed-form fields, tape ``Var``s
when parameter gradients are also being recorded.  Exact zeros are stored as
the integer 0 so no work (and no tape nodes) are spent on them.
"""

import numpy as np

from .tape import Var
from . import values as V


def _is_zero(x):
    return isinstance(x, (int, float)) and x == 0


_TRACK_SECOND = [True]


class first_order(object):
    """Context manager suppressing second-derivative propagation, for
    objectives that only consume first spatial derivatives."""

    def __enter__(self):
        self._prev = _TRACK_SECOND[0]
        _TRACK_SECOND[0] = False

    def __exit__(self, *exc):
        _TRACK_SECOND[0] = self._prev
        return False


def _zero2(n):
    return [[0] * n for _ in range(n)]


def _add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return a + b


def _sub(a, b):
    if _is_zero(b):
        return a
    if _is_zero(a):
        return -b
    return a - b


def _mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return 0
    return a * b


def _tanh(x):
    return x.tanh() if isinstance(x, Var) else np.tanh(x)


def _log(x):
    return x.log() if isinstance(x, Var) else np.log(x)


def _sin(x):
    return x.sin() if isinstance(x, Var) else np.sin(x)


def _cos(x):
    return x.cos() if isinstance(x, Var) else np.cos(x)


def _square(x):
    return x.square() if isinstance(x, Var) else x * x


class Dual2(object):
    """Second-order dual number in ``n`` (1 or 2) input dimensions."""

    __slots__ = ("val", "d1", "d2")

    def __init__(self, val, d1, d2):
        self.val = val
        self.d1 = list(d1)
        self.d2 = [list(row) for row in d2]

    @property
    def n(self):
        return len(self.d1)

    @classmethod
    def constant(cls, val, n):
        return cls(val, [0] * n, [[0] * n for _ in range(n)])

    @classmethod
    def seed(cls, coords):
        """Seed independent coordinates: ``coords`` is a list of arrays."""
        n = len(coords)
        out = []
        for k, x in enumerate(coords):
            d1 = [0] * n
            d1[k] = np.ones(np.shape(x))
            out.append(cls(x, d1, [[0] * n for _ in range(n)]))
        return out

    def _coerce(self, other):
        if isinstance(other, Dual2):
            return other
        return Dual2.constant(other, self.n)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, o):
        o = self._coerce(o)
        n = self.n
        d2 = ([[_add(self.d2[k][l], o.d2[k][l]) for l in range(n)]
               for k in range(n)] if _TRACK_SECOND[0] else _zero2(n))
        return Dual2(_add(self.val, o.val),
                     [_add(self.d1[k], o.d1[k]) for k in range(n)], d2)

    __radd__ = __add__

    def __neg__(self):
        n = self.n
        return Dual2(-self.val if not _is_zero(self.val) else 0,
                     [0 if _is_zero(d) else -d for d in self.d1],
                     [[0 if _is_zero(d) else -d for d in row]
                      for row in self.d2])

    def __sub__(self, o):
        o = self._coerce(o)
        n = self.n
        d2 = ([[_sub(self.d2[k][l], o.d2[k][l]) for l in range(n)]
               for k in range(n)] if _TRACK_SECOND[0] else _zero2(n))
        return Dual2(_sub(self.val, o.val),
                     [_sub(self.d1[k], o.d1[k]) for k in range(n)], d2)

    def __rsub__(self, o):
        return self._coerce(o) - self

    def __mul__(self, o):
        o = self._coerce(o)
        n = self.n
        u, v = self.val, o.val
        d1 = [_add(_mul(self.d1[k], v), _mul(u, o.d1[k])) for k in range(n)]
        d2 = ([[_add(_add(_mul(self.d2[k][l], v), _mul(u, o.d2[k][l])),
                     _add(_mul(self.d1[k], o.d1[l]),
                          _mul(self.d1[l], o.d1[k])))
                for l in range(n)] for k in range(n)]
              if _TRACK_SECOND[0] else _zero2(n))
        return Dual2(_mul(u, v), d1, d2)

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = self._coerce(o)
        return self * o.reciprocal()

    def __rtruediv__(self, o):
        return self._coerce(o) * self.reciprocal()

    # -- unary chain rule ---------------------------------------------------

    def _chain(self, f0, f1, f2):
        """Apply scalar function with value f0, derivative f1, second f2."""
        n = self.n
        d1 = [_mul(f1, self.d1[k]) for k in range(n)]
        d2 = ([[_add(_mul(f2, _mul(self.d1[k], self.d1[l])),
                     _mul(f1, self.d2[k][l]))
                for l in range(n)] for k in range(n)]
              if _TRACK_SECOND[0] else _zero2(n))
        return Dual2(f0, d1, d2)

    def reciprocal(self):
        u = self.val
        r = 1.0 / u
        r2 = _mul(r, r)
        return self._chain(r, -r2, 2.0 * _mul(r2, r))

    def tanh(self):
        t = _tanh(self.val)
        s = _sub(1.0, _square(t))
        return self._chain(t, s, -2.0 * _mul(t, s))

    def log(self):
        u = self.val
        r = 1.0 / u
        return self._chain(_log(u), r, -_mul(r, r))

    def sin(self):
        s, c = _sin(self.val), _cos(self.val)
        return self._chain(s, c, -s)

    def cos(self):
        s, c = _sin(self.val), _cos(self.val)
        return self._chain(c, -s, -c)

    def square(self):
        return self._chain(_square(self.val), 2.0 * self.val, 2.0)

    def clamp_min(self, c):
        """max(value, c) with zero derivative on the clamped branch."""
        v = self.val
        num = v.val if isinstance(v, Var) else v
        num = num.a if isinstance(num, V.PDual) else num
        mask = (np.asarray(num) > c).astype(float)
        clamped = v.clamp_min(c) if isinstance(v, Var) else np.maximum(v, c)
        n = self.n
        return Dual2(clamped, [_mul(mask, d) for d in self.d1],
                     [[_mul(mask, d) for d in row] for row in self.d2])

    def matmul(self, w):
        """Right-multiply every component by a constant-in-space matrix ``w``
        (an ndarray or a tape Var holding network weights)."""
        n = self.n

        def mm(x):
            return 0 if _is_zero(x) else x @ w

        return Dual2(mm(self.val), [mm(d) for d in self.d1],
                     [[mm(d) for d in row] for row in self.d2])

    def take_col(self, i):
        n = self.n

        def col(x):
            if _is_zero(x):
                return 0
            return x.take_col(i) if isinstance(x, Var) else np.asarray(x)[..., i]

        return Dual2(col(self.val), [col(d) for d in self.d1],
                     [[col(d) for d in row] for row in self.d2])
