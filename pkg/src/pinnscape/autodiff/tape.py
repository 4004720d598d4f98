"""Reverse-mode tape over vectorized numpy values.

Each :class:`Var` wraps an array (or a :class:`PDual`) vectorized over
quadrature points; operations append nodes holding parents and pullback
closures.  A reverse sweep over the recording returns gradients of a scalar
loss with respect to the leaf variables.
"""

import numpy as np

from . import values as V
from .values import PDual


class Tape(object):
    """Ordered recording of operations; not shareable mid-recording."""

    def __init__(self):
        self.nodes = []

    def var(self, value):
        """Create a leaf variable."""
        return Var(self, value, ())

    def _node(self, value, parents):
        v = Var(self, value, parents)
        return v


class Var(object):
    __slots__ = ("tape", "val", "parents")
    __array_ufunc__ = None  # force numpy to defer to our reflected operators

    def __init__(self, tape, val, parents):
        self.tape = tape
        self.val = val
        self.parents = parents
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.val.shape if isinstance(self.val, PDual) else np.shape(self.val)

    def __repr__(self):
        return f"Var(shape={self.shape})"

    # -- binary ops ---------------------------------------------------------

    def __add__(self, o):
        if isinstance(o, Var):
            sa, sb = self.shape, o.shape
            return self.tape._node(
                self.val + o.val,
                ((self, lambda g: V.unbroadcast(g, sa)),
                 (o, lambda g: V.unbroadcast(g, sb))))
        sa = self.shape
        return self.tape._node(self.val + o,
                               ((self, lambda g: V.unbroadcast(g, sa)),))

    __radd__ = __add__

    def __neg__(self):
        return self.tape._node(-self.val, ((self, lambda g: -g),))

    def __sub__(self, o):
        if isinstance(o, Var):
            sa, sb = self.shape, o.shape
            return self.tape._node(
                self.val - o.val,
                ((self, lambda g: V.unbroadcast(g, sa)),
                 (o, lambda g: V.unbroadcast(-g, sb))))
        sa = self.shape
        return self.tape._node(self.val - o,
                               ((self, lambda g: V.unbroadcast(g, sa)),))

    def __rsub__(self, o):
        sa = self.shape
        return self.tape._node(o - self.val,
                               ((self, lambda g: V.unbroadcast(-g, sa)),))

    def __mul__(self, o):
        if isinstance(o, Var):
            sa, sb = self.shape, o.shape
            av, bv = self.val, o.val
            return self.tape._node(
                av * bv,
                ((self, lambda g: V.unbroadcast(g * bv, sa)),
                 (o, lambda g: V.unbroadcast(g * av, sb))))
        sa = self.shape
        return self.tape._node(self.val * o,
                               ((self, lambda g: V.unbroadcast(g * o, sa)),))

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Var):
            sa, sb = self.shape, o.shape
            av, bv = self.val, o.val
            out = av / bv
            return self.tape._node(
                out,
                ((self, lambda g: V.unbroadcast(g / bv, sa)),
                 (o, lambda g: V.unbroadcast(-(g * out) / bv, sb))))
        sa = self.shape
        return self.tape._node(self.val / o,
                               ((self, lambda g: V.unbroadcast(g / o, sa)),))

    def __rtruediv__(self, o):
        sa = self.shape
        av = self.val
        out = o / av
        return self.tape._node(
            out, ((self, lambda g: V.unbroadcast(-(g * out) / av, sa)),))

    def __matmul__(self, o):
        if isinstance(o, Var):
            av, bv = self.val, o.val
            return self.tape._node(
                av @ bv,
                ((self, lambda g: g @ V.swap_last(bv)),
                 (o, lambda g: V.swap_last(av) @ g)))
        av = self.val
        return self.tape._node(av @ o, ((self, lambda g: g @ V.swap_last(o)),))

    def __rmatmul__(self, o):
        av = self.val
        return self.tape._node(o @ av, ((self, lambda g: V.swap_last(o) @ g),))

    # -- elementwise functions ---------------------------------------------

    def tanh(self):
        t = V.tanh(self.val)
        return self.tape._node(t, ((self, lambda g: g * (1.0 - t * t)),))

    def log(self):
        av = self.val
        return self.tape._node(V.log(av), ((self, lambda g: g / av),))

    def sin(self):
        av = self.val
        return self.tape._node(V.sin(av), ((self, lambda g: g * V.cos(av)),))

    def cos(self):
        av = self.val
        return self.tape._node(V.cos(av), ((self, lambda g: -(g * V.sin(av))),))

    def square(self):
        av = self.val
        return self.tape._node(av * av, ((self, lambda g: g * (2.0 * av)),))

    def clamp_min(self, c):
        # subgradient: zero on the clamped branch
        mask = (np.asarray(V.primal(self.val)) > c).astype(float)
        return self.tape._node(V.clamp_min(self.val, c),
                               ((self, lambda g: g * mask),))

    # -- structural ops -----------------------------------------------------

    def take_col(self, i):
        sa = self.shape
        ncols = sa[-1]
        return self.tape._node(V.take_col(self.val, i),
                               ((self, lambda g: _col_scatter(g, ncols, i)),))

    def total(self):
        """Sum over all (primal) axes, yielding a scalar node."""
        sa = self.shape
        axes = tuple(range(-len(sa), 0))
        return self.tape._node(V.vsum(self.val, axes) if sa else self.val,
                               ((self, lambda g: g * np.ones(sa)),))


def _col_scatter(g, ncols, i):
    if isinstance(g, PDual):
        return PDual(_col_scatter(g.a, ncols, i), _col_scatter(g.b, ncols, i))
    g = np.asarray(g)
    out = np.zeros(g.shape + (ncols,))
    out[..., i] = g
    return out


def backward(loss, leaves):
    """Reverse sweep: gradient of scalar ``loss`` w.r.t. each leaf Var.

    Returns one value per leaf (array, PDual, or zeros for unused leaves).
    """
    adjoint = {id(loss): 1.0}
    for node in reversed(loss.tape.nodes):
        g = adjoint.get(id(node))
        if g is None:
            continue
        for parent, pullback in node.parents:
            contrib = adjoint.get(id(parent))
            piece = pullback(g)
            adjoint[id(parent)] = piece if contrib is None else contrib + piece
    out = []
    for leaf in leaves:
        g = adjoint.get(id(leaf))
        if g is None:
            g = np.zeros(leaf.shape)
        out.append(g)
    return out
