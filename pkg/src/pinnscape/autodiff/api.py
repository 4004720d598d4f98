"""Parameter-space differentiation of scalar objectives.

Gradients come from one reverse sweep; Hessian-vector products from running
the same recording with directional tangents attached to the leaves
(forward-over-reverse); dense Hessians are assembled from batched HVPs.
"""

import numpy as np

from .tape import Tape, backward
from .values import PDual, primal
from ..errors import ConfigurationError, NonFiniteObjectiveError


def _leaf_slices(layout):
    slices = []
    for ws, _, bs, _ in layout.hidden:
        slices.append(ws)
        slices.append(bs)
    slices.append(layout.outer)
    return slices


def _check_finite(objective, params, loss_val):
    if not np.isfinite(loss_val):
        raise NonFiniteObjectiveError(
            "objective is non-finite", point=objective.locate_bad_point(params))


def value_and_gradient(objective, params):
    """(loss, dloss/dtheta) with the gradient from a reverse sweep."""
    params = np.asarray(params, dtype=float)
    layout = objective.layout
    tape = Tape()
    with np.errstate(all="ignore"):
        leaves = [tape.var(a) for a in layout.unflatten(params)]
        loss = objective.loss_var(leaves)
        lval = float(loss.val)
        _check_finite(objective, params, lval)
        grads = backward(loss, leaves)
    flat = np.empty(layout.size)
    for sl, g in zip(_leaf_slices(layout), grads):
        flat[sl] = np.ravel(np.asarray(g))
    return lval, flat


def loss_gradient(objective, params):
    return value_and_gradient(objective, params)[1]


def hessian_vector(objective, params, directions):
    """H @ v for one direction (n,) or a batch (k, n); same leading shape out."""
    params = np.asarray(params, dtype=float)
    single = np.ndim(directions) == 1
    vmat = np.atleast_2d(np.asarray(directions, dtype=float))
    layout = objective.layout
    k = vmat.shape[0]
    tape = Tape()
    with np.errstate(all="ignore"):
        leaves = [tape.var(PDual(a, t)) for a, t in
                  zip(layout.unflatten(params), layout.chunk_direction(vmat))]
        loss = objective.loss_var(leaves)
        lval = float(primal(loss.val))
        _check_finite(objective, params, lval)
        grads = backward(loss, leaves)
    out = np.empty((k, layout.size))
    for sl, g in zip(_leaf_slices(layout), grads):
        if isinstance(g, PDual):
            out[:, sl] = np.reshape(np.asarray(g.b), (k, -1))
        else:  # leaf unused or reached only linearly: zero curvature
            out[:, sl] = 0.0
    return out[0] if single else out


def hessian(objective, params, chunk=32):
    """Dense symmetric Hessian, assembled column-block by column-block from
    Hessian-vector products against coordinate directions."""
    n = objective.layout.size
    if np.shape(params) != (n,):
        raise ConfigurationError("parameter vector size mismatch")
    eye = np.eye(n)
    rows = []
    for start in range(0, n, chunk):
        rows.append(hessian_vector(objective, params, eye[start:start + chunk]))
    return np.concatenate(rows, axis=0)


def eig_symmetric(matrix, sym_tol=1e-8):
    """Full spectral decomposition of a symmetric matrix.

    Returns (eigenvalues ascending, eigenvectors as columns).  Raises on
    non-symmetric input.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ConfigurationError("matrix must be square")
    scale = np.max(np.abs(matrix))
    if scale > 0 and np.max(np.abs(matrix - matrix.T)) > sym_tol * scale:
        raise ConfigurationError("matrix is not symmetric")
    w, v = np.linalg.eigh(matrix)
    return w, v
