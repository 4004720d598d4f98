import numpy as np
import pytest

from pinnscape import network, optimize, problems
from pinnscape.autodiff.tape import Tape
from pinnscape.runio import labeled_rng


class _FlatLayout:
    """Single-leaf parameter layout for synthetic objectives."""

    def __init__(self, n):
        self.size = n
        self.hidden = []
        self.outer = slice(0, n)

    def unflatten(self, params):
        return [np.asarray(params, dtype=float)]

    def chunk_direction(self, vmat):
        return [np.asarray(vmat, dtype=float)]


class QuadraticObjective:
    """loss(theta) = 0.5 (theta-c)^T Q (theta-c) + offset.

    Implements the same differentiation interface as the physics objectives,
    so probes can be checked against closed-form answers.
    """

    def __init__(self, Q, center=None, offset=0.0):
        self.Q = np.asarray(Q, dtype=float)
        n = self.Q.shape[0]
        self.center = np.zeros(n) if center is None else np.asarray(center, float)
        self.offset = float(offset)
        self.layout = _FlatLayout(n)
        self.n_params = n

    def loss_var(self, leaves):
        y = leaves[0] - self.center
        return ((y @ self.Q) * y).total() * 0.5 + self.offset

    def evaluate(self, params):
        y = np.asarray(params, dtype=float) - self.center
        return float(0.5 * y @ self.Q @ y + self.offset)

    def locate_bad_point(self, params):
        return None


def fd_gradient(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.fixture(scope="session")
def objectives_1d():
    return {form: problems.make_objective("elliptic1d", form)
            for form in ("drm", "pinn")}


@pytest.fixture(scope="session")
def trained_1d(objectives_1d):
    """One converged 7500-epoch ADAM run per 1D objective (shared; slow)."""
    out = {}
    for form, obj in objectives_1d.items():
        theta0 = network.init_params(obj.spec, seed=labeled_rng(0, "init"),
                                     scale=1.0)
        out[form] = optimize.train(
            obj, theta0, optimize.OptimizerConfig("adam", 1e-3, 7500))
    return out
