"""Gradient-based training loops with full-trajectory recording.

Plain gradient descent and ADAM, plus two constrained variants used by the
landscape probes: training restricted to a hypersphere of fixed radius, and
training inside a random low-dimensional affine subspace of parameter space.
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import value_and_gradient
from .errors import ConfigurationError, TrainingAborted

# Recording every epoch of a long run can get large (n * epochs doubles);
# above this many stored values the trajectory is thinned automatically.
_MAX_TRAJECTORY_VALUES = 200_000_000


@dataclass
class OptimizerConfig:
    kind: str = "adam"  # 'adam' or 'gd'
    lr: float = 1e-3
    epochs: int = 5000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    record_every: int = 1  # thin the stored trajectory; loss is always kept

    def __post_init__(self):
        if self.kind not in ("adam", "gd"):
            raise ConfigurationError(f"unknown optimizer kind {self.kind!r}")
        if self.epochs < 0 or self.lr <= 0 or self.record_every < 1:
            raise ConfigurationError("invalid optimizer configuration")

    def stepper(self, n):
        return _Adam(self, n) if self.kind == "adam" else _GD(self)


class _GD(object):
    def __init__(self, config):
        self.lr = config.lr

    def step(self, params, grad):
        return params - self.lr * grad


class _Adam(object):
    """ADAM with bias-corrected moment estimates."""

    def __init__(self, config, n):
        self.lr = config.lr
        self.b1 = config.beta1
        self.b2 = config.beta2
        self.eps = config.eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.b1 * self.m + (1.0 - self.b1) * grad
        self.v = self.b2 * self.v + (1.0 - self.b2) * grad * grad
        mhat = self.m / (1.0 - self.b1 ** self.t)
        vhat = self.v / (1.0 - self.b2 ** self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class TrajectoryRecord:
    """Everything recorded over one training run.

    ``params`` holds the visited iterates as rows: the initial point, then
    one row per recorded epoch (see ``epochs_recorded``).  ``losses`` has one
    entry per epoch plus the final loss, so ``losses[0]`` is the loss at the
    initial point and ``losses[-1]`` at the final iterate.
    """

    params: np.ndarray  # (R, n)
    losses: np.ndarray  # (epochs + 1,)
    epochs_recorded: np.ndarray  # (R,) epoch index of each params row
    radii: np.ndarray = field(default=None)  # (epochs + 1,) parameter norms

    @property
    def final_params(self):
        return self.params[-1]

    @property
    def final_loss(self):
        return float(self.losses[-1])


def train(objective, params0, config, callback=None):
    """Minimize ``objective`` from ``params0``; returns a TrajectoryRecord.

    ``callback(epoch, params, loss)`` runs after each step when given.  A
    non-finite loss raises :class:`TrainingAborted` carrying the record of
    all epochs completed before the failure.
    """
    params = np.array(params0, dtype=float)
    n = params.size
    record_every = config.record_every
    if (config.epochs // record_every + 2) * n > _MAX_TRAJECTORY_VALUES:
        record_every = max(record_every,
                           int(np.ceil(config.epochs * n / _MAX_TRAJECTORY_VALUES)))
    stepper = config.stepper(n)
    kept, kept_epochs, losses, radii = [params.copy()], [0], [], [np.linalg.norm(params)]

    def snapshot(final_loss):
        if kept_epochs[-1] != len(losses):
            kept.append(params.copy())
            kept_epochs.append(len(losses))
        return TrajectoryRecord(np.array(kept),
                                np.array(losses + [final_loss]),
                                np.array(kept_epochs), np.array(radii))

    for epoch in range(config.epochs):
        try:
            loss, grad = value_and_gradient(objective, params)
        except Exception:
            raise TrainingAborted(epoch, snapshot(np.nan))
        losses.append(loss)
        params = stepper.step(params, grad)
        radii.append(np.linalg.norm(params))
        if (epoch + 1) % record_every == 0:
            kept.append(params.copy())
            kept_epochs.append(epoch + 1)
        if callback is not None:
            callback(epoch, params, loss)
    final = objective.evaluate(params)
    if not np.isfinite(final):
        raise TrainingAborted(config.epochs, snapshot(final))
    return snapshot(final)


def train_on_sphere(objective, params0, config, radius, callback=None):
    """Training constrained to the hypersphere ||theta|| = radius: each step
    takes an unconstrained optimizer update and renormalizes back onto the
    sphere."""
    if radius <= 0:
        raise ConfigurationError("sphere radius must be positive")
    params = np.array(params0, dtype=float)
    nrm = np.linalg.norm(params)
    if nrm == 0:
        raise ConfigurationError("cannot project the zero vector onto a sphere")
    params *= radius / nrm
    stepper = config.stepper(params.size)
    losses = []
    for epoch in range(config.epochs):
        try:
            loss, grad = value_and_gradient(objective, params)
        except Exception:
            raise TrainingAborted(epoch, TrajectoryRecord(
                params[None].copy(), np.array(losses + [np.nan]),
                np.array([epoch])))
        losses.append(loss)
        params = stepper.step(params, grad)
        params *= radius / np.linalg.norm(params)
        if callback is not None:
            callback(epoch, params, loss)
    final = objective.evaluate(params)
    return TrajectoryRecord(params[None].copy(), np.array(losses + [final]),
                            np.array([config.epochs]),
                            np.full(config.epochs + 1, radius))


class SubspaceMap(object):
    """Affine map theta = theta0 + P z into a random d-dimensional subspace.

    The projection matrix has i.i.d. standard-normal columns scaled to unit
    norm (columns are not orthogonalized against each other).
    """

    def __init__(self, theta0, d, rng):
        theta0 = np.asarray(theta0, dtype=float)
        if d < 1 or d > theta0.size:
            raise ConfigurationError("subspace dimension out of range")
        self.theta0 = theta0
        P = rng.standard_normal((theta0.size, d))
        self.P = P / np.linalg.norm(P, axis=0)

    @property
    def d(self):
        return self.P.shape[1]

    def embed(self, z):
        return self.theta0 + self.P @ z

    def pull_gradient(self, grad):
        return self.P.T @ grad


def train_subspace(objective, subspace, config, callback=None):
    """Minimize over subspace coordinates z (initialized at zero); gradients
    in z are pullbacks P^T g of the ambient gradient.  Records the ambient
    trajectory."""
    z = np.zeros(subspace.d)
    stepper = config.stepper(subspace.d)
    losses = []
    for epoch in range(config.epochs):
        params = subspace.embed(z)
        try:
            loss, grad = value_and_gradient(objective, params)
        except Exception:
            raise TrainingAborted(epoch, TrajectoryRecord(
                params[None].copy(), np.array(losses + [np.nan]),
                np.array([epoch])))
        losses.append(loss)
        z = stepper.step(z, subspace.pull_gradient(grad))
        if callback is not None:
            callback(epoch, subspace.embed(z), loss)
    params = subspace.embed(z)
    final = objective.evaluate(params)
    return TrajectoryRecord(params[None].copy(), np.array(losses + [final]),
                            np.array([config.epochs]))
