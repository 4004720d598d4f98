"""Loss-landscape probes.

Every analysis procedure operating on objectives, trained parameter vectors,
and recorded trajectories: linear interpolation scans, Hessian-guided walks
along flat directions, mode connectivity through quadratic Bezier paths,
random-plane scans, eigenvalue-spectrum evolution, Gram-matrix rank and null
(trench) directions, PCA of trajectories, parameter acceleration, and
repeated-training probes for bad local minima.
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import value_and_gradient, loss_gradient, hessian, eig_symmetric
from .errors import ConfigurationError, NoNullDirectionError, TrainingAborted
from .network import ParamLayout, eval_field, extract_basis, init_params
from .optimize import OptimizerConfig, train

# ---------------------------------------------------------------------------
# linear interpolation (MLI)


@dataclass
class MliResult:
    t: np.ndarray
    losses: np.ndarray
    finite: np.ndarray
    monotone: bool


def mli_scan(objective, theta_i, theta_f, samples=101, rel_tol=1e-6):
    """Loss along the segment theta_i + t (theta_f - theta_i), t in [0,1].

    The verdict is monotone iff all samples are finite and no consecutive
    pair increases by more than ``rel_tol`` times the loss scale of the scan.
    """
    theta_i = np.asarray(theta_i, dtype=float)
    theta_f = np.asarray(theta_f, dtype=float)
    t = np.linspace(0.0, 1.0, samples)
    losses = np.array([objective.evaluate(theta_i + ti * (theta_f - theta_i))
                       for ti in t])
    finite = np.isfinite(losses)
    if not finite.all():
        return MliResult(t, losses, finite, False)
    scale = max(np.max(np.abs(losses)), 1e-30)
    increases = np.diff(losses)
    monotone = bool(np.all(increases <= rel_tol * scale))
    return MliResult(t, losses, finite, monotone)


# ---------------------------------------------------------------------------
# Hessian walk


@dataclass
class WalkResult:
    distances: np.ndarray  # (steps_done,) ||theta_t - theta_f||
    loss_changes: np.ndarray  # (steps_done,) loss(theta_t) - loss(theta_f)
    min_eigenvalues: np.ndarray  # (steps_done,) eigenvalue chosen at each step
    final_params: np.ndarray
    steps_done: int
    requested_steps: int


def hessian_walk(objective, theta_f, steps=500, eta=1.0, chunk=32):
    """Repeatedly step along the Hessian eigenvector of minimum |eigenvalue|.

    theta_t = theta_{t-1} + eta * v_min, with v_min re-oriented each step to
    have positive inner product with the previous step direction.  If the
    Hessian cannot be assembled at some iterate the walk stops there and the
    partial series is returned.
    """
    theta = np.array(theta_f, dtype=float)
    loss_f = objective.evaluate(theta)
    prev_dir = None
    distances, changes, lams = [], [], []
    for _ in range(steps):
        try:
            H = hessian(objective, theta, chunk=chunk)
            w, V = eig_symmetric(H)
        except Exception:
            break
        idx = int(np.argmin(np.abs(w)))
        v = V[:, idx]
        if prev_dir is not None and np.dot(v, prev_dir) < 0:
            v = -v
        theta = theta + eta * v
        prev_dir = v
        distances.append(np.linalg.norm(theta - theta_f))
        changes.append(objective.evaluate(theta) - loss_f)
        lams.append(w[idx])
    return WalkResult(np.array(distances), np.array(changes), np.array(lams),
                      theta, len(distances), steps)


# ---------------------------------------------------------------------------
# mode connectivity


@dataclass
class BezierPath:
    theta1: np.ndarray
    theta2: np.ndarray
    p: np.ndarray

    def __call__(self, t):
        return ((1.0 - t) ** 2 * self.theta1 + 2.0 * t * (1.0 - t) * self.p
                + t ** 2 * self.theta2)


@dataclass
class ModeConnectResult:
    path: BezierPath
    t: np.ndarray
    linear_losses: np.ndarray
    bezier_losses: np.ndarray
    objective_history: np.ndarray  # path-training objective per epoch
    converged: bool

    @property
    def linear_barrier(self):
        """Max excess of the linear path over its endpoint losses."""
        ends = max(self.linear_losses[0], self.linear_losses[-1])
        return float(np.nanmax(self.linear_losses) - ends)

    @property
    def bezier_deviation(self):
        """Max |loss - loss(theta1)| along the optimized path."""
        return float(np.nanmax(np.abs(self.bezier_losses
                                      - self.bezier_losses[0])))


def mode_connect(objective, theta1, theta2, t_samples=25, opt_config=None,
                 linear_objective=None):
    """Find a control point p making the quadratic Bezier path between two
    solutions flat in loss.

    Minimizes the t-discretized mean of (1/2)(loss(path(t)) - loss(theta1))^2
    over p (initialized at the segment midpoint, so the starting path is the
    straight segment).  ``linear_objective`` overrides the objective used to
    evaluate the straight path, for cases where that path needs clamping to
    stay finite.
    """
    theta1 = np.asarray(theta1, dtype=float)
    theta2 = np.asarray(theta2, dtype=float)
    if opt_config is None:
        opt_config = OptimizerConfig(kind="adam", lr=1e-3, epochs=5000)
    lin_obj = linear_objective if linear_objective is not None else objective
    t = np.linspace(0.0, 1.0, t_samples)
    linear = np.array([lin_obj.evaluate(theta1 + ti * (theta2 - theta1))
                       for ti in t])
    loss1 = objective.evaluate(theta1)

    p = 0.5 * (theta1 + theta2)
    path = BezierPath(theta1, theta2, p)
    stepper = opt_config.stepper(p.size)
    best_p, best_val = p.copy(), np.inf
    history = []
    for _ in range(opt_config.epochs):
        path.p = p
        grad = np.zeros_like(p)
        val = 0.0
        bad = False
        for ti in t:
            try:
                li, gi = value_and_gradient(objective, path(ti))
            except Exception:
                bad = True
                break
            diff = li - loss1
            val += 0.5 * diff * diff
            grad += (2.0 * ti * (1.0 - ti) * diff) * gi
        if bad:
            history.append(np.nan)
            break
        val /= t_samples
        grad /= t_samples
        history.append(val)
        if val < best_val:
            best_val, best_p = val, p.copy()
        p = stepper.step(p, grad)
    path.p = best_p
    bezier = np.array([objective.evaluate(path(ti)) for ti in t])
    return ModeConnectResult(path, t, linear, bezier, np.array(history),
                             converged=np.isfinite(best_val))


# ---------------------------------------------------------------------------
# plane scans


@dataclass
class PlaneGrid:
    center: np.ndarray
    dir_k: np.ndarray  # unit vector
    dir_j: np.ndarray  # unit vector
    eps_k: np.ndarray  # (M,) coordinates along dir_k
    eps_j: np.ndarray  # (N,) coordinates along dir_j
    loss: np.ndarray  # (M, N)
    finite: np.ndarray  # (M, N) boolean mask


def plane_scan(objective, center, dir_k, dir_j, extent=1.0, resolution=51,
               eps_k=None, eps_j=None):
    """Evaluate the loss on a 2D plane through parameter space.

    Directions are normalized to unit length.  By default the grid covers
    [-extent, extent]^2 at the given resolution; explicit coordinate arrays
    override that.  Non-finite cells are masked, never raised.
    """
    center = np.asarray(center, dtype=float)
    vk = np.asarray(dir_k, dtype=float)
    vj = np.asarray(dir_j, dtype=float)
    nk, nj = np.linalg.norm(vk), np.linalg.norm(vj)
    if nk == 0 or nj == 0:
        raise ConfigurationError("plane directions must be nonzero")
    vk, vj = vk / nk, vj / nj
    if eps_k is None:
        eps_k = np.linspace(-extent, extent, resolution)
    if eps_j is None:
        eps_j = np.linspace(-extent, extent, resolution)
    eps_k = np.atleast_1d(np.asarray(eps_k, dtype=float))
    eps_j = np.atleast_1d(np.asarray(eps_j, dtype=float))
    loss = np.empty((eps_k.size, eps_j.size))
    for m, ek in enumerate(eps_k):
        base = center + ek * vk
        for n, ej in enumerate(eps_j):
            loss[m, n] = objective.evaluate(base + ej * vj)
    return PlaneGrid(center, vk, vj, eps_k, eps_j, loss, np.isfinite(loss))


def random_directions(n, count, rng):
    """Unit-norm random directions in n-dimensional parameter space."""
    d = rng.standard_normal((count, n))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# spectrum evolution


@dataclass
class SpectrumHistory:
    epochs: np.ndarray  # (S,)
    eigenvalues: np.ndarray  # (S, n) ascending per row
    lam_max: np.ndarray  # (S,)
    lam_min: np.ndarray  # (S,)
    shift: float = 1e-10

    def log_magnitudes(self):
        return np.log10(np.abs(self.eigenvalues) + self.shift)

    def histogram(self, bins=60):
        """2D histogram counts over (epoch sample, log10|eigenvalue|)."""
        logmag = self.log_magnitudes()
        edges = np.linspace(logmag.min(), logmag.max(), bins + 1)
        counts = np.stack([np.histogram(row, bins=edges)[0] for row in logmag])
        return counts, edges


def spectrum_evolution(objective, trajectory, sample_every=50, chunk=32):
    """Full Hessian eigenvalue spectra at sampled epochs of a trajectory.

    Samples the recorded iterates whose epoch is a multiple of
    ``sample_every`` plus the final iterate.
    """
    epochs = np.asarray(trajectory.epochs_recorded)
    keep = (epochs % sample_every == 0)
    keep[-1] = True
    rows = np.flatnonzero(keep)
    spectra, used = [], []
    for r in rows:
        H = hessian(objective, trajectory.params[r], chunk=chunk)
        w, _ = eig_symmetric(H)
        spectra.append(w)
        used.append(epochs[r])
    spectra = np.array(spectra)
    return SpectrumHistory(np.array(used), spectra, spectra[:, -1],
                           spectra[:, 0])


def spectrum_concentration(eigenvalues, rel_threshold=1e-6):
    """Fraction of eigenvalues with |lambda| below rel_threshold * lam_max."""
    w = np.asarray(eigenvalues)
    return float(np.mean(np.abs(w) < rel_threshold * np.max(w)))


# ---------------------------------------------------------------------------
# Gram matrix, rank, null (trench) directions


def gram_matrix(basis_values, weights):
    """G_ij = sum_p w_p h_i(x_p) h_j(x_p) — the quadrature Gram matrix."""
    H = np.asarray(basis_values, dtype=float)
    w = np.asarray(weights, dtype=float)
    return H.T @ (H * w[:, None])


def gram_rank(basis_values, weights, rel_threshold):
    """(G, rank): rank counts eigenvalues above rel_threshold * lam_max."""
    G = gram_matrix(basis_values, weights)
    w = np.linalg.eigvalsh(G)
    lam_max = w[-1]
    rank = int(np.sum(w > rel_threshold * lam_max)) if lam_max > 0 else 0
    return G, rank


def null_direction(objective, params, rel_threshold, column=0):
    """A parameter-space direction v = [Delta, 0] along which the field (and
    hence the loss) is invariant: Delta comes from the numerical null space
    of the basis Gram matrix, refined to also annihilate the loss-relevant
    basis derivatives and the first-order loss variation; it is placed in the
    outer-coefficient slice for one output ``column``, inner parameters
    untouched.

    Raises :class:`NoNullDirectionError` when G is full-rank at the
    threshold.
    """
    params = np.asarray(params, dtype=float)
    weights = objective.grid.weights
    _, basis = eval_field(objective.spec, objective.layout.unflatten(params),
                          objective.grid.points)
    H = np.asarray(basis.val)
    G = gram_matrix(H, weights)
    w, V = np.linalg.eigh(G)
    null_mask = w <= rel_threshold * w[-1]
    if not null_mask.any():
        raise NoNullDirectionError(
            f"Gram matrix is full-rank at relative threshold {rel_threshold:g}")
    # Within the Gram's numerical null space, pick the combination that also
    # annihilates the basis derivatives of the order the loss consumes
    # (second for residual forms, first for energy forms), so the loss is
    # invariant too.
    if objective.kind.startswith("pinn"):
        jets = [np.asarray(basis.d2[k][l]) for k in range(basis.n)
                for l in range(k, basis.n)]
    else:
        jets = [np.asarray(d) for d in basis.d1]
    A = sum(gram_matrix(j, weights) for j in jets)
    Vn = V[:, null_mask]
    # Kill the first-order loss variation exactly: restrict to the subspace
    # orthogonal to the loss gradient over the targeted coefficient column.
    layout = objective.layout
    out_dim = objective.spec.output_dim
    g_col = loss_gradient(objective, params)[layout.outer]
    g_col = g_col.reshape(-1, out_dim)[:, column]
    c = Vn.T @ g_col
    cn = np.linalg.norm(c)
    if cn > 0 and Vn.shape[1] > 1:
        chat = c / cn
        Q, R = np.linalg.qr(np.eye(c.size) - np.outer(chat, chat))
        W = Q[:, np.abs(np.diag(R)) > 1e-12]
    else:
        W = np.eye(c.size)
    restricted = W.T @ (Vn.T @ A @ Vn) @ W
    _, small_vecs = np.linalg.eigh(restricted)
    delta = Vn @ (W @ small_vecs[:, 0])
    delta /= np.linalg.norm(delta)
    v = np.zeros(layout.size)
    v[layout.outer] = np.reshape(
        np.eye(out_dim)[None, column] * delta[:, None], -1)
    # diagnostic: field change per unit step must be negligible
    theta_o = params[layout.outer].reshape(-1, out_dim)[:, column]
    change = np.linalg.norm(H @ delta)
    scale = np.linalg.norm(H @ theta_o)
    return v, delta, G, change / max(scale, 1e-300)


# ---------------------------------------------------------------------------
# PCA of trajectories


@dataclass
class PcaBasis:
    mean: np.ndarray  # (n,)
    components: np.ndarray  # (Q, n) orthonormal rows
    fractions: np.ndarray  # (Q,) explained-variance fractions


def pca_trajectory(trajectory_params, n_components):
    """PCA of a trajectory matrix (rows = iterates).

    Returns the basis and the trajectory's coordinates in it (R, Q).  The
    center is the trajectory mean.  A constant trajectory yields zero
    components and zero fractions.
    """
    X = np.asarray(trajectory_params, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ConfigurationError("need at least two trajectory rows for PCA")
    if n_components < 1 or n_components > min(X.shape):
        raise ConfigurationError("component count out of range")
    mean = X.mean(axis=0)
    Xc = X - mean
    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    total = float(np.sum(s * s))
    if total == 0.0:
        basis = PcaBasis(mean, np.zeros((n_components, X.shape[1])),
                         np.zeros(n_components))
        return basis, np.zeros((X.shape[0], n_components))
    fractions = (s * s / total)[:n_components]
    components = Vt[:n_components]
    coords = Xc @ components.T
    return PcaBasis(mean, components, fractions), coords


def pca_plane_scan(objective, basis, coords, k=0, j=1, resolution=51, pad=0.2):
    """Loss scan in the (v_k, v_j) principal plane, covering the projected
    trajectory's bounding box with a relative margin ``pad``."""
    ck, cj = coords[:, k], coords[:, j]

    def padded(c):
        lo, hi = float(c.min()), float(c.max())
        span = max(hi - lo, 1e-8)
        return np.linspace(lo - pad * span, hi + pad * span, resolution)

    return plane_scan(objective, basis.mean, basis.components[k],
                      basis.components[j], eps_k=padded(ck), eps_j=padded(cj))


# ---------------------------------------------------------------------------
# acceleration


def acceleration_series(trajectory_params, eta, normalize=False):
    """Finite-difference acceleration magnitudes along a trajectory recorded
    at every epoch.

    accel_t = (theta_{t+1} - 2 theta_t + theta_{t-1}) / eta^2 for interior t.
    With ``normalize``, divides by ||velocity_t||^2 where velocity_t =
    (theta_{t+1} - theta_t)/eta; entries with zero velocity are masked.
    Returns (magnitudes, valid-mask).
    """
    X = np.asarray(trajectory_params, dtype=float)
    if X.shape[0] < 3:
        raise ConfigurationError("need at least three iterates for acceleration")
    acc = (X[2:] - 2.0 * X[1:-1] + X[:-2]) / eta ** 2
    mag = np.linalg.norm(acc, axis=1)
    mask = np.ones(mag.size, dtype=bool)
    if normalize:
        vel = (X[2:] - X[1:-1]) / eta
        speed2 = np.sum(vel * vel, axis=1)
        mask = speed2 > 0
        mag = np.where(mask, mag / np.where(mask, speed2, 1.0), 0.0)
    return mag, mask


# ---------------------------------------------------------------------------
# repeated-training probe for bad minima


@dataclass
class TrialOutcome:
    width: int
    optimizer: str
    trial: int
    seed: int
    losses: np.ndarray  # per-epoch loss curve (empty if aborted at epoch 0)
    final_loss: float
    failed: bool  # aborted on non-finite objective
    stuck: bool = False


@dataclass
class ProbeMinimaResult:
    outcomes: list  # of TrialOutcome
    best_final: float
    band: float  # final-epoch loss fluctuation band of the best run

    def stuck_runs(self):
        return [o for o in self.outcomes if o.stuck]

    def failed_runs(self):
        return [o for o in self.outcomes if o.failed]


def probe_minima(objective_factory, widths, optimizers, trials, epochs,
                 lr, seed0=0, init_scale=1.0, stuck_factor=10.0,
                 band_window=100, band_floor_rel=0.0, callback=None):
    """Train repeatedly across widths/optimizers/seeds and flag runs that
    stagnate far above the best.

    ``objective_factory(width)`` builds the objective for a given network
    width.  A run is classified stuck when its final loss exceeds the best
    final loss by more than ``stuck_factor`` times the best run's final-epoch
    fluctuation band (the spread of its last ``band_window`` losses), with an
    optional floor of ``band_floor_rel`` times the best run's total descent
    for objectives whose best run converges to machine-flat loss curves.
    Aborted (non-finite) runs are recorded as failed, not stuck.
    """
    outcomes = []
    seed = seed0
    for width in widths:
        objective = objective_factory(width)
        for opt_kind in optimizers:
            config = OptimizerConfig(kind=opt_kind, lr=lr, epochs=epochs,
                                     record_every=max(1, epochs))
            for trial in range(trials):
                theta0 = init_params(objective.spec, seed=seed,
                                     scale=init_scale)
                try:
                    rec = train(objective, theta0, config)
                    outcome = TrialOutcome(width, opt_kind, trial, seed,
                                           rec.losses, rec.final_loss, False)
                except TrainingAborted as ta:
                    outcome = TrialOutcome(width, opt_kind, trial, seed,
                                           ta.record.losses, np.nan, True)
                outcomes.append(outcome)
                if callback is not None:
                    callback(outcome)
                seed += 1
    finished = [o for o in outcomes if not o.failed]
    if not finished:
        return ProbeMinimaResult(outcomes, np.nan, np.nan)
    best = min(finished, key=lambda o: o.final_loss)
    tail = best.losses[-min(band_window, best.losses.size):]
    band = float(np.max(tail) - np.min(tail))
    descent = float(best.losses[0] - best.final_loss)
    threshold = stuck_factor * max(band, band_floor_rel * abs(descent))
    for o in finished:
        o.stuck = bool(o.final_loss - best.final_loss > threshold)
    return ProbeMinimaResult(outcomes, best.final_loss, band)
