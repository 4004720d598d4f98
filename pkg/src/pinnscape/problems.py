"""The four objective functions and their quadrature machinery.

Two boundary-value problems, each in an energy-minimization (DRM) and a
squared-residual (PINN) formulation:

* 1D elliptic:  u'' + f = 0 on [0,1], u(0)=u(1)=0, with manufactured
  solution u(x) = -2x sin(2 pi x).
* 2D compressible Neohookean hyperelasticity on the unit disk with a
  manufactured torsional displacement field.
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff.forward import Dual2, first_order
from .autodiff.tape import Var
from .autodiff import values as V
from .errors import ConfigurationError
from .network import NetworkSpec, ParamLayout, eval_field

KINDS = ("drm1d", "pinn1d", "drm2d", "pinn2d")


# ---------------------------------------------------------------------------
# quadrature grids

@dataclass(frozen=True)
class QuadratureGrid:
    points: np.ndarray  # (P, dim)
    weights: np.ndarray  # (P,)

    @property
    def dim(self):
        return self.points.shape[1]


def uniform_grid_1d(n=100):
    """Midpoint rule on [0,1]: x_i = (i - 1/2)/n, weight 1/n."""
    x = (np.arange(n) + 0.5) / n
    return QuadratureGrid(x[:, None], np.full(n, 1.0 / n))


def polar_grid(n_r=20, n_theta=50):
    """Cell-centered polar grid on the unit disk; weights carry the Jacobian
    and sum to the disk area pi exactly."""
    r = (np.arange(n_r) + 0.5) / n_r
    th = 2.0 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
    rr, tt = np.meshgrid(r, th, indexing="ij")
    pts = np.stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()], axis=1)
    w = (rr * (1.0 / n_r) * (2.0 * np.pi / n_theta)).ravel()
    return QuadratureGrid(pts, w)


# ---------------------------------------------------------------------------
# manufactured solutions and sources

def manufactured_1d(x):
    """u(x) = -2x sin(2 pi x)."""
    x = np.asarray(x, dtype=float)
    return -2.0 * x * np.sin(2.0 * np.pi * x)


def source_1d(x):
    """f = -u'' for the manufactured 1D solution (derived symbolically;
    cross-checked against finite differences of u in the tests)."""
    x = np.asarray(x, dtype=float)
    tp = 2.0 * np.pi
    return 8.0 * np.pi * np.cos(tp * x) - 8.0 * np.pi ** 2 * x * np.sin(tp * x)


def manufactured_2d(points, alpha=1.0):
    """Torsional field u = alpha r^2 (1 - r^2) [-X2, X1]; (P, 2) output."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r2 = pts[:, 0] ** 2 + pts[:, 1] ** 2
    s = alpha * r2 * (1.0 - r2)
    return np.stack([-s * pts[:, 1], s * pts[:, 0]], axis=1)


def _manufactured_2d_dual(coords, alpha):
    """The torsional field as Dual2 components (for stress divergence)."""
    x, y = coords
    r2 = x.square() + y.square()
    s = (r2 * (1.0 - r2)) * alpha
    return [-(s * y), s * x]


# ---------------------------------------------------------------------------
# Neohookean kinematics and stress (generic over Dual2 components)

def deformation_dual(u_comps):
    """F = I + grad u as a 2x2 matrix of Dual2 scalars carrying one spatial
    derivative order (from the field's second derivatives)."""
    F = [[None, None], [None, None]]
    for i in range(2):
        ui = u_comps[i]
        for j in range(2):
            val = ui.d1[j] + 1.0 if i == j else ui.d1[j]
            d1 = [ui.d2[j][k] for k in range(2)]
            F[i][j] = Dual2(val, d1, [[0, 0], [0, 0]])
    return F


def piola_dual(F, l1, l2, clamp=None):
    """First Piola-Kirchhoff stress P = l1 (F - F^-T) + l2 log(J) F^-T,
    propagated through Dual2 entries.  The clamp, when given, applies inside
    the logarithm only."""
    J = F[0][0] * F[1][1] - F[0][1] * F[1][0]
    logJ = (J.clamp_min(clamp) if clamp is not None else J).log()
    adj = [[F[1][1], -F[0][1]], [-F[1][0], F[0][0]]]
    P = [[None, None], [None, None]]
    for i in range(2):
        for j in range(2):
            finvt = adj[j][i] / J
            P[i][j] = (F[i][j] - finvt) * l1 + (logJ * finvt) * l2
    return P, J


def body_force_2d(points, l1=1.0, l2=0.25, alpha=1.0):
    """B = -div P for the manufactured torsional field; (P, 2) array."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    coords = Dual2.seed([pts[:, 0], pts[:, 1]])
    u = _manufactured_2d_dual(coords, alpha)
    P, _ = piola_dual(deformation_dual(u), l1, l2)
    b0 = -(P[0][0].d1[0] + P[0][1].d1[1])
    b1 = -(P[1][0].d1[0] + P[1][1].d1[1])
    return np.stack([b0, b1], axis=1)


def _square(x):
    return x.square() if isinstance(x, (Var, Dual2)) else x * x


def _log(x):
    return x.log() if isinstance(x, Var) else np.log(x)


def _clamp_min(x, c):
    return x.clamp_min(c) if isinstance(x, Var) else np.maximum(x, c)


def _col(x, i):
    return x.take_col(i) if isinstance(x, Var) else np.asarray(x)[..., i]


def _quad_sum(integrand, w):
    y = integrand * w
    return y.total() if isinstance(y, Var) else float(np.sum(y))


# ---------------------------------------------------------------------------
# the objective

@dataclass
class Objective:
    """One of the four losses, mapping a flat parameter vector to a scalar.

    ``mode`` is 'fixed_grid' or 'monte_carlo'; Monte Carlo resamples ``batch``
    i.i.d. uniform points on every query from ``rng``.
    """

    kind: str
    spec: NetworkSpec
    grid: QuadratureGrid
    l1: float = 1.0
    l2: float = 0.25
    alpha: float = 1.0
    mode: str = "fixed_grid"
    batch: int = 100
    clamp: float = None
    rng: np.random.Generator = None
    source_override: object = None  # callable points -> source values (tests)
    _cached_source: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown objective kind {self.kind!r}")
        if self.mode not in ("fixed_grid", "monte_carlo"):
            raise ConfigurationError(f"unknown integration mode {self.mode!r}")
        if self.dim != self.grid.dim or self.dim != self.spec.input_dim:
            raise ConfigurationError("grid/network/problem dimensions disagree")
        self.layout = ParamLayout(self.spec)

    @property
    def dim(self):
        return 1 if self.kind.endswith("1d") else 2

    @property
    def n_params(self):
        return self.layout.size

    # -- sources ------------------------------------------------------------

    def _source_at(self, pts):
        if self.source_override is not None:
            return np.asarray(self.source_override(pts))
        if self.dim == 1:
            return source_1d(pts[:, 0])
        return body_force_2d(pts, self.l1, self.l2, self.alpha)

    def _fixed_source(self):
        if self._cached_source is None:
            self._cached_source = self._source_at(self.grid.points)
        return self._cached_source

    def _sample(self):
        if self.mode == "fixed_grid":
            return self.grid.points, self.grid.weights, self._fixed_source()
        if self.rng is None:
            raise ConfigurationError("monte_carlo mode needs an explicit rng")
        if self.dim == 1:
            pts = self.rng.uniform(0.0, 1.0, size=(self.batch, 1))
            w = np.full(self.batch, 1.0 / self.batch)
        else:
            r = np.sqrt(self.rng.uniform(0.0, 1.0, size=self.batch))
            th = self.rng.uniform(0.0, 2.0 * np.pi, size=self.batch)
            pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
            w = np.full(self.batch, np.pi / self.batch)
        return pts, w, self._source_at(pts)

    # -- integrand builders (generic: ndarray layers or tape Vars) ----------

    def _integrand(self, layers, pts, src):
        if self.kind.startswith("drm"):
            # energy forms consume first spatial derivatives only
            with first_order():
                u, _ = eval_field(self.spec, layers, pts)
        else:
            u, _ = eval_field(self.spec, layers, pts)
        if self.kind == "drm1d":
            ux = u.d1[0]
            g = _square(ux) * 0.5 - src[:, None] * u.val
            return _col(g, 0)
        if self.kind == "pinn1d":
            r = u.d2[0][0] + src[:, None]
            return _col(_square(r) * 0.5, 0)
        u_comps = [u.take_col(0), u.take_col(1)]
        if self.kind == "drm2d":
            F = [[_col(u.d1[j], i) + (1.0 if i == j else 0.0) for j in range(2)]
                 for i in range(2)]
            J = F[0][0] * F[1][1] - F[0][1] * F[1][0]
            logJ = _log(_clamp_min(J, self.clamp) if self.clamp is not None else J)
            ff = (_square(F[0][0]) + _square(F[0][1])
                  + _square(F[1][0]) + _square(F[1][1]))
            body = src[:, 0] * u_comps[0].val + src[:, 1] * u_comps[1].val
            return ((ff - 2.0 - 2.0 * logJ) * (0.5 * self.l1)
                    + _square(logJ) * (0.5 * self.l2) - body)
        # pinn2d
        P, _ = piola_dual(deformation_dual(u_comps), self.l1, self.l2,
                          clamp=self.clamp)
        r0 = P[0][0].d1[0] + P[0][1].d1[1] + src[:, 0]
        r1 = P[1][0].d1[0] + P[1][1].d1[1] + src[:, 1]
        return (_square(r0) + _square(r1)) * 0.5

    def loss_var(self, layers):
        """Build the loss on a tape whose leaves are ``layers``."""
        pts, w, src = self._sample()
        return _quad_sum(self._integrand(layers, pts, src), w)

    # -- plain evaluation ---------------------------------------------------

    def evaluate(self, params):
        """Scalar loss; returns NaN (never raises) on non-finite integrands."""
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ConfigurationError("parameter vector size mismatch")
        with np.errstate(all="ignore"):
            pts, w, src = self._sample()
            g = self._integrand(self.layout.unflatten(params), pts, src)
            loss = float(np.sum(np.asarray(g) * w))
        return loss

    def integrand_values(self, params):
        """Pointwise integrand on the fixed grid (for variance analysis)."""
        with np.errstate(all="ignore"):
            g = self._integrand(self.layout.unflatten(np.asarray(params, dtype=float)),
                                self.grid.points, self._fixed_source())
        return np.asarray(g)

    def locate_bad_point(self, params):
        """First quadrature point with a non-finite integrand, or None."""
        try:
            g = self.integrand_values(params)
        except Exception:
            return None
        bad = np.flatnonzero(~np.isfinite(g))
        if bad.size == 0:
            return None
        return self.grid.points[bad[0]]


def integrand_variance(objective, params):
    """Quadrature estimate of Var(g) = int g^2 - (int g)^2 for the pointwise
    integrand g of a fixed-grid objective."""
    if objective.mode != "fixed_grid":
        raise ConfigurationError("variance is defined for fixed-grid objectives")
    g = objective.integrand_values(params)
    w = objective.grid.weights
    mean = float(np.sum(w * g))
    return float(np.sum(w * g * g) - mean * mean)


# ---------------------------------------------------------------------------
# factories

def default_spec_1d(width=20, depth=2, activation="tanh"):
    return NetworkSpec(1, 1, (width,) * depth, activation, "sin_pi_x")


def default_spec_2d(width=25, depth=2, activation="tanh"):
    return NetworkSpec(2, 2, (width,) * depth, activation, "unit_disk")


def make_objective(problem, form, spec=None, grid=None, mode="fixed_grid",
                   batch=100, clamp=None, rng=None, l1=1.0, l2=0.25,
                   alpha=1.0, source_override=None):
    """Build one of the four objectives. ``problem`` is 'elliptic1d' or
    'neohookean2d'; ``form`` is 'drm' or 'pinn'."""
    if problem == "elliptic1d":
        spec = spec or default_spec_1d()
        grid = grid or uniform_grid_1d()
        kind = form + "1d"
    elif problem == "neohookean2d":
        spec = spec or default_spec_2d()
        grid = grid or polar_grid()
        kind = form + "2d"
    else:
        raise ConfigurationError(f"unknown problem {problem!r}")
    if form not in ("drm", "pinn"):
        raise ConfigurationError(f"unknown form {form!r}")
    return Objective(kind=kind, spec=spec, grid=grid, mode=mode, batch=batch,
                     clamp=clamp, rng=rng, l1=l1, l2=l2, alpha=alpha,
                     source_override=source_override)
