"""Tanh MLPs with the boundary distance function applied at the final hidden
layer.

The final hidden neurons, multiplied by the distance function, act as learned
basis functions that each vanish on the Dirichlet boundary; the bias-free
output layer holds the coefficients on that basis.  Parameters flatten to a
single vector ordered [outer | inner] so landscape probes can address the
coefficient block directly.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff.forward import Dual2
from .errors import ConfigurationError

ACTIVATIONS = ("tanh", "x_plus_tanh")
DISTANCES = ("sin_pi_x", "unit_disk")


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int = 1
    output_dim: int = 1
    hidden_widths: tuple = (20, 20)
    activation: str = "tanh"
    distance: str = "sin_pi_x"

    def __post_init__(self):
        if self.input_dim not in (1, 2) or self.output_dim not in (1, 2):
            raise ConfigurationError("input/output dims must be 1 or 2")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.distance not in DISTANCES:
            raise ConfigurationError(f"unknown distance {self.distance!r}")
        if len(self.hidden_widths) < 1:
            raise ConfigurationError("need at least one hidden layer")

    @property
    def basis_size(self):
        return self.hidden_widths[-1]

    def param_count(self):
        n = 0
        fan_in = self.input_dim
        for w in self.hidden_widths:
            n += fan_in * w + w
            fan_in = w
        n += fan_in * self.output_dim  # bias-free output layer
        return n

    def to_dict(self):
        return {"input_dim": self.input_dim, "output_dim": self.output_dim,
                "hidden_widths": list(self.hidden_widths),
                "activation": self.activation, "distance": self.distance}

    @classmethod
    def from_dict(cls, d):
        return cls(input_dim=d["input_dim"], output_dim=d["output_dim"],
                   hidden_widths=tuple(d["hidden_widths"]),
                   activation=d["activation"], distance=d["distance"])


class ParamLayout(object):
    """Slices of the flat parameter vector: outer coefficients first, then the
    hidden-layer weights and biases in network order."""

    def __init__(self, spec):
        self.spec = spec
        n_out = spec.basis_size * spec.output_dim
        self.outer = slice(0, n_out)
        self.hidden = []  # (W_slice, W_shape, b_slice, b_len)
        pos = n_out
        fan_in = spec.input_dim
        for w in spec.hidden_widths:
            ws = slice(pos, pos + fan_in * w)
            pos += fan_in * w
            bs = slice(pos, pos + w)
            pos += w
            self.hidden.append((ws, (fan_in, w), bs, w))
            fan_in = w
        self.size = pos
        self.inner = slice(n_out, pos)
        self.out_shape = (spec.basis_size, spec.output_dim)

    def unflatten(self, theta):
        """Flat vector -> [W1, b1, ..., Wk, bk, Wout] arrays (views copied)."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.size,):
            raise ConfigurationError(
                f"parameter vector has size {theta.shape}, expected ({self.size},)")
        arrs = []
        for ws, wshape, bs, _ in self.hidden:
            arrs.append(theta[ws].reshape(wshape))
            arrs.append(theta[bs])
        arrs.append(theta[self.outer].reshape(self.out_shape))
        return arrs

    def flatten(self, arrs):
        theta = np.empty(self.size)
        for (ws, _, bs, _), w, b in zip(self.hidden, arrs[0:-1:2], arrs[1:-1:2]):
            theta[ws] = np.ravel(w)
            theta[bs] = np.ravel(b)
        theta[self.outer] = np.ravel(arrs[-1])
        return theta

    def chunk_direction(self, vmat):
        """Split direction rows (k, size) into per-array tangents matching
        :meth:`unflatten`."""
        vmat = np.atleast_2d(vmat)
        k = vmat.shape[0]
        out = []
        for ws, wshape, bs, blen in self.hidden:
            out.append(vmat[:, ws].reshape((k,) + wshape))
            out.append(vmat[:, bs].reshape((k, blen)))
        out.append(vmat[:, self.outer].reshape((k,) + self.out_shape))
        return out


def init_params(spec, seed, scale=1.0):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, scaled."""
    if scale < 0:
        raise ConfigurationError("scale must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layout = ParamLayout(spec)
    arrs = []
    fan_in = spec.input_dim
    for w in spec.hidden_widths:
        bound = 1.0 / np.sqrt(fan_in)
        arrs.append(scale * rng.uniform(-bound, bound, size=(fan_in, w)))
        arrs.append(scale * rng.uniform(-bound, bound, size=w))
        fan_in = w
    bound = 1.0 / np.sqrt(fan_in)
    arrs.append(scale * rng.uniform(-bound, bound, size=layout.out_shape))
    return layout.flatten(arrs)


def _activate(h, kind):
    if kind == "tanh":
        return h.tanh()
    return h + h.tanh()  # x + tanh x: non-saturating


def _distance(spec, coords):
    if spec.distance == "sin_pi_x":
        return (coords[0] * np.pi).sin()
    one = Dual2.constant(1.0, len(coords))
    return one - coords[0].square() - coords[1].square()


def eval_field(spec, layers, points):
    """Evaluate the field with full spatial-derivative tracking.

    ``layers`` are the arrays (or tape Vars) from ``ParamLayout.unflatten``;
    ``points`` is (P, input_dim).  Returns (output Dual2 with (P, output_dim)
    components, basis Dual2 with (P, N) components).
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != spec.input_dim:
        raise ConfigurationError("points must have shape (P, input_dim)")
    n = spec.input_dim
    npts = points.shape[0]
    coords = Dual2.seed([points[:, k:k + 1] for k in range(n)])
    d1 = [np.tile(np.eye(n)[k], (npts, 1)) for k in range(n)]
    h = Dual2(points, d1, [[0] * n for _ in range(n)])
    for i in range(len(spec.hidden_widths)):
        w, b = layers[2 * i], layers[2 * i + 1]
        h = _activate(h.matmul(w) + b, spec.activation)
    basis = _distance(spec, coords) * h
    out = basis.matmul(layers[-1])
    return out, basis


def forward(spec, params, points):
    """Plain field values at ``points``; (P, output_dim) array."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    layers = ParamLayout(spec).unflatten(params)
    out, _ = eval_field(spec, layers, points)
    return np.asarray(out.val)


def extract_basis(spec, params, points):
    """Matrix H of basis values: rows = points, columns = basis functions."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise ConfigurationError("grid must be nonempty")
    layers = ParamLayout(spec).unflatten(params)
    _, basis = eval_field(spec, layers, points)
    return np.asarray(basis.val)


def outer_coefficients(spec, params):
    """The final-layer coefficient block, shaped (N, output_dim)."""
    layout = ParamLayout(spec)
    return np.asarray(params)[layout.outer].reshape(layout.out_shape)


def save_params(path_prefix, spec, params):
    """Bit-exact checkpoint: flat doubles plus a JSON layout sidecar."""
    params = np.asarray(params, dtype="<f8")
    with open(str(path_prefix) + ".bin", "wb") as f:
        f.write(params.tobytes())
    layout = ParamLayout(spec)
    desc = {"format": "float64-le", "size": layout.size,
            "outer": [layout.outer.start, layout.outer.stop],
            "spec": spec.to_dict()}
    with open(str(path_prefix) + ".json", "w") as f:
        json.dump(desc, f, indent=1, sort_keys=True)
        f.write("\n")


def load_params(path_prefix):
    with open(str(path_prefix) + ".json") as f:
        desc = json.load(f)
    spec = NetworkSpec.from_dict(desc["spec"])
    raw = np.fromfile(str(path_prefix) + ".bin", dtype="<f8")
    if raw.size != desc["size"]:
        raise ConfigurationError("checkpoint size does not match layout")
    return spec, raw.astype(float)
