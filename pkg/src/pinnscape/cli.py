"""Command-line entry point: one subcommand per experiment.

Every subcommand reads an optional JSON config, runs deterministically from a
seed, and writes a self-describing run directory (see :mod:`.runio`).

Exit codes: 0 success, 2 configuration error, 3 non-finite objective abort,
4 probe failure (a probe could not produce its contracted result).
"""

import argparse
import copy
import json
import os
import sys

import numpy as np

from . import landscape, problems
from .errors import (ConfigurationError, NonFiniteObjectiveError, ProbeFailure,
                     TrainingAborted)
from .network import extract_basis, forward, init_params, save_params
from .optimize import OptimizerConfig, SubspaceMap, train, train_on_sphere, \
    train_subspace
from .problems import integrand_variance, make_objective, manufactured_1d, \
    manufactured_2d
from .runio import RunWriter, labeled_rng

_EXIT_CONFIG, _EXIT_NONFINITE, _EXIT_PROBE = 2, 3, 4


def _base_defaults(problem):
    one_d = problem == "elliptic1d"
    return {
        "problem": problem,
        "form": "drm",
        "width": 20 if one_d else 25,
        "depth": 2,
        "init_scale": 1.0,
        "clamp": None,
        "optimizer": {"kind": "adam", "lr": 1e-3,
                      "epochs": 7500 if one_d else 2500},
        "record_every": 1,
    }


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _load_config(path, extra_defaults=None):
    user = {}
    if path is not None:
        with open(path) as fh:
            user = json.load(fh)
    problem = user.get("problem", "elliptic1d")
    if problem not in ("elliptic1d", "neohookean2d"):
        raise ConfigurationError(f"unknown problem {problem!r}")
    base = _base_defaults(problem)
    if extra_defaults:
        base = _merge(base, extra_defaults)
    return _merge(base, user)


def _spec(cfg):
    if cfg["problem"] == "elliptic1d":
        return problems.default_spec_1d(width=cfg["width"], depth=cfg["depth"])
    return problems.default_spec_2d(width=cfg["width"], depth=cfg["depth"])


def _objective(cfg, mode="fixed_grid", rng=None, clamp="config"):
    return make_objective(cfg["problem"], cfg["form"], spec=_spec(cfg),
                          mode=mode, batch=cfg.get("batch", 100), rng=rng,
                          clamp=cfg["clamp"] if clamp == "config" else clamp)


def _opt_config(cfg, **overrides):
    o = dict(cfg["optimizer"])
    o.update(overrides)
    return OptimizerConfig(kind=o["kind"], lr=o["lr"], epochs=o["epochs"],
                           record_every=cfg.get("record_every", 1))


def _init(objective, seed, cfg, label="init"):
    return init_params(objective.spec, seed=labeled_rng(seed, label),
                       scale=cfg["init_scale"])


def _train_one(objective, seed, cfg, label="init", **opt_overrides):
    theta0 = _init(objective, seed, cfg, label=label)
    return train(objective, theta0, _opt_config(cfg, **opt_overrides))


def _write_trajectory(writer, rec, prefix=""):
    writer.array(prefix + "trajectory", rec.params)
    writer.table(prefix + "losses",
                 {"epoch": np.arange(rec.losses.size), "loss": rec.losses})
    if rec.radii is not None:
        writer.table(prefix + "radii",
                     {"epoch": np.arange(rec.radii.size), "radius": rec.radii})
    writer.array(prefix + "final_params", rec.final_params)


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(cfg, seed, writer):
    objective = _objective(cfg)
    rec = _train_one(objective, seed, cfg)
    _write_trajectory(writer, rec)
    save_params(os.path.join(writer.out_dir, "params"), objective.spec,
                rec.final_params)
    writer.files += ["params.bin", "params.json"]
    return {"final_loss": rec.final_loss,
            "initial_loss": float(rec.losses[0]),
            "param_count": objective.n_params}


def cmd_verify(cfg, seed, writer):
    objective = _objective(cfg)
    rec = _train_one(objective, seed, cfg)
    if cfg["problem"] == "elliptic1d":
        pts = np.linspace(0.0, 1.0, cfg.get("test_points", 201))[:, None]
        exact = manufactured_1d(pts[:, 0])[:, None]
    else:
        rng = labeled_rng(seed, "verify-cloud")
        n = cfg.get("test_points", 500)
        r = np.sqrt(rng.uniform(0.0, 1.0, size=n))
        th = rng.uniform(0.0, 2.0 * np.pi, size=n)
        pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        exact = manufactured_2d(pts)
    pred = forward(objective.spec, rec.final_params, pts)
    err = np.abs(pred - exact)
    writer.array("test_points", pts)
    writer.array("pointwise_error", err)
    writer.table("losses", {"epoch": np.arange(rec.losses.size),
                            "loss": rec.losses})
    return {"max_pointwise_error": float(err.max()),
            "final_loss": rec.final_loss}


def cmd_mli(cfg, seed, writer):
    objective = _objective(cfg)
    trials = cfg.get("trials", 10)
    scales = cfg.get("scales", [1.0, 2.0, 5.0])
    samples = cfg.get("samples", 101)
    all_losses, rows = [], {"trial": [], "scale": [], "monotone": [],
                            "final_loss": []}
    run = 0
    for scale in scales:
        for trial in range(trials):
            rng = labeled_rng(seed, f"mli-init-{run}")
            theta0 = init_params(objective.spec, seed=rng, scale=scale)
            rec = train(objective, theta0, _opt_config(cfg))
            res = landscape.mli_scan(objective, theta0, rec.final_params,
                                     samples=samples,
                                     rel_tol=cfg.get("rel_tol", 1e-6))
            all_losses.append(res.losses)
            rows["trial"].append(trial)
            rows["scale"].append(scale)
            rows["monotone"].append(int(res.monotone))
            rows["final_loss"].append(rec.final_loss)
            run += 1
    writer.array("mli_losses", np.array(all_losses))
    writer.array("mli_t", np.linspace(0.0, 1.0, samples))
    writer.table("verdicts", rows)
    n_mono = int(sum(rows["monotone"]))
    return {"runs": run, "monotone_runs": n_mono,
            "all_monotone": n_mono == run}


def cmd_hessian_walk(cfg, seed, writer):
    objective = _objective(cfg)
    rec = _train_one(objective, seed, cfg)
    res = landscape.hessian_walk(objective, rec.final_params,
                                 steps=cfg.get("steps", 500),
                                 eta=cfg.get("eta", 1.0),
                                 chunk=cfg.get("chunk", 32))
    if res.steps_done == 0:
        raise ProbeFailure("hessian walk could not complete any step")
    writer.table("walk", {"step": np.arange(1, res.steps_done + 1),
                          "distance": res.distances,
                          "loss_change": res.loss_changes,
                          "eigenvalue": res.min_eigenvalues})
    writer.array("final_params", res.final_params)
    norm_f = float(np.linalg.norm(rec.final_params))
    return {"steps_done": res.steps_done,
            "max_abs_loss_change": float(np.max(np.abs(res.loss_changes))),
            "final_distance": float(res.distances[-1]),
            "solution_norm": norm_f,
            "distance_over_norm": float(res.distances[-1]) / norm_f}


def cmd_mode_connect(cfg, seed, writer):
    objective = _objective(cfg)
    rec1 = _train_one(objective, seed, cfg, label="init-a")
    rec2 = _train_one(objective, seed, cfg, label="init-b")
    lin_obj = objective
    if cfg["problem"] == "neohookean2d":
        lin_obj = _objective(cfg, clamp=cfg.get("linear_clamp", 1e-6))
    res = landscape.mode_connect(
        objective, rec1.final_params, rec2.final_params,
        t_samples=cfg.get("t_samples", 25),
        opt_config=OptimizerConfig(kind="adam",
                                   lr=cfg.get("path_lr", 1e-3),
                                   epochs=cfg.get("path_epochs", 5000)),
        linear_objective=lin_obj)
    writer.table("paths", {"t": res.t, "linear_loss": res.linear_losses,
                           "bezier_loss": res.bezier_losses})
    writer.array("control_point", res.path.p)
    writer.table("path_objective",
                 {"epoch": np.arange(res.objective_history.size),
                  "value": res.objective_history})
    return {"linear_barrier": res.linear_barrier,
            "bezier_max_deviation": res.bezier_deviation,
            "endpoint_losses": [float(res.bezier_losses[0]),
                                float(res.bezier_losses[-1])],
            "converged": bool(res.converged)}


def cmd_plane_scan(cfg, seed, writer):
    objective = _objective(cfg)
    rec = _train_one(objective, seed, cfg)
    n_dirs = cfg.get("directions", 3)
    dirs = landscape.random_directions(objective.n_params, n_dirs,
                                       labeled_rng(seed, "plane-directions"))
    pairs = [(i, j) for i in range(n_dirs) for j in range(i + 1, n_dirs)]
    for idx, (i, j) in enumerate(pairs):
        grid = landscape.plane_scan(objective, rec.final_params,
                                    dirs[i], dirs[j],
                                    extent=cfg.get("extent", 1.0),
                                    resolution=cfg.get("resolution", 51))
        writer.array(f"plane_{idx}_loss", grid.loss)
        writer.array(f"plane_{idx}_mask", grid.finite.astype(float))
        writer.array(f"plane_{idx}_eps_k", grid.eps_k)
        writer.array(f"plane_{idx}_eps_j", grid.eps_j)
    writer.array("directions", dirs)
    return {"planes": len(pairs), "center_loss": rec.final_loss,
            "form": cfg["form"]}


def cmd_stochastic_scan(cfg, seed, writer):
    objective = _objective(cfg)
    rec = _train_one(objective, seed, cfg)
    mc = _objective(cfg, mode="monte_carlo",
                    rng=labeled_rng(seed, "stochastic-batch"))
    theta0, theta_f = rec.params[0], rec.final_params
    t = np.linspace(0.0, 1.0, cfg.get("samples", 101))
    fixed = np.array([objective.evaluate(theta0 + ti * (theta_f - theta0))
                      for ti in t])
    noisy = np.array([mc.evaluate(theta0 + ti * (theta_f - theta0))
                      for ti in t])
    writer.table("line_scan", {"t": t, "fixed_grid_loss": fixed,
                               "monte_carlo_loss": noisy})
    var = integrand_variance(objective, theta_f)
    return {"integrand_variance": var, "final_loss": rec.final_loss,
            "form": cfg["form"]}


def cmd_spectrum(cfg, seed, writer):
    objective = _objective(cfg)
    sample_every = cfg.get("sample_every", 50)
    cfg = dict(cfg, record_every=sample_every)
    rec = _train_one(objective, seed, cfg)
    feasible = not (objective.kind == "pinn2d" and cfg["width"] > 15)
    if not feasible:
        # dense Hessians intractable here: report endpoints only
        sample_every = max(1, int(rec.epochs_recorded[-1]))
    res = landscape.spectrum_evolution(objective, rec,
                                       sample_every=sample_every,
                                       chunk=cfg.get("chunk", 32))
    writer.array("eigenvalues", res.eigenvalues)
    writer.table("spectrum_summary", {"epoch": res.epochs,
                                      "lam_max": res.lam_max,
                                      "lam_min": res.lam_min})
    counts, edges = res.histogram(bins=cfg.get("bins", 60))
    writer.array("histogram_counts", counts)
    writer.array("histogram_edges", edges)
    conc = landscape.spectrum_concentration(
        res.eigenvalues[-1], rel_threshold=cfg.get("rel_threshold", 1e-6))
    return {"samples": int(res.epochs.size),
            "concentration_final": conc,
            "lam_min_initial": float(res.lam_min[0]),
            "lam_min_final": float(res.lam_min[-1]),
            "endpoints_only": not feasible}


def cmd_gram(cfg, seed, writer):
    objective = _objective(cfg)
    rec = _train_one(objective, seed, cfg)
    rel_threshold = cfg.get("rel_threshold",
                            1e-12 if cfg["problem"] == "elliptic1d" else 1e-6)
    H = extract_basis(objective.spec, rec.final_params, objective.grid.points)
    G, rank = landscape.gram_rank(H, objective.grid.weights, rel_threshold)
    writer.array("gram", G)
    writer.array("gram_eigenvalues", np.linalg.eigvalsh(G))
    writer.array("basis_values", H)
    derived = {"rank": rank, "basis_size": H.shape[1],
               "rel_threshold": rel_threshold, "has_null_direction": False}
    try:
        v, delta, _, rel_change = landscape.null_direction(
            objective, rec.final_params, rel_threshold)
    except landscape.NoNullDirectionError:
        return derived
    writer.array("null_direction", v)
    writer.array("null_delta", delta)
    ts = np.linspace(-10.0, 10.0, cfg.get("trench_samples", 41))
    losses = np.array([objective.evaluate(rec.final_params + t * v)
                       for t in ts])
    writer.table("trench", {"t": ts, "loss": losses})
    scale = max(np.max(np.abs(losses)), 1e-300)
    rand = landscape.random_directions(objective.n_params, 1,
                                      labeled_rng(seed, "trench-plane"))[0]
    grid = landscape.plane_scan(objective, rec.final_params, v, rand,
                                extent=cfg.get("extent", 10.0),
                                resolution=cfg.get("resolution", 51))
    writer.array("trench_plane_loss", grid.loss)
    writer.array("trench_plane_mask", grid.finite.astype(float))
    writer.array("trench_plane_eps_k", grid.eps_k)
    writer.array("trench_plane_eps_j", grid.eps_j)
    derived.update({"has_null_direction": True,
                    "field_change_rel": float(rel_change),
                    "trench_relative_variation":
                        float((losses.max() - losses.min()) / scale)})
    return derived


def cmd_goldilocks(cfg, seed, writer):
    objective = _objective(cfg)
    radii = cfg.get("radii", [0.5, 1, 2, 5, 10, 15, 20, 30, 50, 100])
    finals, rows = [], {"radius": [], "final_loss": []}
    curves = []
    for i, radius in enumerate(radii):
        theta0 = init_params(objective.spec,
                             seed=labeled_rng(seed, f"sphere-init-{i}"),
                             scale=cfg["init_scale"])
        rec = train_on_sphere(objective, theta0, _opt_config(cfg),
                              float(radius))
        finals.append(rec.final_loss)
        curves.append(rec.losses)
        rows["radius"].append(float(radius))
        rows["final_loss"].append(rec.final_loss)
    writer.table("radius_sweep", rows)
    writer.array("loss_curves", np.array(curves))
    best = int(np.nanargmin(finals))
    return {"radii": [float(r) for r in radii],
            "final_losses": [float(f) for f in finals],
            "best_radius": float(radii[best])}


def cmd_radius_track(cfg, seed, writer):
    cfg = dict(cfg, init_scale=cfg.get("init_scale_factor", 0.01))
    objective = _objective(cfg)
    rec = _train_one(objective, seed, cfg)
    _write_trajectory(writer, rec)
    r0, rmax = float(rec.radii[0]), float(np.max(rec.radii))
    return {"initial_radius": r0, "max_radius": rmax,
            "final_radius": float(rec.radii[-1]),
            "growth_factor": rmax / r0, "final_loss": rec.final_loss}


def cmd_intrinsic_dim(cfg, seed, writer):
    objective = _objective(cfg)
    dims = cfg.get("dims", [10] if cfg["problem"] == "elliptic1d" else [50])
    full = _train_one(objective, seed, cfg)
    theta0 = _init(objective, seed, cfg)
    rows = {"dim": [], "final_loss": []}
    curves = [full.losses]
    for i, d in enumerate(dims):
        sub = SubspaceMap(theta0, int(d),
                          labeled_rng(seed, f"subspace-{i}"))
        rec = train_subspace(objective, sub, _opt_config(cfg))
        rows["dim"].append(int(d))
        rows["final_loss"].append(rec.final_loss)
        curves.append(rec.losses)
    writer.table("subspace_finals", rows)
    writer.array("loss_curves", np.array(curves))
    zero_loss = objective.evaluate(np.zeros(objective.n_params))
    return {"full_final_loss": full.final_loss,
            "zero_field_loss": float(zero_loss),
            "dims": rows["dim"],
            "subspace_final_losses": [float(x) for x in rows["final_loss"]]}


def cmd_pca_traj(cfg, seed, writer):
    objective = _objective(cfg)
    rec = _train_one(objective, seed, cfg)
    q = cfg.get("components", 5)
    basis, coords = landscape.pca_trajectory(rec.params, q)
    writer.array("pca_mean", basis.mean)
    writer.array("pca_components", basis.components)
    writer.array("pca_coords", coords)
    writer.table("pca_fractions", {"component": np.arange(q),
                                   "fraction": basis.fractions})
    grid = landscape.pca_plane_scan(objective, basis, coords,
                                    resolution=cfg.get("resolution", 51))
    writer.array("plane_loss", grid.loss)
    writer.array("plane_mask", grid.finite.astype(float))
    writer.array("plane_eps_k", grid.eps_k)
    writer.array("plane_eps_j", grid.eps_j)
    return {"fractions": [float(f) for f in basis.fractions],
            "first_two_fraction": float(basis.fractions[:2].sum()),
            "form": cfg["form"]}


def cmd_acceleration(cfg, seed, writer):
    objective = _objective(cfg)
    cfg = dict(cfg, record_every=1)
    rec = _train_one(objective, seed, cfg)
    eta = cfg["optimizer"]["lr"]
    raw, _ = landscape.acceleration_series(rec.params, eta)
    normed, mask = landscape.acceleration_series(rec.params, eta,
                                                 normalize=True)
    writer.table("acceleration", {"epoch": np.arange(1, raw.size + 1),
                                  "raw": raw, "normalized": normed,
                                  "valid": mask.astype(int)})
    tenth = max(1, raw.size // 10)
    return {"early_median": float(np.median(raw[:tenth])),
            "late_median": float(np.median(raw[-tenth:])),
            "final_loss": rec.final_loss}


def cmd_probe_minima(cfg, seed, writer):
    base_cfg = cfg

    def factory(width):
        return _objective(dict(base_cfg, width=width))

    res = landscape.probe_minima(
        factory,
        widths=cfg.get("widths", [20, 5]),
        optimizers=cfg.get("optimizers", ["adam", "gd"]),
        trials=cfg.get("trials", 10),
        epochs=cfg["optimizer"]["epochs"],
        lr=cfg["optimizer"]["lr"],
        seed0=seed,
        init_scale=cfg["init_scale"],
        stuck_factor=cfg.get("stuck_factor", 10.0),
        band_floor_rel=cfg.get("band_floor_rel", 0.0))
    rows = {"width": [], "optimizer": [], "trial": [], "seed": [],
            "final_loss": [], "failed": [], "stuck": []}
    curves = []
    for o in res.outcomes:
        rows["width"].append(o.width)
        rows["optimizer"].append(o.optimizer)
        rows["trial"].append(o.trial)
        rows["seed"].append(o.seed)
        rows["final_loss"].append(o.final_loss)
        rows["failed"].append(int(o.failed))
        rows["stuck"].append(int(o.stuck))
        curves.append(o.losses)
    writer.table("outcomes", rows)
    lengths = {c.size for c in curves}
    if len(lengths) == 1:
        writer.array("loss_curves", np.array(curves))
    return {"runs": len(res.outcomes),
            "best_final_loss": float(res.best_final),
            "fluctuation_band": float(res.band),
            "stuck_runs": len(res.stuck_runs()),
            "failed_runs": len(res.failed_runs())}


_COMMANDS = {
    "train": cmd_train,
    "verify": cmd_verify,
    "mli": cmd_mli,
    "hessian-walk": cmd_hessian_walk,
    "mode-connect": cmd_mode_connect,
    "plane-scan": cmd_plane_scan,
    "stochastic-scan": cmd_stochastic_scan,
    "spectrum": cmd_spectrum,
    "gram": cmd_gram,
    "goldilocks": cmd_goldilocks,
    "radius-track": cmd_radius_track,
    "intrinsic-dim": cmd_intrinsic_dim,
    "pca-traj": cmd_pca_traj,
    "acceleration": cmd_acceleration,
    "probe-minima": cmd_probe_minima,
}


def _apply_thread_limit(n):
    """Best-effort cap on BLAS threading (the heavy kernels are BLAS calls)."""
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(n)
    except ImportError:
        pass


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pinnscape",
        description="Train Deep Ritz / PINN networks and run landscape probes.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", required=True, help="run output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="cap BLAS thread count (best effort)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        _apply_thread_limit(args.threads)
    try:
        cfg = _load_config(args.config)
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        cfg["seed"] = int(seed)
        writer = RunWriter(args.out, args.command, cfg, int(seed))
        derived = _COMMANDS[args.command](cfg, int(seed), writer)
        writer.finish(derived)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except (NonFiniteObjectiveError, TrainingAborted) as exc:
        print(f"non-finite objective: {exc}", file=sys.stderr)
        return _EXIT_NONFINITE
    except ProbeFailure as exc:
        print(f"probe failure: {exc}", file=sys.stderr)
        return _EXIT_PROBE
    for key, value in sorted(derived.items()):
        print(f"{key}: {value}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
