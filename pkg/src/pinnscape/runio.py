"""On-disk run-directory format.

Every experiment writes into one directory:

* ``manifest.json`` — schema version, experiment name, full config, seed,
  config hash, derived scalar results, and the list of data files.  Contains
  nothing time-dependent, so identical config + seed reproduces it
  byte-for-byte.
* ``run_meta.json`` — wall-clock metadata (timestamps, durations); the only
  file allowed to differ between identical reruns.
* ``<name>.bin`` — row-major little-endian float64 arrays, each with a
  ``<name>.shape.json`` sidecar describing dtype and shape.
* ``<name>.csv`` — small column-oriented series.
"""

import csv
import hashlib
import json
import os
import time

import numpy as np

from .errors import ConfigurationError

SCHEMA_VERSION = 1


def labeled_rng(seed, label):
    """Independent deterministic generator for one named randomness consumer.

    Streams with different labels are statistically independent, so adding a
    consumer never perturbs another consumer's draws.
    """
    digest = hashlib.sha256(label.encode()).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config):
    return hashlib.sha256(_canonical_json(config).encode()).hexdigest()


class RunWriter(object):
    """Accumulates data files for one run directory, then seals the manifest."""

    def __init__(self, out_dir, experiment, config, seed):
        self.out_dir = out_dir
        self.experiment = experiment
        self.config = config
        self.seed = seed
        self.files = []
        self._t0 = time.time()
        os.makedirs(out_dir, exist_ok=True)

    def _register(self, name):
        if name not in self.files:
            self.files.append(name)

    def array(self, name, arr):
        """Write a float64 array as <name>.bin plus a shape sidecar."""
        arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        path = os.path.join(self.out_dir, name + ".bin")
        arr.tofile(path)
        sidecar = {"dtype": "float64", "order": "C",
                   "shape": list(arr.shape), "byte_order": "little"}
        with open(path.replace(".bin", ".shape.json"), "w") as fh:
            fh.write(_canonical_json(sidecar) + "\n")
        self._register(name + ".bin")
        self._register(name + ".shape.json")

    def table(self, name, columns):
        """Write named 1D columns (dict, insertion-ordered) as <name>.csv."""
        cols = {k: np.asarray(v).ravel() for k, v in columns.items()}
        lengths = {c.size for c in cols.values()}
        if len(lengths) != 1:
            raise ConfigurationError("csv columns must have equal length")
        path = os.path.join(self.out_dir, name + ".csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(cols.keys())
            for row in zip(*cols.values()):
                writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating))
                                 else x for x in row])
        self._register(name + ".csv")

    def finish(self, derived=None):
        """Write manifest.json (deterministic) and run_meta.json (timing)."""
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "config": self.config,
            "seed": self.seed,
            "config_hash": config_hash(self.config),
            "derived": derived or {},
            "files": sorted(self.files),
        }
        with open(os.path.join(self.out_dir, "manifest.json"), "w") as fh:
            fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
        meta = {"wall_time_s": time.time() - self._t0,
                "finished_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
        with open(os.path.join(self.out_dir, "run_meta.json"), "w") as fh:
            fh.write(json.dumps(meta, indent=2) + "\n")
        return manifest


def read_manifest(run_dir):
    path = os.path.join(run_dir, "manifest.json")
    if not os.path.exists(path):
        raise ConfigurationError(f"no manifest.json in {run_dir}")
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ConfigurationError(
            f"unsupported schema version {manifest.get('schema_version')!r}")
    return manifest


def read_array(run_dir, name):
    sidecar = os.path.join(run_dir, name + ".shape.json")
    with open(sidecar) as fh:
        desc = json.load(fh)
    data = np.fromfile(os.path.join(run_dir, name + ".bin"), dtype="<f8")
    return data.reshape(desc["shape"])


def read_table(run_dir, name):
    """Read a CSV written by :meth:`RunWriter.table` back into a dict of
    float arrays (non-numeric columns come back as string arrays)."""
    with open(os.path.join(run_dir, name + ".csv"), newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for i, key in enumerate(header):
        col = [r[i] for r in body]
        try:
            out[key] = np.array([float(x) for x in col])
        except ValueError:
            out[key] = np.array(col)
    return out
