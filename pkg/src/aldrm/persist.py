"""On-disk layout of fit directories and run manifests.

A fit directory holds::

    chain_1.csv ...       retained draws, one column per named parameter
    effects.csv           posterior-mean random effects per subject
    summary.json/.csv     posterior summary with R-hat
    model.spec            the fitted model in spec-file syntax
    manifest.json         command, config, seed, versions, digests, timings
"""

import csv
import hashlib
import io
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import _kernels as K
from . import __version__
from .data import fmt
from .diagnostics import PosteriorSummary
from .errors import DataError
from .modelspec import RandomEffects, load_spec, part_symbols, unflatten
from .selection import FittedModel

MANIFEST = "manifest.json"


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions():
    return {
        "aldrm": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "kernels": K.BACKEND,
    }


def write_manifest(out_dir, command, config, seed=None, inputs=None, timings=None, extra=None):
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "versions": versions(),
        "inputs": inputs or {},
        "timings": timings or {},
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        manifest.update(extra)
    (Path(out_dir) / MANIFEST).write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return manifest


def read_manifest(path):
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST
    try:
        return json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {p}: {exc}") from exc


def chain_csv(names, draws):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in draws:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def read_chain_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0]
    return names, np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(names))


def _effect_columns(spec):
    cols = []
    for part, pred in spec.parts().items():
        sym = part_symbols(part)[2]
        cols.extend((sym, k, f"{sym}[{k + 1}]") for k in range(len(pred.random_terms)))
    return cols


def effects_csv(spec, subject_ids, effects):
    cols = _effect_columns(spec)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id"] + [c[2] for c in cols])
    for i, sid in enumerate(subject_ids):
        w.writerow([sid] + [fmt(getattr(effects, sym)[i, k]) for sym, k, _ in cols])
    return buf.getvalue()


def read_effects_csv(path, spec):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    ids = tuple(r[0] for r in body)
    vals = np.array([r[1:] for r in body], dtype=float).reshape(len(body), len(header) - 1)
    kw = {}
    for part, pred in spec.parts().items():
        sym = part_symbols(part)[2]
        idx = [header.index(f"{sym}[{k + 1}]") - 1 for k in range(len(pred.random_terms))]
        kw[sym] = vals[:, idx]
    kw.setdefault("u", None)
    kw.setdefault("a", None)
    return ids, RandomEffects(**kw)


def write_fit(out_dir, sample, summary, spec_text):
    out = Path(out_dir)
    for old in out.glob("chain_*.csv"):
        old.unlink()
    for c in range(sample.n_chains):
        (out / f"chain_{c + 1}.csv").write_text(chain_csv(sample.names, sample.draws[c]))
    (out / "effects.csv").write_text(effects_csv(sample.spec, sample.subject_ids, sample.effects_mean))
    summary.to_json(out / "summary.json")
    summary.to_csv(out / "summary.csv")
    (out / "model.spec").write_text(spec_text)


def load_fit(fit_dir, name=None):
    """``(FittedModel, manifest)`` from a fit directory."""
    d = Path(fit_dir)
    if not (d / "summary.json").exists():
        raise DataError(f"{d} is not a fit directory (no summary.json)")
    spec = load_spec(d / "model.spec")
    summary = PosteriorSummary.from_dict(json.loads((d / "summary.json").read_text()))
    theta = unflatten(summary.mean, spec)
    ids, effects = read_effects_csv(d / "effects.csv", spec)
    return FittedModel(spec, theta, effects, ids, name or d.name), read_manifest(d)
