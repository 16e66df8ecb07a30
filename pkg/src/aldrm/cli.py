"""Command-line interface: ``aldrm {simulate,fit,select,summarize,study}``.

Exit codes: 0 success, 2 usage error (including refusing to overwrite an
existing run without ``--force``), 3 data or spec error, 4 convergence or
sampler failure. Relative ``--out`` paths resolve under ``$ALDRM_OUTPUT_ROOT``
when it is set.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagnostics, persist, selection, simgen
from .data import read_csv
from .errors import DataError, SamplerError, SpecError
from .modelspec import format_spec, load_spec, simulation_spec
from .sampler import SamplerConfig, run

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 2, 3, 4
OUTPUT_ROOT_ENV = "ALDRM_OUTPUT_ROOT"


class UsageError(Exception):
    pass


def _out_dir(path, default, force):
    root = os.environ.get(OUTPUT_ROOT_ENV)
    p = Path(path or default)
    if root and not p.is_absolute():
        p = Path(root) / p
    if (p / persist.MANIFEST).exists():
        if not force:
            raise UsageError(f"{p} already holds a run; pass --force to overwrite")
    p.mkdir(parents=True, exist_ok=True)
    return p


def _log(msg):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _scenario(args):
    if args.scenario in simgen.BUILTIN_SCENARIOS:
        sc = simgen.builtin_scenario(args.scenario)
    elif Path(args.scenario).exists():
        sc = simgen.load_scenario(args.scenario)
    else:
        raise SpecError(
            f"'{args.scenario}' is neither a scenario file nor a built-in ({', '.join(simgen.BUILTIN_SCENARIOS)})"
        )
    overrides = {k: getattr(args, k) for k in ("n", "m", "t_max", "seed") if getattr(args, k, None) is not None}
    if getattr(args, "family", None):
        overrides["family"] = args.family
    if getattr(args, "tau_fixed", None) is not None:
        overrides["tau_fixed"] = args.tau_fixed
    return replace(sc, **overrides)


def cmd_simulate(args):
    sc = _scenario(args)
    out = _out_dir(args.out, "simulate", args.force)
    t0 = time.perf_counter()
    ds = simgen.generate(sc, args.replication)
    data_path = out / "data.csv"
    ds.to_csv(data_path)
    (out / "scenario.json").write_text(json.dumps(sc.to_dict(), indent=2) + "\n")
    persist.write_manifest(
        out,
        "simulate",
        {"scenario": sc.to_dict(), "replication": args.replication},
        seed=sc.seed,
        timings={"generate_seconds": time.perf_counter() - t0},
        extra={"dataset_digest": ds.digest(), "n_rows": ds.n_obs},
    )
    _log(f"wrote {ds.n_obs} rows for {ds.n_subjects} subjects to {data_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _model_spec(args):
    if args.spec:
        spec = load_spec(args.spec)
    else:
        spec = simulation_spec(args.model, 0.5 if args.tau_fixed is None else args.tau_fixed)
    if args.family == "gaussian" and spec.family != "gaussian":
        spec = replace(spec, family="gaussian", skewness=None)
    elif args.family == "al" and spec.family != "al":
        spec = replace(spec, family="al", skewness=0.5 if args.tau_fixed is None else args.tau_fixed)
    if args.tau_fixed is not None:
        if spec.family != "al":
            raise SpecError("--tau-fixed needs the al family")
        spec = replace(spec, skewness=args.tau_fixed)
    return spec


def _sampler_config(args):
    return SamplerConfig(
        n_chains=args.chains,
        n_iter=args.iter,
        burn_in=args.burnin,
        thin=args.thin,
        seed=args.seed,
        n_jobs=args.jobs,
    )


def cmd_fit(args):
    try:
        cfg = _sampler_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    spec = _model_spec(args)
    ds = read_csv(args.data)
    raw_digest = ds.digest()
    if args.standardize:
        ds = ds.standardized([c.strip() for c in args.standardize.split(",") if c.strip()])
    out = _out_dir(args.out, "fit", args.force)
    t0 = time.perf_counter()
    sample = run(ds, spec, cfg)
    elapsed = time.perf_counter() - t0
    summary = diagnostics.summarize(sample)
    persist.write_fit(out, sample, summary, format_spec(spec))
    persist.write_manifest(
        out,
        "fit",
        {"sampler": cfg.to_dict(), "spec": format_spec(spec), "standardize": args.standardize},
        seed=cfg.seed,
        inputs={str(args.data): persist.file_digest(args.data)},
        timings={"total_seconds": elapsed, "chain_seconds": sample.timings},
        extra={
            "dataset_digest": raw_digest,
            "fitted_dataset_digest": ds.digest(),
            "model_kind": spec.kind,
            "acceptance": sample.acceptance,
            "max_rhat": summary.max_rhat(),
        },
    )
    _print_summary(summary)
    if not summary.converged():
        _log(f"R-hat {summary.max_rhat():.3f} >= {diagnostics.CONVERGENCE_THRESHOLD}")
        if not args.no_strict:
            return EXIT_CONVERGENCE
    return EXIT_OK


def _print_summary(summary, stream=None):
    stream = stream or sys.stdout
    print(f"{'parameter':14s} {'label':30s} {'mean':>11s} {'sd':>10s} {'2.5%':>11s} {'97.5%':>11s} {'rhat':>7s}", file=stream)
    for r in summary.rows():
        rh = "-" if r["rhat"] is None else f"{r['rhat']:.3f}"
        print(
            f"{r['name']:14s} {r['label']:30s} {r['mean']:11.4f} {r['sd']:10.4f} {r['lower']:11.4f} {r['upper']:11.4f} {rh:>7s}",
            file=stream,
        )


# ---------------------------------------------------------------------------
# select
# ---------------------------------------------------------------------------


def cmd_select(args):
    if len(args.fits) < 2:
        raise UsageError("select needs at least two fit directories")
    try:
        qset = selection.QuantileSet.parse(args.set)
        loss = selection.canonical_loss(args.loss)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ds = read_csv(args.data)
    digest = ds.digest()
    fits = []
    names = set()
    for d in args.fits:
        fit, manifest = persist.load_fit(d)
        if manifest.get("dataset_digest") != digest:
            raise DataError(f"{d} was fitted to a different dataset (digest mismatch)")
        std = manifest.get("config", {}).get("standardize")
        data = ds.standardized([c.strip() for c in std.split(",")]) if std else ds
        name = fit.name
        k = 2
        while name in names:
            name = f"{fit.name}#{k}"
            k += 1
        names.add(name)
        fit.name = name
        fits.append((fit, data))
    out = _out_dir(args.out, "select", args.force)
    reports = [selection.criterion(f, data, qset, loss) for f, data in fits]
    verdict = selection.compare(reports)
    errors = {}
    for f, data in fits:
        errors[f.name] = {k: dict(zip(("mse", "mae"), selection.predictive_errors(f, data, k))) for k in selection.PREDICTION_KINDS}
    result = {
        "set": qset.name,
        "orders": list(qset.orders),
        "loss": loss,
        "score_name": reports[0].score_name,
        "scores": verdict["scores"],
        "winner": verdict["winner"],
        "tie": verdict["tied"] if len(verdict["tied"]) > 1 else None,
        "predictive_errors": errors,
    }
    selection.dump_json(result, out / "criterion.json")
    for r in reports:
        (out / f"criterion_{_slug(r.model)}.csv").write_text(r.to_csv())
    err_rows = [(m, k, v["mse"], v["mae"]) for m, kinds in errors.items() for k, v in kinds.items()]
    (out / "errors.csv").write_text(selection.rows_to_csv(["model", "prediction", "mse", "mae"], err_rows))
    if args.trajectories:
        for f, data in fits:
            rows = selection.quantile_trajectories(f, data, qset.orders)
            (out / f"quantiles_{_slug(f.name)}.csv").write_text(selection.rows_to_csv(["id", "time", "gamma", "value"], rows))
    persist.write_manifest(
        out,
        "select",
        {"set": qset.name, "orders": list(qset.orders), "loss": loss, "fits": [str(d) for d in args.fits]},
        inputs={str(args.data): persist.file_digest(args.data), **{str(d): persist.file_digest(Path(d) / "summary.json") for d in args.fits}},
        extra={"dataset_digest": digest},
    )
    for m, v in verdict["scores"].items():
        print(f"{m:20s} {reports[0].score_name}={v:.6f}")
    if result["tie"]:
        print(f"tie between {', '.join(result['tie'])}")
    else:
        print(f"winner: {verdict['winner']}")
    return EXIT_OK


def _slug(name):
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name)


# ---------------------------------------------------------------------------
# summarize
# ---------------------------------------------------------------------------


def cmd_summarize(args):
    d = Path(args.fit)
    if (d / "summary.json").exists():
        summary = diagnostics.PosteriorSummary.from_dict(json.loads((d / "summary.json").read_text()))
    else:
        chains = sorted(d.glob("chain_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
        if not chains:
            raise DataError(f"{d} holds neither summary.json nor chain CSVs")
        loaded = [persist.read_chain_csv(p) for p in chains]
        names = loaded[0][0]
        summary = diagnostics.summarize_draws(np.stack([x for _, x in loaded]), names)
    if args.json:
        print(summary.to_json())
    else:
        _print_summary(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# study
# ---------------------------------------------------------------------------


def cmd_study(args):
    try:
        cfg = _sampler_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sc = _scenario(args)
    models = tuple(m.strip().upper() for m in args.models.split(","))
    out = _out_dir(args.out, "study", args.force)
    t0 = time.perf_counter()

    def progress(r, res):
        winners = res["winners"].get(("set1", "abs"))
        _log(f"replication {r + 1}/{args.reps} done (set1/abs winner: {winners})")

    report = simgen.run_study(sc, args.reps, models, cfg, n_jobs=args.jobs, progress=progress)
    (out / "study.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    persist.write_manifest(
        out,
        "study",
        {"scenario": sc.to_dict(), "sampler": cfg.to_dict(), "models": list(models), "replications": args.reps},
        seed=sc.seed,
        timings={"total_seconds": time.perf_counter() - t0},
    )
    for key, freq in report.selection_frequency.items():
        print(f"{key[0]}/{key[1]}: " + ", ".join(f"{m}={v:.2f}" for m, v in freq.items()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_sampler_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chains", type=int, default=3)
    p.add_argument("--iter", type=int, default=40000)
    p.add_argument("--burnin", type=int, default=10000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for chains/replications")


def _add_scenario_flags(p):
    p.add_argument("scenario", help="scenario JSON file or built-in name")
    p.add_argument("--n", type=int, help="number of subjects")
    p.add_argument("--m", type=int, help="measurements per subject")
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--family", choices=("al", "gaussian"))
    p.add_argument("--tau-fixed", dest="tau_fixed", type=float, help="generate with constant skewness")


def build_parser():
    parser = argparse.ArgumentParser(prog="aldrm", description="Asymmetric Laplace mixed-effects distributional regression")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    _add_scenario_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--replication", type=int, help="replication index mixed into the seed")
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the MCMC sampler on a dataset")
    p.add_argument("data")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--spec", help="model spec file")
    g.add_argument("--model", default="ALDRM", type=str.upper, choices=("ALDRM", "LSLQMM", "LQMM", "LSMM"), help="built-in simulation model")
    p.add_argument("--family", choices=("al", "gaussian"))
    p.add_argument("--tau-fixed", dest="tau_fixed", type=float)
    p.add_argument("--standardize", help="comma-separated covariates to z-score")
    _add_sampler_flags(p)
    p.add_argument("--no-strict", dest="no_strict", action="store_true", help="exit 0 even when R-hat >= 1.1")
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="compare fits with the quantile-coverage criterion")
    p.add_argument("data")
    p.add_argument("fits", nargs="+")
    p.add_argument("--set", default="set1", help="set1 | set2 | set3 | comma-separated orders")
    p.add_argument("--loss", default="abs", choices=("abs", "sq"))
    p.add_argument("--trajectories", action="store_true", help="also write predicted quantile curves")
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("summarize", help="print the posterior summary of a fit directory")
    p.add_argument("fit")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("study", help="run a replicated simulation study")
    _add_scenario_flags(p)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--models", default="ALDRM,LSLQMM,LSMM")
    _add_sampler_flags(p)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_study)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE
    except (DataError, SpecError) as exc:
        _log(f"error: {exc}")
        return EXIT_DATA
    except SamplerError as exc:
        _log(f"sampler failure: {exc}")
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
