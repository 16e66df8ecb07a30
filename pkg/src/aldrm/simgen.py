"""Synthetic longitudinal data following the simulation design.

Generation steps for each subject ``i``:

1. fix the true population parameters (:func:`default_truth`);
2. draw independent random-effect blocks ``b_i ~ N(0, Sigma_b)``,
   ``u_i ~ N(0, Sigma_u)``, ``a_i ~ N(0, Sigma_a)``;
3. draw covariates ``x1 ~ N(0, 1)`` and ``x2 ~ Bernoulli(0.5)``;
4. use ``m`` equally spaced times on ``[0, t_max]`` (both endpoints included);
5. draw ``y_ij ~ AL(mu_ij, sigma_ij, tau_ij)`` by inverse CDF, with::

       mu    = b0 + b1 t + b2 t^2 + b3 x1 + b4 x2 + b_i0 + b_i1 t + b_i2 t^2
       log sigma = xi0 + xi1 t + xi2 x1 + u_i0 + u_i1 t
       logit tau = alpha1 x1 + alpha2 x2 + a_i0 + a_i1 t

The Gaussian variant replaces step 5 by ``y_ij ~ N(mu_ij, sigma_ij^2)`` and
the fixed-skewness variant uses a constant ``tau``.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import aldist, diagnostics, selection
from .data import LongitudinalDataset, SubjectRecord
from .errors import SpecError
from .modelspec import ParameterVector, RandomEffects, build_design, eval_params, simulation_spec
from .sampler import SamplerConfig, run


def default_truth():
    """True parameter values of the reference scenario."""
    return ParameterVector(
        beta=[13.0, 0.3, -0.03, 0.6, 0.8],
        Sigma_b=[[3.0, -0.32, 0.014], [-0.32, 0.3, -0.025], [0.014, -0.025, 0.01]],
        xi=[-0.6, -0.07, 0.084],
        Sigma_u=[[0.06, -0.003], [-0.003, 0.01]],
        alpha=[0.13, 0.15],
        Sigma_a=[[0.25, -0.02], [-0.02, 0.05]],
    )


@dataclass
class Scenario:
    """Simulation scenario.

    ``family="gaussian"`` generates LSMM data; ``tau_fixed`` (AL family only)
    generates with constant skewness instead of the skewness predictor.
    """

    n: int = 200
    m: int = 50
    t_max: float = 10.0
    truth: ParameterVector = field(default_factory=default_truth)
    seed: int = 0
    family: str = "al"
    tau_fixed: float = None

    def __post_init__(self):
        if self.n < 1 or self.m < 2:
            raise SpecError("scenario needs n >= 1 and m >= 2")
        if self.family not in ("al", "gaussian"):
            raise SpecError(f"unknown family '{self.family}'")
        t = self.truth
        if len(t.beta) != 5 or t.Sigma_b.shape != (3, 3) or len(t.xi) != 3 or t.Sigma_u.shape != (2, 2):
            raise SpecError("truth dimensions do not match the simulation predictors")
        if self.family == "al" and self.tau_fixed is None:
            if t.alpha is None or len(t.alpha) != 2 or t.Sigma_a is None or t.Sigma_a.shape != (2, 2):
                raise SpecError("ALDRM truth needs alpha (2) and Sigma_a (2x2)")

    @property
    def kind(self):
        if self.family == "gaussian":
            return "LSMM"
        return "ALDRM" if self.tau_fixed is None else "LSLQMM"

    def spec(self):
        return simulation_spec(self.kind, 0.5 if self.tau_fixed is None else self.tau_fixed)

    def times(self):
        return np.linspace(0.0, self.t_max, self.m)

    def to_dict(self):
        t = self.truth
        truth = {k: (None if v is None else np.asarray(v).tolist()) for k, v in vars(t).items()}
        return {
            "n": self.n,
            "m": self.m,
            "t_max": self.t_max,
            "seed": self.seed,
            "family": self.family,
            "tau_fixed": self.tau_fixed,
            "truth": truth,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        truth = d.pop("truth", None)
        unknown = set(d) - {"n", "m", "t_max", "seed", "family", "tau_fixed"}
        if unknown:
            raise SpecError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
        if truth is not None:
            base = vars(default_truth())
            base.update({k: v for k, v in truth.items()})
            d["truth"] = ParameterVector(**base)
        return cls(**d)


BUILTIN_SCENARIOS = {
    "table1-default": lambda: Scenario(),
    "lslqmm-default": lambda: Scenario(tau_fixed=0.5),
    "lsmm-default": lambda: Scenario(family="gaussian"),
}


def builtin_scenario(name, **overrides):
    try:
        sc = BUILTIN_SCENARIOS[name]()
    except KeyError:
        raise SpecError(f"unknown built-in scenario '{name}' (choose from {', '.join(BUILTIN_SCENARIOS)})") from None
    return replace(sc, **{k: v for k, v in overrides.items() if v is not None})


def load_scenario(path):
    """Read a JSON scenario file; errors carry the offending line."""
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: {exc.msg}", exc.lineno) from None
    if not isinstance(d, dict):
        raise SpecError(f"{path}: scenario must be a JSON object", 1)
    try:
        return Scenario.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"{path}: {exc}") from None


def replication_rng(seed, replication=None):
    """Generator for ``(seed, replication)``, independent of scheduling order."""
    entropy = [int(seed)] if replication is None else [int(seed), int(replication)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def _mvn_rows(rng, S, n):
    S = np.asarray(S, dtype=float)
    if not np.any(S):
        return np.zeros((n, S.shape[0]))
    return rng.multivariate_normal(np.zeros(S.shape[0]), S, size=n, method="eigh")


def generate(scenario, replication=None, return_effects=False):
    """Draw one dataset; deterministic given ``(scenario.seed, replication)``."""
    rng = replication_rng(scenario.seed, replication)
    t = scenario.truth
    n, m = scenario.n, scenario.m
    b = _mvn_rows(rng, t.Sigma_b, n)
    u = _mvn_rows(rng, t.Sigma_u, n)
    a = _mvn_rows(rng, t.Sigma_a, n) if scenario.kind == "ALDRM" else None
    x1 = rng.standard_normal(n)
    x2 = (rng.uniform(size=n) < 0.5).astype(float)
    times = scenario.times()

    placeholder = LongitudinalDataset(
        [SubjectRecord(str(i + 1), {"x1": x1[i], "x2": x2[i]}, times, np.zeros(m)) for i in range(n)]
    )
    spec = scenario.spec()
    bundle = build_design(placeholder, spec)
    effects = RandomEffects(b=b, u=u, a=a)
    truth = t if scenario.kind == "ALDRM" else replace(t, alpha=None, Sigma_a=None)
    mu, sigma, tau = eval_params(truth, effects, bundle)
    if scenario.family == "gaussian":
        y = mu + sigma * rng.standard_normal(mu.size)
    else:
        y = aldist.sample_inverse(aldist.ALParams(mu, sigma, tau), rng)
    y = np.asarray(y).reshape(n, m)
    ds = LongitudinalDataset(
        [SubjectRecord(str(i + 1), {"x1": x1[i], "x2": x2[i]}, times, y[i]) for i in range(n)]
    )
    if return_effects:
        return ds, effects
    return ds


STUDY_MODELS = ("ALDRM", "LSLQMM", "LSMM")


def _fit_seed(seed, replication, model_index):
    return int(np.random.SeedSequence([int(seed), int(replication), int(model_index)]).generate_state(1)[0])


def run_replication(scenario, replication, models=STUDY_MODELS, cfg=None, sets=None, losses=("abs", "sq")):
    """Generate one dataset, fit every model and score it.

    Returns a plain dict with per-model summaries, criterion values,
    predictive errors and the winner for each (set, loss) pair.
    """
    cfg = cfg or SamplerConfig()
    sets = sets or (selection.DECILES, selection.QUARTILES, selection.TAILS_AND_MEDIAN)
    ds = generate(scenario, replication)
    out = {"replication": replication, "models": {}, "winners": {}}
    reports = {}
    for k, kind in enumerate(models):
        spec = simulation_spec(kind, 0.5 if scenario.tau_fixed is None else scenario.tau_fixed)
        sample = run(ds, spec, replace(cfg, seed=_fit_seed(cfg.seed, replication, k)))
        summary = diagnostics.summarize(sample)
        fit = selection.FittedModel.from_sample(sample, kind)
        entry = {"summary": summary, "converged": summary.converged(), "criteria": {}, "errors": {}}
        for qs in sets:
            for loss in losses:
                rep = selection.criterion(fit, ds, qs, loss)
                entry["criteria"][(qs.name, loss)] = rep.value
                reports.setdefault((qs.name, loss), []).append(rep)
        for pk in selection.PREDICTION_KINDS:
            entry["errors"][pk] = selection.predictive_errors(fit, ds, pk)
        out["models"][kind] = entry
    out["winners"] = {key: selection.compare(reps)["winner"] for key, reps in reports.items()}
    return out


@dataclass
class StudyReport:
    scenario: Scenario
    models: tuple
    replications: list
    coverage: dict
    coverage_converged: dict
    selection_frequency: dict

    @property
    def n_replications(self):
        return len(self.replications)

    def flagged(self):
        """Replication indices where any fitted model has R-hat >= 1.1."""
        return [r["replication"] for r in self.replications if not all(m["converged"] for m in r["models"].values())]

    def to_dict(self):
        def cov(c):
            return None if c is None else c.to_dict()

        return {
            "scenario": self.scenario.to_dict(),
            "models": list(self.models),
            "n_replications": self.n_replications,
            "flagged": self.flagged(),
            "coverage": {m: cov(c) for m, c in self.coverage.items()},
            "coverage_converged": {m: cov(c) for m, c in self.coverage_converged.items()},
            "selection_frequency": {f"{s}/{l}": v for (s, l), v in self.selection_frequency.items()},
            "replications": [
                {
                    "replication": r["replication"],
                    "winners": {f"{s}/{l}": w for (s, l), w in r["winners"].items()},
                    "models": {
                        m: {
                            "converged": e["converged"],
                            "max_rhat": e["summary"].max_rhat(),
                            "criteria": {f"{s}/{l}": v for (s, l), v in e["criteria"].items()},
                            "errors": {k: {"mse": v[0], "mae": v[1]} for k, v in e["errors"].items()},
                        }
                        for m, e in r["models"].items()
                    },
                }
                for r in self.replications
            ],
        }


def run_study(scenario, n_replications, models=STUDY_MODELS, cfg=None, sets=None, losses=("abs", "sq"), n_jobs=1, progress=None):
    """Monte Carlo study: generate, fit, summarize and score each replication.

    Replication ``r`` uses generator ``(scenario.seed, r)`` so results do not
    depend on scheduling. Non-converged replications are flagged, and coverage
    is reported both over all replications and over the converged subset.
    """
    reps = range(n_replications)
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            futures = [ex.submit(run_replication, scenario, r, models, cfg, sets, losses) for r in reps]
            results = [f.result() for f in futures]
    else:
        results = []
        for r in reps:
            results.append(run_replication(scenario, r, models, cfg, sets, losses))
            if progress is not None:
                progress(r, results[-1])

    coverage, coverage_ok = {}, {}
    truth_kind = scenario.kind
    for kind in models:
        if kind != truth_kind:
            continue
        spec = simulation_spec(kind, 0.5 if scenario.tau_fixed is None else scenario.tau_fixed)
        truth = scenario.truth if kind == "ALDRM" else replace(scenario.truth, alpha=None, Sigma_a=None)
        sums = [r["models"][kind]["summary"] for r in results]
        good = [r["models"][kind]["summary"] for r in results if r["models"][kind]["converged"]]
        coverage[kind] = diagnostics.coverage_report(sums, truth, spec) if len(sums) >= 2 else None
        coverage_ok[kind] = diagnostics.coverage_report(good, truth, spec) if len(good) >= 2 else None

    freq = {}
    for key in results[0]["winners"] if results else ():
        counts = {m: 0 for m in models}
        for r in results:
            w = r["winners"][key]
            if w is not None:
                counts[w] += 1
        freq[key] = {m: c / len(results) for m, c in counts.items()}
    return StudyReport(scenario, tuple(models), results, coverage, coverage_ok, freq)
