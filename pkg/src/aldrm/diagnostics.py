"""Posterior summaries, convergence diagnostics and study aggregation.

R-hat uses the split-chain form. Each chain is cut into two halves of length
``n`` (the middle draw is dropped when the length is odd). With ``W`` the mean
within-half variance and ``B / n`` the variance of the half means::

    var_plus = (n - 1) / n * W + B / n
    rhat     = sqrt(var_plus / W)

Zero within-chain variance gives 1 when the chains also agree, and ``inf``
when they sit at different constants. Because of the split, R-hat depends
on the order of draws within a chain, whereas means, sds and intervals do not.
"""

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .data import fmt
from .modelspec import flatten, parameter_names

CONVERGENCE_THRESHOLD = 1.1


def gelman_rubin(draws, split=True):
    """Potential scale reduction factor of ``draws`` (chains x iterations)."""
    x = np.asarray(draws, dtype=float)
    if x.ndim != 2:
        raise ValueError("draws must be a (chains, iterations) array")
    m, n = x.shape
    if m < 2 or n < 10:
        raise ValueError("gelman_rubin needs at least 2 chains of length >= 10")
    if split:
        h = n // 2
        x = np.concatenate([x[:, :h], x[:, n - h :]], axis=0)
        n = h
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean()
    B_over_n = means.var(ddof=1)
    # rounding noise of order eps * |mean| must not count as spread
    tol = (np.finfo(float).eps * max(1.0, float(np.abs(x).max()))) ** 2 * 16
    if W <= tol:
        return 1.0 if B_over_n <= tol else float("inf")
    var_plus = (n - 1) / n * W + B_over_n
    return float(np.sqrt(var_plus / W))


@dataclass
class PosteriorSummary:
    """Per-parameter mean, sd, equal-tailed 95% interval and R-hat.

    ``rhat`` is ``None`` for single-chain samples.
    """

    names: list
    labels: list
    mean: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    rhat: np.ndarray
    n_chains: int
    n_draws: int

    def index(self, name):
        return self.names.index(name)

    def row(self, name):
        k = self.index(name)
        return {
            "name": name,
            "label": self.labels[k],
            "mean": float(self.mean[k]),
            "sd": float(self.sd[k]),
            "lower": float(self.lower[k]),
            "upper": float(self.upper[k]),
            "rhat": None if self.rhat is None else float(self.rhat[k]),
        }

    def rows(self):
        return [self.row(n) for n in self.names]

    def max_rhat(self):
        return None if self.rhat is None else float(np.max(self.rhat))

    def converged(self, threshold=CONVERGENCE_THRESHOLD):
        """True when every R-hat is below ``threshold`` (vacuous for one chain)."""
        return self.rhat is None or bool(np.all(self.rhat < threshold))

    def covers(self, values):
        values = np.asarray(values, dtype=float)
        return (self.lower <= values) & (values <= self.upper)

    def to_dict(self):
        return {
            "n_chains": self.n_chains,
            "n_draws": self.n_draws,
            "converged": self.converged(),
            "parameters": self.rows(),
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, allow_nan=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "label", "mean", "sd", "lower", "upper", "rhat"])
        for r in self.rows():
            w.writerow(
                [r["name"], r["label"]]
                + [fmt(r[k]) for k in ("mean", "sd", "lower", "upper")]
                + ["" if r["rhat"] is None else fmt(r["rhat"])]
            )
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, d):
        rows = d["parameters"]

        def col(k):
            return np.array([r[k] for r in rows], dtype=float)

        rhat = None if not rows or rows[0]["rhat"] is None else col("rhat")
        return cls(
            names=[r["name"] for r in rows],
            labels=[r["label"] for r in rows],
            mean=col("mean"),
            sd=col("sd"),
            lower=col("lower"),
            upper=col("upper"),
            rhat=rhat,
            n_chains=d["n_chains"],
            n_draws=d["n_draws"],
        )


def summarize_draws(draws, names, labels=None):
    """Summary of a ``(chains, iterations, params)`` array."""
    x = np.asarray(draws, dtype=float)
    if x.ndim == 2:
        x = x[None]
    m, n, p = x.shape
    if n == 0:
        raise ValueError("cannot summarize an empty sample")
    pooled = x.reshape(m * n, p)
    lower, upper = np.quantile(pooled, [0.025, 0.975], axis=0)
    rhat = None
    if m >= 2 and n >= 10:
        rhat = np.array([gelman_rubin(x[:, :, k]) for k in range(p)])
    return PosteriorSummary(
        names=list(names),
        labels=list(labels) if labels is not None else list(names),
        mean=pooled.mean(axis=0),
        sd=pooled.std(axis=0, ddof=1) if m * n > 1 else np.zeros(p),
        lower=lower,
        upper=upper,
        rhat=rhat,
        n_chains=m,
        n_draws=m * n,
    )


def summarize(sample):
    """Summary table of a :class:`~aldrm.sampler.PosteriorSample`."""
    return summarize_draws(sample.draws, sample.names, sample.labels)


@dataclass
class CoverageReport:
    names: list
    truth: np.ndarray
    mean_estimate: np.ndarray
    mean_sd: np.ndarray
    coverage: np.ndarray
    bias: np.ndarray
    bias_se: np.ndarray
    n_replications: int

    def rows(self):
        return [
            {
                "name": n,
                "truth": float(self.truth[k]),
                "mean_estimate": float(self.mean_estimate[k]),
                "mean_sd": float(self.mean_sd[k]),
                "coverage": float(self.coverage[k]),
                "bias": float(self.bias[k]),
                "bias_se": float(self.bias_se[k]),
            }
            for k, n in enumerate(self.names)
        ]

    def to_dict(self):
        return {"n_replications": self.n_replications, "parameters": self.rows()}


def coverage_report(summaries, truth, spec=None):
    """Average estimates and interval coverage across replications.

    ``truth`` is a name -> value mapping, or a ParameterVector together with
    the ``spec`` used to fit. Only parameters present in the truth are reported.
    """
    summaries = list(summaries)
    if len(summaries) < 2:
        raise ValueError("coverage_report needs at least 2 replications")
    if not isinstance(truth, dict):
        if spec is None:
            raise ValueError("a ParameterVector truth needs the model spec")
        truth = dict(zip(parameter_names(spec)[0], flatten(truth, spec)))
    names = [n for n in summaries[0].names if n in truth]
    t = np.array([truth[n] for n in names], dtype=float)
    idx = [[s.index(n) for n in names] for s in summaries]
    est = np.array([s.mean[i] for s, i in zip(summaries, idx)])
    sd = np.array([s.sd[i] for s, i in zip(summaries, idx)])
    hit = np.array([(s.lower[i] <= t) & (t <= s.upper[i]) for s, i in zip(summaries, idx)])
    r = len(summaries)
    return CoverageReport(
        names=names,
        truth=t,
        mean_estimate=est.mean(axis=0),
        mean_sd=sd.mean(axis=0),
        coverage=hit.mean(axis=0),
        bias=est.mean(axis=0) - t,
        bias_se=est.std(axis=0, ddof=1) / np.sqrt(r),
        n_replications=r,
    )
