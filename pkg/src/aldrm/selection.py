"""Quantile-coverage model selection and point-prediction errors.

For each subject ``i`` and order ``g`` the fitted model predicts the
``g``-quantile at every observation. ``gamma_hat_i(g)`` is the share of the
subject's responses strictly below that trajectory (ties count as not below).
A model's score for subject ``i`` is the mean over the order set of
``loss(gamma_hat_i(g) - g)``, and the global score is the mean over subjects.
Absolute loss gives the MMAE score and squared loss gives the MMSE score.
Lower scores are better.
"""

import csv
import io
import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import aldist
from .data import fmt
from .errors import DataError
from .modelspec import RandomEffects, build_design, eval_params

LOSSES = {"abs": np.abs, "sq": np.square}
LOSS_ALIASES = {"abs": "abs", "absolute": "abs", "mmae": "abs", "sq": "sq", "quadratic": "sq", "mmse": "sq"}
PREDICTION_KINDS = ("mode", "mean", "median")


@dataclass(frozen=True)
class QuantileSet:
    orders: tuple
    name: str = "custom"

    def __post_init__(self):
        orders = tuple(float(g) for g in self.orders)
        if not orders:
            raise ValueError("a quantile set needs at least one order")
        if not all(0.0 < g < 1.0 for g in orders):
            raise ValueError("quantile orders must lie in (0, 1)")
        if any(b <= a for a, b in zip(orders, orders[1:])):
            raise ValueError("quantile orders must be strictly increasing")
        object.__setattr__(self, "orders", orders)

    @classmethod
    def parse(cls, text):
        """Built-in name (``set1``/``set2``/``set3``) or comma-separated orders."""
        key = text.strip().lower()
        if key in BUILTIN_SETS:
            return BUILTIN_SETS[key]
        try:
            orders = [float(v) for v in key.split(",") if v.strip()]
        except ValueError:
            raise ValueError(f"cannot parse quantile set '{text}'") from None
        qs = cls(tuple(orders))
        for builtin in BUILTIN_SETS.values():
            if len(builtin.orders) == len(qs.orders) and np.allclose(builtin.orders, qs.orders, rtol=0, atol=1e-12):
                return builtin
        return qs


DECILES = QuantileSet(tuple(np.round(np.arange(1, 10) / 10, 10)), "set1")
QUARTILES = QuantileSet((0.25, 0.5, 0.75), "set2")
TAILS_AND_MEDIAN = QuantileSet((0.1, 0.5, 0.9), "set3")
BUILTIN_SETS = {"set1": DECILES, "set2": QUARTILES, "set3": TAILS_AND_MEDIAN}


def canonical_loss(loss):
    try:
        return LOSS_ALIASES[str(loss).lower()]
    except KeyError:
        raise ValueError(f"unknown loss '{loss}' (use abs or sq)") from None


@dataclass
class FittedModel:
    """Point estimates used for prediction: posterior means of the population
    parameters and of each subject's random effects."""

    spec: object
    theta: object
    effects: RandomEffects
    subject_ids: tuple
    name: str = ""

    @classmethod
    def from_sample(cls, sample, name=""):
        return cls(sample.spec, sample.posterior_mean(), sample.effects_mean, tuple(sample.subject_ids), name)

    def _effects_for(self, bundle):
        """Random-effect rows reordered to ``bundle``'s subject order."""
        pos = {sid: k for k, sid in enumerate(self.subject_ids)}
        missing = [sid for sid in bundle.subject_ids if sid not in pos]
        if missing:
            raise DataError(f"no random-effect estimates for subject(s) {', '.join(missing[:5])}")
        order = np.array([pos[sid] for sid in bundle.subject_ids], dtype=int)
        return RandomEffects(
            **{k: None if v is None else v[order] for k, v in vars(self.effects).items()}
        )

    def params(self, dataset):
        """``(bundle, mu, sigma, tau)`` at every observation of ``dataset``."""
        bundle = build_design(dataset, self.spec)
        mu, sigma, tau = eval_params(self.theta, self._effects_for(bundle), bundle)
        return bundle, mu, sigma, tau


def quantile_at(mu, sigma, tau, gamma):
    """``gamma``-quantile of AL(mu, sigma, tau), or of N(mu, sigma^2) when ``tau`` is None."""
    if tau is None:
        return mu + sigma * norm.ppf(gamma)
    return aldist.quantile(np.full(np.shape(mu), gamma), aldist.ALParams(mu, sigma, tau))


def predicted_quantile(fit, dataset, gamma):
    """Predicted ``gamma``-quantile at every observation, in long order."""
    _, mu, sigma, tau = fit.params(dataset)
    return quantile_at(mu, sigma, tau, gamma)


def _shares_below(y, q, offsets):
    below = (y < q).astype(float)
    counts = np.add.reduceat(below, offsets[:-1])
    return counts / np.diff(offsets)


def gamma_hat(fit, dataset, gamma):
    """Per-subject share of responses strictly below the predicted quantile."""
    bundle, mu, sigma, tau = fit.params(dataset)
    return _shares_below(bundle.y, quantile_at(mu, sigma, tau, gamma), bundle.offsets)


@dataclass
class CriterionReport:
    model: str
    subject_ids: tuple
    orders: tuple
    set_name: str
    loss: str
    gamma_hat: np.ndarray
    per_subject: np.ndarray
    value: float

    @property
    def score_name(self):
        return "MMAE" if self.loss == "abs" else "MMSE"

    def to_dict(self):
        return {
            "model": self.model,
            "set": self.set_name,
            "orders": list(self.orders),
            "loss": self.loss,
            "score_name": self.score_name,
            "value": float(self.value),
            "per_subject": {sid: float(v) for sid, v in zip(self.subject_ids, self.per_subject)},
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "criterion"] + [f"gamma_hat[{fmt(g)}]" for g in self.orders])
        for sid, c, row in zip(self.subject_ids, self.per_subject, self.gamma_hat):
            w.writerow([sid, fmt(c)] + [fmt(v) for v in row])
        return buf.getvalue()


def criterion_from_shares(shares, orders, loss="abs"):
    """Per-subject and global scores from a ``(subjects, orders)`` share matrix."""
    f = LOSSES[canonical_loss(loss)]
    per_subject = f(np.asarray(shares, dtype=float) - np.asarray(orders, dtype=float)).mean(axis=1)
    return per_subject, float(per_subject.mean())


def criterion(fit, dataset, qset=DECILES, loss="abs"):
    loss = canonical_loss(loss)
    bundle, mu, sigma, tau = fit.params(dataset)
    shares = np.column_stack(
        [_shares_below(bundle.y, quantile_at(mu, sigma, tau, g), bundle.offsets) for g in qset.orders]
    )
    per_subject, value = criterion_from_shares(shares, qset.orders, loss)
    return CriterionReport(fit.name, tuple(bundle.subject_ids), qset.orders, qset.name, loss, shares, per_subject, value)


def point_prediction(mu, sigma, tau, kind):
    if kind not in PREDICTION_KINDS:
        raise ValueError(f"prediction kind must be one of {PREDICTION_KINDS}")
    if tau is None or kind == "mode":
        return np.asarray(mu, dtype=float)
    params = aldist.ALParams(mu, sigma, tau)
    if kind == "mean":
        return aldist.mean(params)
    return aldist.quantile(np.full(np.shape(mu), 0.5), params)


def predict_value(fit, dataset, kind="mode"):
    """Mode, mean or median of each observation's fitted distribution."""
    _, mu, sigma, tau = fit.params(dataset)
    return point_prediction(mu, sigma, tau, kind)


def predictive_errors(fit, dataset, kind="mode"):
    """``(MSE, MAE)`` of the chosen point prediction over all observations."""
    bundle, mu, sigma, tau = fit.params(dataset)
    resid = bundle.y - point_prediction(mu, sigma, tau, kind)
    return float(np.mean(resid**2)), float(np.mean(np.abs(resid)))


def compare(reports, tol=0.0):
    """Rank criterion reports; the winner minimises the score.

    Returns ``{"scores", "winner", "tied"}`` where ``tied`` lists every model
    within ``tol`` of the best score (length > 1 means an explicit tie).
    """
    scores = {r.model: r.value for r in reports}
    best = min(scores.values())
    tied = [m for m, v in scores.items() if v - best <= tol]
    return {"scores": scores, "winner": tied[0] if len(tied) == 1 else None, "tied": tied}


def quantile_trajectories(fit, dataset, orders):
    """Rows ``(id, time, gamma, value)`` of predicted subject quantile curves."""
    bundle, mu, sigma, tau = fit.params(dataset)
    ids = np.asarray(bundle.subject_ids)[bundle.subject]
    rows = []
    for g in orders:
        q = quantile_at(mu, sigma, tau, g)
        rows.extend(zip(ids, bundle.time, [g] * q.size, q))
    return rows


def distribution_grid(fit, dataset, y_grid):
    """Rows ``(id, time, y, pdf, cdf)`` of each observation's fitted distribution."""
    bundle, mu, sigma, tau = fit.params(dataset)
    y_grid = np.asarray(y_grid, dtype=float)
    ids = np.asarray(bundle.subject_ids)[bundle.subject]
    rows = []
    for k in range(bundle.n_obs):
        if tau is None:
            dens = norm.pdf(y_grid, mu[k], sigma[k])
            cum = norm.cdf(y_grid, mu[k], sigma[k])
        else:
            p = aldist.ALParams(mu[k], sigma[k], tau[k])
            dens, cum = aldist.pdf(y_grid, p), aldist.cdf(y_grid, p)
        rows.extend(zip([ids[k]] * y_grid.size, [bundle.time[k]] * y_grid.size, y_grid, dens, cum))
    return rows


def rows_to_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    return buf.getvalue()


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")
