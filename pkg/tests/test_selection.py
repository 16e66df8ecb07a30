import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aldrm import aldist, simgen
from aldrm.data import LongitudinalDataset, SubjectRecord
from aldrm.errors import DataError
from aldrm.modelspec import ParameterVector, RandomEffects, parse_spec, simulation_spec
from aldrm.selection import (
    DECILES,
    QUARTILES,
    TAILS_AND_MEDIAN,
    FittedModel,
    QuantileSet,
    compare,
    criterion,
    criterion_from_shares,
    distribution_grid,
    gamma_hat,
    predict_value,
    predicted_quantile,
    predictive_errors,
    quantile_trajectories,
)

LOC_ONLY = "location.fixed = 1\nlocation.random = 1\nscale.fixed = 1\n"


def dataset(ys, times=None):
    subs = []
    for i, y in enumerate(ys):
        t = np.arange(len(y), dtype=float) if times is None else times[i]
        subs.append(SubjectRecord(f"s{i}", {}, t, y))
    return LongitudinalDataset(subs)


def lqmm_fit(tau, mu, sigma, b=None, ids=None):
    spec = parse_spec(LOC_ONLY + f"skewness = {tau}")
    n = len(ids)
    theta = ParameterVector(beta=[mu], Sigma_b=[[1.0]], sigma_scalar=sigma)
    return FittedModel(spec, theta, RandomEffects(np.zeros((n, 1)) if b is None else np.asarray(b, float).reshape(n, 1)), tuple(ids), "m")


def gauss_fit(mu, sigma, ids):
    spec = parse_spec("family = gaussian\n" + LOC_ONLY)
    theta = ParameterVector(beta=[mu], Sigma_b=[[1.0]], xi=[math.log(sigma)], Sigma_u=np.zeros((0, 0)))
    return FittedModel(spec, theta, RandomEffects(np.zeros((len(ids), 1)), np.zeros((len(ids), 0))), tuple(ids), "g")


# -- quantile sets --------------------------------------------------------------


def test_builtin_sets():
    assert DECILES.orders == pytest.approx([0.1 * k for k in range(1, 10)])
    assert QUARTILES.orders == (0.25, 0.5, 0.75)
    assert TAILS_AND_MEDIAN.orders == (0.1, 0.5, 0.9)


def test_parse_sets():
    assert QuantileSet.parse("0.25,0.5,0.75") is QUARTILES
    assert QuantileSet.parse("set3") is TAILS_AND_MEDIAN
    assert QuantileSet.parse("0.2, 0.8").orders == (0.2, 0.8)
    for bad in ("", "0.5,0.2", "0,0.5", "a,b", "0.3,0.3"):
        with pytest.raises(ValueError):
            QuantileSet.parse(bad)


# -- predicted quantiles ------------------------------------------------------------


def test_quantile_at_own_order_is_mode():
    ds = dataset([[0.0, 1.0, 2.0]])
    fit = lqmm_fit(0.3, 5.0, 2.0, ids=["s0"])
    np.testing.assert_allclose(predicted_quantile(fit, ds, 0.3), 5.0)


def test_gaussian_median_is_mean():
    ds = dataset([[0.0, 1.0]])
    np.testing.assert_allclose(predicted_quantile(gauss_fit(2.0, 3.0, ["s0"]), ds, 0.5), 2.0)


def test_closed_form_upper_quantile():
    ds = dataset([[0.0]])
    fit = lqmm_fit(0.5, 1.0, 0.5, ids=["s0"])
    assert predicted_quantile(fit, ds, 0.9)[0] == pytest.approx(1.0 + 0.5 * (-2 * math.log(0.2)))


def test_random_effects_shift_trajectories():
    ds = dataset([[0.0, 0.0], [0.0, 0.0]])
    fit = lqmm_fit(0.5, 1.0, 1.0, b=[0.5, -2.0], ids=["s0", "s1"])
    np.testing.assert_allclose(predicted_quantile(fit, ds, 0.5), [1.5, 1.5, -1.0, -1.0])


def test_missing_random_effects():
    fit = lqmm_fit(0.5, 0.0, 1.0, ids=["other"])
    with pytest.raises(DataError, match="no random-effect estimates"):
        predicted_quantile(fit, dataset([[1.0]]), 0.5)


# -- gamma hat and criterion ----------------------------------------------------------


def test_gamma_hat_all_below():
    ds = dataset([[-5.0, -4.0, -3.0]])
    assert gamma_hat(lqmm_fit(0.5, 0.0, 1.0, ids=["s0"]), ds, 0.5)[0] == 1.0


def test_gamma_hat_ties_count_as_not_below():
    ds = dataset([[0.0, 0.0, -1.0, 1.0]])
    assert gamma_hat(lqmm_fit(0.5, 0.0, 1.0, ids=["s0"]), ds, 0.5)[0] == 0.25


def test_gamma_hat_discreteness(rng):
    ds = dataset([rng.normal(size=10)])
    g = gamma_hat(lqmm_fit(0.5, 0.0, 1.0, ids=["s0"]), ds, 0.7)[0]
    assert g * 10 == pytest.approx(round(g * 10))


def test_gamma_hat_calibrated_model(rng):
    mu, sigma, tau = 1.0, 0.7, 0.35
    y = aldist.sample_inverse((mu, sigma, tau), rng, size=40_000)
    ds = dataset([y])
    fit = lqmm_fit(tau, mu, sigma, ids=["s0"])
    for g in DECILES.orders:
        assert abs(gamma_hat(fit, ds, g)[0] - g) < 4 * math.sqrt(g * (1 - g) / y.size)


def test_criterion_hand_arithmetic():
    per, val = criterion_from_shares([[0.30, 0.50, 0.70]], QUARTILES.orders, "abs")
    assert val == pytest.approx((0.05 + 0 + 0.05) / 3)
    per, val = criterion_from_shares([[0.30, 0.50, 0.70]], QUARTILES.orders, "sq")
    assert val == pytest.approx((0.0025 + 0 + 0.0025) / 3)


def test_criterion_zero_iff_exact():
    per, val = criterion_from_shares([[0.25, 0.5, 0.75], [0.25, 0.5, 0.75]], QUARTILES.orders)
    assert val == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(0, 8), min_size=3, max_size=3), min_size=1, max_size=6))
def test_criterion_is_mean_and_nonnegative(counts):
    shares = np.asarray(counts) / 8
    per, val = criterion_from_shares(shares, QUARTILES.orders, "abs")
    assert np.all(per >= 0) and val == pytest.approx(per.mean())
    assert (val == 0) == bool(np.all(shares == QUARTILES.orders))


def test_criterion_report_and_invariance(rng):
    ys = [rng.normal(size=7) for _ in range(4)]
    ds = dataset(ys)
    ids = [s.id for s in ds.subjects]
    fit = lqmm_fit(0.4, 0.1, 0.8, b=rng.normal(size=4), ids=ids)
    rep = criterion(fit, ds, DECILES, "abs")
    assert rep.score_name == "MMAE" and rep.value == pytest.approx(rep.per_subject.mean())
    assert rep.gamma_hat.shape == (4, 9)
    # relabel subjects and reverse rows inside each subject
    shuffled = LongitudinalDataset(
        [SubjectRecord(s.id, {}, s.times, s.y[::-1]) for s in reversed(ds.subjects)]
    )
    assert criterion(fit, shuffled, DECILES, "abs").value == pytest.approx(rep.value)
    assert "gamma_hat[0.10000000000000001]" in rep.to_csv().splitlines()[0]
    assert criterion(fit, ds, DECILES, "quadratic").score_name == "MMSE"


def test_empirical_quantile_floor(rng):
    # plugging each subject's own empirical quantiles drives the score to its discreteness floor
    n_i = 10
    ys = [rng.normal(size=n_i) for _ in range(5)]
    shares = []
    for y in ys:
        row = []
        for g in QUARTILES.orders:
            q = np.sort(y)[int(np.ceil(g * n_i))] if g * n_i < n_i else np.inf
            row.append(np.mean(y < q))
        shares.append(row)
    per, _ = criterion_from_shares(shares, QUARTILES.orders, "abs")
    assert np.all(per <= 1 / (2 * n_i) + 1e-12)


def test_compare_reports_ties(rng):
    ds = dataset([rng.normal(size=5)])
    a = criterion(lqmm_fit(0.5, 0.0, 1.0, ids=["s0"]), ds, QUARTILES)
    b = criterion(lqmm_fit(0.5, 0.0, 1.0, ids=["s0"]), ds, QUARTILES)
    b.model = "twin"
    v = compare([a, b])
    assert v["winner"] is None and v["tied"] == ["m", "twin"]


# -- point predictions --------------------------------------------------------------


def test_gaussian_predictions_coincide():
    ds = dataset([[0.0, 1.0]])
    fit = gauss_fit(2.0, 1.5, ["s0"])
    for kind in ("mode", "mean", "median"):
        np.testing.assert_allclose(predict_value(fit, ds, kind), 2.0)


def test_symmetric_al_predictions_coincide():
    ds = dataset([[0.0]])
    fit = lqmm_fit(0.5, 3.0, 2.0, ids=["s0"])
    assert predict_value(fit, ds, "mean")[0] == pytest.approx(3.0)
    assert predict_value(fit, ds, "median")[0] == pytest.approx(3.0)


def test_asymmetric_predictions(rng):
    ds = dataset([[0.0]])
    fit = lqmm_fit(0.25, 0.0, 1.0, ids=["s0"])
    assert predict_value(fit, ds, "mode")[0] == 0.0
    assert predict_value(fit, ds, "mean")[0] == pytest.approx(8 / 3)
    median = predict_value(fit, ds, "median")[0]
    assert median == pytest.approx(math.log(0.75 / 0.5) / 0.25)
    draws = aldist.sample_mixture((0.0, 1.0, 0.25), rng, size=400_000)
    assert abs(np.median(draws) - median) < 0.02
    assert abs(draws.mean() - 8 / 3) < 4 * math.sqrt(aldist.variance((0, 1, 0.25)) / draws.size)
    with pytest.raises(ValueError):
        predict_value(fit, ds, "trimmed")


def test_predictive_errors():
    ds = dataset([[1.0, 3.0]])
    mse, mae = predictive_errors(lqmm_fit(0.5, 2.0, 1.0, ids=["s0"]), ds, "mode")
    assert mse == 1.0 and mae == 1.0


# -- emitters -------------------------------------------------------------------------


def test_trajectory_and_grid_emitters():
    ds = dataset([[0.0, 1.0]], times=[[0.0, 2.0]])
    fit = lqmm_fit(0.5, 1.0, 1.0, ids=["s0"])
    rows = quantile_trajectories(fit, ds, (0.25, 0.5))
    assert len(rows) == 4
    assert rows[2][:3] == ("s0", 0.0, 0.5) and rows[2][3] == pytest.approx(1.0)
    grid = distribution_grid(fit, ds, np.linspace(-2, 4, 7))
    assert len(grid) == 14
    assert grid[3][3] == pytest.approx(aldist.pdf(1.0, (1.0, 1.0, 0.5)))
    assert grid[3][4] == pytest.approx(0.5)


def test_fitted_model_from_sample():
    from aldrm.sampler import SamplerConfig, run

    ds = simgen.generate(simgen.Scenario(n=4, m=5, seed=0))
    s = run(ds, simulation_spec("ALDRM"), SamplerConfig(n_chains=1, n_iter=30, burn_in=10, thin=1))
    fit = FittedModel.from_sample(s, "aldrm")
    np.testing.assert_allclose(fit.theta.beta, s.draws[0, :, :5].mean(axis=0))
    assert criterion(fit, ds, QUARTILES).value >= 0
