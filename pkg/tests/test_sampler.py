import numpy as np
import pytest

import oracles as O
from aldrm import _kernels as K
from aldrm import simgen
from aldrm.modelspec import ModelSpec, build_design, predictor, simulation_spec, unflatten
from aldrm.sampler import Chain, Priors, SamplerConfig, _run_chain, initial_state, log_posterior, run, run_gaussian


def small_sim(n=12, m=6, seed=0, family="al", tau_fixed=None):
    return simgen.generate(simgen.Scenario(n=n, m=m, seed=seed, family=family, tau_fixed=tau_fixed))


QUICK = SamplerConfig(n_chains=2, n_iter=60, burn_in=20, thin=2, seed=11)


# -- latent weights -------------------------------------------------------------


@pytest.mark.parametrize("resid,sigma,tau", [(0.0, 1.0, 0.5), (2.0, 0.4, 0.15), (-1.0, 3.0, 0.85), (1e-9, 1.0, 0.3)])
def test_latent_weight_conditional(kernel_backend, resid, sigma, tau):
    assert O.gig_tv(K.latent_weights, resid, sigma, tau, n_draws=50_000) < 0.02


def test_latent_weight_mean_in_zero_residual_limit(kernel_backend):
    # with zero residual the conditional is Gamma(1/2, rate psi / 2)
    sigma, tau = 0.8, 0.3
    rng = np.random.default_rng(0)
    n = 200_000
    w = K.latent_weights(np.zeros(n), np.full(n, sigma), np.full(n, tau), rng.standard_normal(n), rng.uniform(size=n))
    psi = 1 / (2 * sigma * tau * (1 - tau))
    mean, var = 0.5 / (psi / 2), 0.5 / (psi / 2) ** 2
    assert abs(w.mean() - mean) < 4 * np.sqrt(var / n)


# -- location block --------------------------------------------------------------


def _location_posterior(chain):
    """Closed-form conditional of beta (random effects integrated) and of b_i given beta."""
    b = chain.bundle
    loc = b["location"]
    S = chain.state.cov["Sigma_b"]
    tt = chain.tau * (1 - chain.tau)
    c1 = (1 - 2 * chain.tau) / tt
    d = 2 * chain.sigma * chain.state.w / tt
    z = chain.y - c1 * chain.state.w
    P = np.eye(loc.p) / chain.priors.coef_var
    h = np.zeros(loc.p)
    for i in range(b.n_subjects):
        s = slice(b.offsets[i], b.offsets[i + 1])
        V = loc.Z[s] @ S @ loc.Z[s].T + np.diag(d[s])
        Vi = np.linalg.inv(V)
        P += loc.X[s].T @ Vi @ loc.X[s]
        h += loc.X[s].T @ Vi @ z[s]
    cov = np.linalg.inv(P)
    return cov @ h, cov


def test_collapsed_beta_draw_matches_closed_form():
    ds = O.toy_dataset(n_subjects=3, n_obs=5, seed=4)
    spec = ModelSpec("al", predictor(("1", "time"), ("1", "time"), "location"), predictor(("1",), (), "scale"), 0.3)
    chain = O.fixed_state_chain(spec, ds, seed=2, cov_value=0.4)
    mean, cov = _location_posterior(chain)
    n = 20_000
    draws = np.empty((n, 2))
    for k in range(n):
        chain.update_beta()
        draws[k] = chain.state.coef["beta"]
        chain._loc_cache = None
    se = np.sqrt(np.diag(cov) / n)
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * se)
    np.testing.assert_allclose(np.cov(draws.T), cov, rtol=0.05, atol=0.05 * np.sqrt(np.outer(np.diag(cov), np.diag(cov))).max())


def test_random_effect_draw_matches_closed_form():
    ds = O.toy_dataset(n_subjects=2, n_obs=5, seed=5)
    spec = ModelSpec("al", predictor(("1",), ("1", "time"), "location"), predictor(("1",), (), "scale"), 0.6)
    chain = O.fixed_state_chain(spec, ds, seed=3, cov_value=0.4)
    b = chain.bundle
    loc = b["location"]
    beta = chain.state.coef["beta"]
    tt = chain.tau * (1 - chain.tau)
    prec_obs = tt / (2 * chain.sigma * chain.state.w)
    z = chain.y - (1 - 2 * chain.tau) / tt * chain.state.w - loc.X @ beta
    n = 20_000
    draws = np.empty((n, 2, 2))
    for k in range(n):
        chain._loc_cache = None
        chain.update_b()
        draws[k] = chain.state.effects.b
    for i in range(2):
        s = slice(b.offsets[i], b.offsets[i + 1])
        P = loc.Z[s].T @ (prec_obs[s, None] * loc.Z[s]) + np.linalg.inv(chain.state.cov["Sigma_b"])
        cov = np.linalg.inv(P)
        mean = cov @ (loc.Z[s].T @ (prec_obs[s] * z[s]))
        assert np.all(np.abs(draws[:, i].mean(axis=0) - mean) < 4 * np.sqrt(np.diag(cov) / n))


def test_shift_move_leaves_likelihood_unchanged():
    ds = small_sim(n=6, m=5)
    chain = Chain(build_design(ds, simulation_spec("ALDRM")), QUICK, np.random.default_rng(0))
    for _ in range(5):
        chain.sweep()
    for part in ("scale", "skewness"):
        before = chain._segment_loglik().copy()
        eta_before = chain._eta(part)
        coef_before = chain.state.coef[{"scale": "xi", "skewness": "alpha"}[part]].copy()
        chain._shift(part)
        np.testing.assert_allclose(chain._eta(part), eta_before, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(chain._segment_loglik(), before, rtol=1e-12)
        assert not np.allclose(chain.state.coef[{"scale": "xi", "skewness": "alpha"}[part]], coef_before)


def test_shift_directions():
    ds = small_sim(n=6, m=5)
    chain = Chain(build_design(ds, simulation_spec("ALDRM")), QUICK, np.random.default_rng(0))
    # scale: intercept and time match random columns, x1 is a multiple of the random intercept
    fixed, A = chain._shift_maps["scale"]
    assert list(fixed) == [0, 1, 2]
    x1 = np.array([s.covariates["x1"] for s in ds.subjects])
    np.testing.assert_allclose(A[:, 0, 2], x1)
    np.testing.assert_allclose(A[:, :, 0], np.tile([1.0, 0.0], (6, 1)))
    # skewness has no fixed intercept; both subject covariates load on the random intercept
    fixed, A = chain._shift_maps["skewness"]
    assert list(fixed) == [0, 1]
    # location is sampled with the random effects integrated out, but the map is still found
    assert list(chain._shift_maps["location"][0]) == [0, 1, 2, 3, 4]


@pytest.mark.parametrize("part", ["scale", "skewness"])
def test_variance_component_moves(part):
    assert O.variance_component_tv(part, 10_000, seed=1) < 0.04


# -- covariance block --------------------------------------------------------------


def test_scalar_covariance_draw_moments():
    x, df, scale = O.iw_scalar_draws(20_000, seed=1)
    mean = scale / (df - 2)
    var = 2 * scale**2 / ((df - 2) ** 2 * (df - 4))
    assert abs(x.mean() - mean) < 4 * np.sqrt(var / x.size)


# -- log posterior ------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["ALDRM", "LSLQMM", "LQMM", "LSMM"])
def test_log_posterior_matches_reference(kind):
    family = "gaussian" if kind == "LSMM" else "al"
    ds = small_sim(n=5, m=4, family=family)
    spec = simulation_spec(kind, 0.4)
    chain = Chain(build_design(ds, spec), QUICK, np.random.default_rng(1))
    for _ in range(3):
        chain.sweep()
        assert chain.log_posterior() == pytest.approx(O.reference_log_posterior(chain), rel=1e-10)


def test_log_posterior_out_of_support():
    ds = small_sim(n=4, m=3)
    chain = Chain(build_design(ds, simulation_spec("ALDRM")), QUICK, np.random.default_rng(1))
    st = chain.state.copy()
    st.cov["Sigma_b"] = -np.eye(3)
    assert log_posterior(st, chain.bundle, chain.priors) == -np.inf


# -- driver -------------------------------------------------------------------------


def test_run_is_deterministic():
    ds = small_sim()
    a = run(ds, simulation_spec("ALDRM"), QUICK)
    b = run(ds, simulation_spec("ALDRM"), QUICK)
    np.testing.assert_array_equal(a.draws, b.draws)
    c = run(ds, simulation_spec("ALDRM"), SamplerConfig(**{**QUICK.to_dict(), "seed": 12}))
    assert not np.array_equal(a.draws, c.draws)


def test_chains_use_spawned_seeds_and_are_exchangeable():
    ds = small_sim()
    bundle = build_design(ds, simulation_spec("LSLQMM"))
    cfg = SamplerConfig(n_chains=3, n_iter=30, burn_in=10, thin=1, seed=5)
    sample = run(bundle, cfg=cfg)
    seeds = np.random.SeedSequence(5).spawn(3)
    for c in (2, 0):
        alone = _run_chain(bundle, cfg, c, seeds[c])[0]
        np.testing.assert_array_equal(alone, sample.draws[c])
    assert not np.array_equal(sample.draws[0], sample.draws[1])


def test_parallel_chains_match_serial():
    ds = small_sim(n=6, m=4)
    cfg = SamplerConfig(n_chains=2, n_iter=30, burn_in=10, thin=1, seed=3)
    serial = run(ds, simulation_spec("ALDRM"), cfg)
    parallel = run(ds, simulation_spec("ALDRM"), SamplerConfig(**{**cfg.to_dict(), "n_jobs": 2}))
    np.testing.assert_array_equal(serial.draws, parallel.draws)


def test_retained_draws_respect_support():
    ds = small_sim(n=10, m=5, seed=3)
    sample = run(ds, simulation_spec("ALDRM"), SamplerConfig(n_chains=2, n_iter=200, burn_in=50, thin=1, seed=1))
    assert sample.draws.shape == (2, 150, len(sample.names))
    assert np.all(np.isfinite(sample.draws))
    for c in range(2):
        for k in range(sample.draws.shape[1]):
            theta = unflatten(sample.draws[c, k], sample.spec)
            for S in (theta.Sigma_b, theta.Sigma_u, theta.Sigma_a):
                np.linalg.cholesky(S)


def test_keep_effects_and_effect_means():
    ds = small_sim(n=5, m=4)
    cfg = SamplerConfig(n_chains=2, n_iter=20, burn_in=10, thin=2, seed=0, keep_effects=True)
    s = run(ds, simulation_spec("ALDRM"), cfg)
    assert len(s.effects_draws) == 2 and len(s.effects_draws[0]) == cfg.n_keep
    pooled = np.mean([e.b for chain in s.effects_draws for e in chain], axis=0)
    np.testing.assert_allclose(s.effects_mean.b, pooled, rtol=1e-12)


def test_adaptation_stops_after_burn_in():
    ds = small_sim(n=5, m=4)
    cfg = SamplerConfig(n_chains=1, n_iter=40, burn_in=20, thin=1, seed=0)
    chain = Chain(build_design(ds, simulation_spec("ALDRM")), cfg, np.random.default_rng(0))
    start = {k: np.copy(v) for k, v in chain.state.mh_scales.items()}
    for _ in range(20):
        chain.sweep()
    frozen = {k: np.copy(v) for k, v in chain.state.mh_scales.items()}
    assert any(not np.array_equal(start[k], frozen[k]) for k in start)
    for _ in range(20):
        chain.sweep()
    for k in frozen:
        np.testing.assert_array_equal(chain.state.mh_scales[k], frozen[k])
    rates = chain.acceptance_rates()
    assert set(rates) == set(frozen) and all(0 <= r <= 1 for r in rates.values())


def test_initial_state():
    ds = small_sim(n=8, m=5)
    bundle = build_design(ds, simulation_spec("ALDRM"))
    st = initial_state(bundle, QUICK)
    ols = np.linalg.lstsq(bundle["location"].X, bundle.y, rcond=None)[0]
    np.testing.assert_allclose(st.coef["beta"], ols)
    np.testing.assert_array_equal(st.cov["Sigma_u"], 0.1 * np.eye(2))
    assert np.all(st.effects.b == 0) and np.all(st.coef["alpha"] == 0)
    assert np.all(st.w == st.w[0]) and st.w[0] == pytest.approx(np.exp(st.coef["xi"][0]))


@pytest.mark.parametrize("kw", [{"n_chains": 0}, {"burn_in": 50, "n_iter": 50}, {"thin": 0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SamplerConfig(**{"n_iter": 50, "burn_in": 10, **kw})


def test_run_gaussian_requires_gaussian_spec():
    with pytest.raises(ValueError):
        run_gaussian(small_sim(n=3, m=3), simulation_spec("ALDRM"))


def test_priors_roundtrip_from_dict():
    cfg = SamplerConfig(priors={"coef_var": 10.0})
    assert isinstance(cfg.priors, Priors) and cfg.priors.coef_var == 10.0


def test_lqmm_recovers_scale():
    # constant skewness 0.5, single scale: sigma is well identified
    ds = simgen.generate(simgen.Scenario(n=40, m=10, seed=9, tau_fixed=0.5))
    sample = run(ds, simulation_spec("LQMM"), SamplerConfig(n_chains=1, n_iter=600, burn_in=200, thin=2, seed=0))
    col = sample.column("sigma").ravel()
    assert col.min() > 0
    # the marginal scale mixes exp(xi0) with heterogeneity, so only check plausibility
    assert 0.2 < col.mean() < 2.0
