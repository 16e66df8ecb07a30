"""Multi-chain Metropolis-within-Gibbs sampler.

For the AL families each observation is augmented with a latent weight
``w_ij ~ Exp(mean sigma_ij)`` so that ``y_ij | w_ij`` is normal with mean
``mu_ij + c1(tau_ij) w_ij`` and variance ``c2(tau_ij) sigma_ij w_ij``. One sweep
updates, in this fixed order:

1. ``w``            exact GIG(1/2) draws (AL families only)
2. ``beta``         exact normal draw with the location random effects integrated out
3. ``b_i``          exact normal draws given ``beta``
4. ``(xi, u_i)``    random-walk MH on the fixed block, then on every subject block,
                    then an exact translation move along fixed columns that are
                    subject-wise multiples of a random column, then an MH move
                    rescaling each column of ``u`` together with ``Sigma_u``
5. ``(alpha, a_i)`` same as 4 for the skewness part (ALDRM only)
6. ``Sigma_*``      exact inverse-Wishart draws

The MH target in steps 4-5 is the augmented posterior. Proposal scales adapt
by Robbins-Monro during burn-in and are frozen afterwards. The Gaussian family
(LSMM) uses the same sweep without steps 1 and 5; ``sigma`` is then the
residual standard deviation.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit
from scipy.stats import invwishart

from . import _kernels as K
from .errors import SamplerError
from .modelspec import (
    ETA_BOUND,
    ParameterVector,
    RandomEffects,
    build_design,
    eval_params,
    flatten,
    parameter_names,
    part_symbols,
    unflatten,
)

LOG_2PI = float(np.log(2.0 * np.pi))
# approximate Fisher information per observation of each linear predictor,
# used only to shape random-walk proposals
# the rescaling move costs one likelihood pass, so it is cheap to repeat
RESCALE_REPEATS = 3
_INFO_PER_OBS = {("al", "scale"): 1.5, ("gaussian", "scale"): 2.0, ("al", "skewness"): 0.75}


@dataclass
class Priors:
    """Vague priors: ``N(coef_mean, coef_var I)`` on every coefficient vector and
    ``IW(dim + iw_df_extra, iw_scale I)`` on every covariance matrix."""

    coef_mean: float = 0.0
    coef_var: float = 100.0
    iw_df_extra: float = 1.0
    iw_scale: float = 0.01

    def iw_df(self, q):
        return q + self.iw_df_extra


@dataclass
class SamplerConfig:
    n_chains: int = 3
    n_iter: int = 40000
    burn_in: int = 10000
    thin: int = 10
    seed: int = 0
    priors: Priors = field(default_factory=Priors)
    adapt: bool = True
    n_jobs: int = 1
    keep_effects: bool = False

    def __post_init__(self):
        if isinstance(self.priors, dict):
            self.priors = Priors(**self.priors)
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def n_keep(self):
        return (self.n_iter - self.burn_in) // self.thin

    def to_dict(self):
        return asdict(self)


@dataclass
class ChainState:
    """Complete sampler state of one chain.

    ``coef`` maps ``beta``/``xi``/``alpha`` to coefficient vectors, ``cov`` maps
    ``Sigma_b``/``Sigma_u``/``Sigma_a`` to covariance matrices and ``effects``
    holds the per-subject random effects. ``mh_scales`` maps each MH block to its
    step size (a vector with one entry per subject for the subject blocks).
    """

    coef: dict
    cov: dict
    effects: RandomEffects
    w: np.ndarray
    mh_scales: dict
    iteration: int = 0

    def copy(self):
        return ChainState(
            coef={k: v.copy() for k, v in self.coef.items()},
            cov={k: v.copy() for k, v in self.cov.items()},
            effects=RandomEffects(**{k: None if v is None else v.copy() for k, v in vars(self.effects).items()}),
            w=None if self.w is None else self.w.copy(),
            mh_scales={k: np.copy(v) for k, v in self.mh_scales.items()},
            iteration=self.iteration,
        )

    def theta(self, spec):
        kw = {sym: self.coef.get(sym) for sym in ("beta", "xi", "alpha")}
        kw.update({sym: self.cov.get(sym) for sym in ("Sigma_b", "Sigma_u", "Sigma_a")})
        if spec.is_lqmm:
            kw["sigma_scalar"] = float(np.exp(np.clip(self.coef["xi"][0], -ETA_BOUND, ETA_BOUND)))
        return ParameterVector(**kw)


def _mvn_from_precision(rng, P, h):
    """Draw from ``N(P^{-1} h, P^{-1})``."""
    L = linalg.cholesky(P, lower=True)
    mean = linalg.cho_solve((L, True), h)
    return mean + linalg.solve_triangular(L.T, rng.standard_normal(h.size), lower=False)


def _batched_mvn_from_precision(rng, M, h):
    """Row-wise draws from ``N(M_i^{-1} h_i, M_i^{-1})`` for stacked ``M``."""
    L = np.linalg.cholesky(M)
    mean = np.linalg.solve(M, h[..., None])[..., 0]
    z = rng.standard_normal(h.shape)
    return mean + np.linalg.solve(np.swapaxes(L, -1, -2), z[..., None])[..., 0]


def _iw_logpdf(S, df, scale):
    q = S.shape[0]
    if q == 0:
        return 0.0
    try:
        return float(invwishart.logpdf(S, df=df, scale=scale))
    except (np.linalg.LinAlgError, ValueError):
        return -np.inf


def _mvn_zero_logpdf_rows(R, S):
    """Sum of ``log N(r_i; 0, S)`` over the rows of ``R``."""
    q = S.shape[0]
    if q == 0:
        return 0.0
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return -np.inf
    z = linalg.solve_triangular(L, R.T, lower=True)
    n = R.shape[0]
    return float(-0.5 * np.sum(z * z) - n * np.sum(np.log(np.diag(L))) - 0.5 * n * q * LOG_2PI)


def initial_state(bundle, cfg):
    """Deterministic, in-support starting point shared by all chains."""
    spec = bundle.spec
    loc = bundle["location"]
    beta, *_ = np.linalg.lstsq(loc.X, bundle.y, rcond=None)
    resid = bundle.y - loc.X @ beta
    if spec.family == "gaussian":
        scale0 = float(np.std(resid))
    else:
        t0 = spec.tau_fixed if spec.tau_fixed is not None else 0.5
        # E[rho_tau((Y - mu) / sigma)] = 1 under the AL distribution
        scale0 = float(np.mean(np.where(resid < 0, (t0 - 1.0) * resid, t0 * resid)))
    scale0 = max(scale0, 1e-8)
    sc = bundle["scale"]
    xi = np.zeros(sc.p)
    if "1" in sc.fixed_terms:
        xi[sc.fixed_terms.index("1")] = np.log(scale0)
    coef = {"beta": beta, "xi": xi}
    cov = {}
    for part in bundle.parts:
        c, s, _ = part_symbols(part)
        cov[s] = 0.1 * np.eye(bundle[part].q)
    if "skewness" in bundle:
        coef["alpha"] = np.zeros(bundle["skewness"].p)
    effects = RandomEffects.zeros(bundle)
    w = np.full(bundle.n_obs, scale0) if spec.family == "al" else None
    scales = {}
    for part in bundle.parts:
        if part == "location":
            continue
        d = bundle[part]
        c, s, e = part_symbols(part)
        if d.p:
            scales[c] = np.array(2.38 / np.sqrt(d.p))
        if d.q:
            scales[e] = np.full(bundle.n_subjects, 2.38 / np.sqrt(d.q))
            scales[s] = np.full(d.q, 0.1)
    return ChainState(coef=coef, cov=cov, effects=effects, w=w, mh_scales=scales)


def _shift_map(d, offsets):
    """Fixed columns that are subject-wise multiples of a random column.

    Returns ``(fixed_indices, A)`` with ``A[i, j, k]`` the multiple linking
    fixed column ``k`` to random column ``j`` in subject ``i``, or ``None``.
    """
    if not d.p or not d.q:
        return None
    n = len(offsets) - 1
    fixed_idx, loads = [], []
    for k in range(d.p):
        x = d.X[:, k]
        for j in range(d.q):
            z = d.Z[:, j]
            zz = np.add.reduceat(z * z, offsets[:-1])
            zx = np.add.reduceat(z * x, offsets[:-1])
            mult = np.divide(zx, zz, out=np.zeros(n), where=zz > 0)
            per_obs = np.repeat(mult, np.diff(offsets))
            if np.any(mult != 0) and np.allclose(x, per_obs * z, rtol=0, atol=1e-12 * max(1.0, np.abs(x).max())):
                col = np.zeros((n, d.q))
                col[:, j] = mult
                fixed_idx.append(k)
                loads.append(col)
                break
    if not fixed_idx:
        return None
    return np.array(fixed_idx), np.stack(loads, axis=2)


class Chain:
    """One Markov chain over a fixed design; owns its state and generator."""

    def __init__(self, bundle, cfg, rng, state=None):
        self.bundle = bundle
        self.spec = bundle.spec
        self.cfg = cfg
        self.priors = cfg.priors
        self.rng = rng
        self.al = self.spec.family == "al"
        self.state = state if state is not None else initial_state(bundle, cfg)
        self.offsets = np.ascontiguousarray(bundle.offsets, dtype=np.intp)
        self.subject = np.ascontiguousarray(bundle.subject, dtype=np.intp)
        self.y = np.ascontiguousarray(bundle.y, dtype=float)

        loc = bundle["location"]
        self._loc_buf = np.empty((bundle.n_obs, loc.p + loc.q + 1))
        self._loc_buf[:, : loc.p] = loc.X
        self._loc_buf[:, loc.p : loc.p + loc.q] = loc.Z
        self._zero_x = np.empty((bundle.n_obs, 0))
        self._zero_coef = np.empty(0)

        self._ztz = {}
        self._fixed_chol = {}
        for part in ("scale", "skewness"):
            if part not in bundle:
                continue
            d = bundle[part]
            info = _INFO_PER_OBS[(self.spec.family, part)]
            if d.q:
                self._ztz[part] = info * K.segment_gram(np.ascontiguousarray(d.Z), np.ones(bundle.n_obs), self.offsets)
            if d.p:
                prec = info * d.X.T @ d.X + np.eye(d.p) / self.priors.coef_var
                self._fixed_chol[part] = np.linalg.cholesky(np.linalg.inv(prec))
        self._shift_maps = {part: _shift_map(bundle[part], self.offsets) for part in bundle.parts}
        self.accept = {k: np.zeros(np.shape(v)) for k, v in self.state.mh_scales.items()}
        self.n_accept_steps = 0
        self._refresh()

    # -- cached predictors -------------------------------------------------

    def _eta(self, part, coef=None, effects=None):
        d = self.bundle[part]
        c, _, e = part_symbols(part)
        coef = self.state.coef[c] if coef is None else coef
        effects = getattr(self.state.effects, e) if effects is None else effects
        return K.linear_predictor(d.X, np.ascontiguousarray(coef), d.Z, np.ascontiguousarray(effects), self.subject)

    def _refresh(self):
        self.mu = self._eta("location")
        self.eta_scale = self._eta("scale")
        self.sigma = np.exp(np.clip(self.eta_scale, -ETA_BOUND, ETA_BOUND))
        if "skewness" in self.bundle:
            self.eta_skew = self._eta("skewness")
            self.tau = expit(np.clip(self.eta_skew, -ETA_BOUND, ETA_BOUND))
        elif self.al:
            self.tau = np.full(self.bundle.n_obs, self.spec.tau_fixed)
        else:
            self.tau = None

    def _segment_loglik(self, sigma=None, tau=None, with_weight_term=True):
        sigma = self.sigma if sigma is None else sigma
        resid = self.y - self.mu
        if not self.al:
            return K.segment_gauss_loglik(resid, sigma, self.offsets)
        tau = self.tau if tau is None else tau
        return K.segment_aug_loglik(resid, sigma, tau, self.state.w, self.offsets, with_weight_term)

    # -- exact Gibbs blocks ------------------------------------------------

    def update_w(self):
        if not self.al:
            return
        n = self.bundle.n_obs
        normals = self.rng.standard_normal(n)
        uniforms = self.rng.uniform(size=n)
        self.state.w = K.latent_weights(self.y - self.mu, self.sigma, self.tau, normals, uniforms)

    def _location_gram(self):
        loc = self.bundle["location"]
        if self.al:
            tt = self.tau * (1.0 - self.tau)
            c1 = (1.0 - 2.0 * self.tau) / tt
            prec = tt / (2.0 * self.sigma * self.state.w)
            self._loc_buf[:, -1] = self.y - c1 * self.state.w
        else:
            prec = 1.0 / (self.sigma * self.sigma)
            self._loc_buf[:, -1] = self.y
        G = K.segment_gram(self._loc_buf, prec, self.offsets)
        p, q = loc.p, loc.q
        return {
            "XX": G[:, :p, :p],
            "XZ": G[:, :p, p : p + q],
            "Xy": G[:, :p, -1],
            "ZZ": G[:, p : p + q, p : p + q],
            "Zy": G[:, p : p + q, -1],
        }

    def update_beta(self):
        """Draw ``beta`` from its conditional with the location random effects integrated out."""
        loc = self.bundle["location"]
        g = self._location_gram()
        pr = self.priors
        P = np.eye(loc.p) / pr.coef_var
        h = np.full(loc.p, pr.coef_mean / pr.coef_var)
        P = P + g["XX"].sum(axis=0)
        h = h + g["Xy"].sum(axis=0)
        if loc.q:
            M = g["ZZ"] + np.linalg.inv(self.state.cov["Sigma_b"])[None]
            ZX = np.swapaxes(g["XZ"], 1, 2)
            sol = np.linalg.solve(M, np.concatenate([ZX, g["Zy"][..., None]], axis=2))
            P = P - np.einsum("nij,njk->ik", g["XZ"], sol[..., :-1])
            h = h - np.einsum("nij,nj->i", g["XZ"], sol[..., -1])
            g["M"] = M
            g["ZX"] = ZX
        P = 0.5 * (P + P.T)
        self.state.coef["beta"] = _mvn_from_precision(self.rng, P, h)
        self._loc_cache = g
        if not loc.q:
            self.mu = self._eta("location")

    def update_b(self):
        """Draw every ``b_i`` given ``beta``."""
        loc = self.bundle["location"]
        if not loc.q:
            return
        g = getattr(self, "_loc_cache", None)
        if g is None or "M" not in g:
            g = self._location_gram()
            g["M"] = g["ZZ"] + np.linalg.inv(self.state.cov["Sigma_b"])[None]
            g["ZX"] = np.swapaxes(g["XZ"], 1, 2)
        rhs = g["Zy"] - np.einsum("nij,j->ni", g["ZX"], self.state.coef["beta"])
        self.state.effects.b = np.ascontiguousarray(_batched_mvn_from_precision(self.rng, g["M"], rhs))
        self._loc_cache = None
        self.mu = self._eta("location")

    def update_covariances(self):
        pr = self.priors
        n = self.bundle.n_subjects
        for part in self.bundle.parts:
            _, s, e = part_symbols(part)
            q = self.bundle[part].q
            if not q:
                continue
            R = getattr(self.state.effects, e)
            scale = pr.iw_scale * np.eye(q) + R.T @ R
            draw = invwishart.rvs(df=pr.iw_df(q) + n, scale=scale, random_state=self.rng)
            draw = np.atleast_2d(draw)
            try:
                np.linalg.cholesky(draw)
            except np.linalg.LinAlgError:
                raise SamplerError(f"{s} draw is not positive definite at iteration {self.state.iteration}") from None
            self.state.cov[s] = draw

    def _shift(self, part):
        """Exact draw along the directions shared by fixed and random coefficients.

        When fixed column ``k`` equals ``x_ik`` times random column ``j`` within
        every subject, adding ``delta`` to the fixed coefficient and subtracting
        ``delta * x_ik`` from each subject's random coefficient leaves the
        likelihood unchanged, so ``delta`` has a Gaussian conditional from the
        priors alone.
        """
        smap = self._shift_maps.get(part)
        if smap is None:
            return
        fixed_idx, A = smap  # A: (subjects, q, k) loadings of delta on each b_i
        c, s, e = part_symbols(part)
        pr = self.priors
        coef = self.state.coef[c]
        R = getattr(self.state.effects, e)
        Sinv = np.linalg.inv(self.state.cov[s])
        SA = np.einsum("ij,njk->nik", Sinv, A)
        P = np.eye(len(fixed_idx)) / pr.coef_var + np.einsum("nji,njk->ik", A, SA)
        h = (pr.coef_mean - coef[fixed_idx]) / pr.coef_var + np.einsum("nji,nj->i", SA, R)
        delta = _mvn_from_precision(self.rng, 0.5 * (P + P.T), h)
        coef[fixed_idx] += delta
        R -= np.einsum("njk,k->nj", A, delta)

    # -- Metropolis blocks -------------------------------------------------

    def _coef_logprior(self, v):
        pr = self.priors
        return -0.5 * np.sum((v - pr.coef_mean) ** 2) / pr.coef_var

    def _mh_part(self, part):
        d = self.bundle[part]
        c, s, e = part_symbols(part)
        st = self.state
        skew = part == "skewness"
        use_w = not skew

        def params_for(eta):
            eta = np.clip(eta, -ETA_BOUND, ETA_BOUND)
            return expit(eta) if skew else np.exp(eta)

        def loglik(value):
            if skew:
                return self._segment_loglik(tau=value, with_weight_term=False)
            return self._segment_loglik(sigma=value, with_weight_term=use_w)

        eta = self.eta_skew if skew else self.eta_scale
        current = self.tau if skew else self.sigma
        ll = loglik(current)

        # fixed coefficients: one joint random-walk proposal
        if d.p:
            coef = st.coef[c]
            step = st.mh_scales[c] * (self._fixed_chol[part] @ self.rng.standard_normal(d.p))
            prop = coef + step
            eta_p = eta + d.X @ step
            val_p = params_for(eta_p)
            ll_p = loglik(val_p)
            log_ratio = ll_p.sum() - ll.sum() + self._coef_logprior(prop) - self._coef_logprior(coef)
            ok = np.log(self.rng.uniform()) < log_ratio
            self._record(c, float(ok))
            if ok:
                st.coef[c] = prop
                eta, current, ll = eta_p, val_p, ll_p

        # subject blocks: independent proposals, accepted subject by subject
        if d.q:
            R = getattr(st.effects, e)
            Sinv = np.linalg.inv(st.cov[s])
            M = self._ztz[part] + Sinv[None]
            L = np.linalg.cholesky(M)
            z = self.rng.standard_normal(R.shape)
            step = np.linalg.solve(np.swapaxes(L, -1, -2), z[..., None])[..., 0]
            step *= st.mh_scales[e][:, None]
            prop = R + step
            eta_p = eta + K.linear_predictor(self._zero_x, self._zero_coef, d.Z, np.ascontiguousarray(step), self.subject)
            val_p = params_for(eta_p)
            ll_p = loglik(val_p)
            quad = lambda A: np.einsum("ni,ij,nj->n", A, Sinv, A)
            log_ratio = ll_p - ll - 0.5 * (quad(prop) - quad(R))
            ok = np.log(self.rng.uniform(size=R.shape[0])) < log_ratio
            self._record(e, ok.astype(float))
            R[ok] = prop[ok]
            take = ok[self.subject]
            eta = np.where(take, eta_p, eta)

        self._shift(part)
        if d.q:
            self._rescale(part, self._eta(part), params_for, loglik)
        # recompute from coefficients so the cache carries no rounding drift
        eta = self._eta(part)
        if skew:
            self.eta_skew, self.tau = eta, params_for(eta)
        else:
            self.eta_scale, self.sigma = eta, params_for(eta)

    def _rescale(self, part, eta, params_for, loglik):
        """Random-walk MH on a joint rescaling of one random-effect column and its covariance.

        Column ``j`` of the effects is multiplied by ``g`` and row/column ``j``
        of the covariance by ``g`` as well, which leaves the effects' normal
        density unchanged up to its determinant. Proposals are symmetric in
        ``log g``; the ratio carries the inverse-Wishart prior and the Jacobian.
        """
        d = self.bundle[part]
        _, s, e = part_symbols(part)
        st = self.state
        R = getattr(st.effects, e)
        S = st.cov[s]
        Sinv_diag = np.diag(np.linalg.inv(S)).copy()
        df = self.priors.iw_df(d.q)
        psi = self.priors.iw_scale
        ll = loglik(params_for(eta)).sum()
        ok = np.zeros(d.q)
        for j in np.tile(np.arange(d.q), RESCALE_REPEATS):
            lg = st.mh_scales[s][j] * self.rng.standard_normal()
            g = np.exp(lg)
            eta_p = eta + d.Z[:, j] * ((g - 1.0) * R[:, j])[self.subject]
            ll_p = loglik(params_for(eta_p)).sum()
            # IW log-density change plus the (q + 1) log g Jacobian of the covariance map
            log_ratio = ll_p - ll - df * lg - 0.5 * psi * Sinv_diag[j] * (np.exp(-2.0 * lg) - 1.0)
            if np.log(self.rng.uniform()) < log_ratio:
                ok[j] += 1.0 / RESCALE_REPEATS
                R[:, j] *= g
                S[j, :] *= g
                S[:, j] *= g
                Sinv_diag[j] /= g * g
                eta, ll = eta_p, ll_p
        self._record(s, ok)

    def update_scale_block(self):
        self._mh_part("scale")

    def update_skew_block(self):
        if "skewness" in self.bundle:
            self._mh_part("skewness")

    def _record(self, key, ok):
        st = self.state
        if st.iteration < self.cfg.burn_in:
            if self.cfg.adapt:
                target = 0.44 if self._block_dim(key) == 1 else 0.25
                gain = (st.iteration + 1) ** -0.6
                st.mh_scales[key] = st.mh_scales[key] * np.exp(gain * (ok - target))
        else:
            self.accept[key] = self.accept[key] + ok

    def _block_dim(self, key):
        for part in self.bundle.parts:
            c, _, e = part_symbols(part)
            if key == c:
                return self.bundle[part].p
            if key == e:
                return self.bundle[part].q
            if key == part_symbols(part)[1]:
                return 1
        raise KeyError(key)

    # -- driver --------------------------------------------------------------

    def sweep(self):
        try:
            self.update_w()
            self.update_beta()
            self.update_b()
            self.update_scale_block()
            self.update_skew_block()
            self.update_covariances()
        except np.linalg.LinAlgError as exc:
            raise SamplerError(f"Cholesky failure at iteration {self.state.iteration}: {exc}") from exc
        self.state.iteration += 1

    def log_posterior(self):
        return log_posterior(self.state, self.bundle, self.priors)

    def acceptance_rates(self):
        kept = max(self.state.iteration - self.cfg.burn_in, 0)
        if not kept:
            return {}
        return {k: float(np.mean(v) / kept) for k, v in self.accept.items()}

    def flat(self):
        """Current scalar parameters in canonical order."""
        return flatten(self.state.theta(self.spec), self.spec)


def log_posterior(state, bundle, priors):
    """Unnormalised log posterior of the (augmented, for AL) state.

    Returns ``-inf`` for out-of-support states.
    """
    spec = bundle.spec
    if spec.family == "al" and (state.w is None or np.any(state.w <= 0) or not np.all(np.isfinite(state.w))):
        return -np.inf
    mu, sigma, tau = eval_params(state.theta(spec), state.effects, bundle)
    offsets = np.ascontiguousarray(bundle.offsets, dtype=np.intp)
    resid = np.ascontiguousarray(bundle.y - mu)
    if spec.family == "al":
        lp = float(K.segment_aug_loglik(resid, sigma, tau, state.w, offsets, True).sum())
    else:
        lp = float(K.segment_gauss_loglik(resid, np.ascontiguousarray(sigma), offsets).sum())
    for part in bundle.parts:
        c, s, e = part_symbols(part)
        q = bundle[part].q
        coef = state.coef[c]
        lp += float(-0.5 * np.sum((coef - priors.coef_mean) ** 2) / priors.coef_var - 0.5 * coef.size * np.log(2 * np.pi * priors.coef_var))
        if q:
            S = state.cov[s]
            lp += _mvn_zero_logpdf_rows(getattr(state.effects, e), S)
            lp += _iw_logpdf(S, priors.iw_df(q), priors.iw_scale * np.eye(q))
    return lp if np.isfinite(lp) else -np.inf


# ---------------------------------------------------------------------------
# multi-chain driver
# ---------------------------------------------------------------------------


@dataclass
class PosteriorSample:
    """Retained draws of every scalar parameter for every chain.

    ``draws`` has shape ``(n_chains, n_keep, n_params)`` with columns named by
    ``names``. ``effects_mean`` holds posterior means of the subject random
    effects pooled over chains; ``effects_draws`` (optional) is a list, one per
    chain, of :class:`RandomEffects` stacked over retained iterations.
    """

    spec: object
    names: list
    labels: list
    draws: np.ndarray
    effects_mean: RandomEffects
    subject_ids: tuple
    config: SamplerConfig
    acceptance: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    effects_draws: list = None

    @property
    def n_chains(self):
        return self.draws.shape[0]

    def column(self, name):
        return self.draws[:, :, self.names.index(name)]

    def posterior_mean(self):
        return unflatten(self.draws.reshape(-1, self.draws.shape[2]).mean(axis=0), self.spec)


def _run_chain(bundle, cfg, chain_index, seed_seq):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    chain = Chain(bundle, cfg, rng)
    lp0 = chain.log_posterior()
    if not np.isfinite(lp0):
        raise SamplerError(f"non-finite log-posterior at initialization (chain {chain_index + 1})")
    names, _ = parameter_names(bundle.spec)
    out = np.empty((cfg.n_keep, len(names)))
    sums = {e: None for e in ("b", "u", "a")}
    kept_effects = [] if cfg.keep_effects else None
    k = 0
    t0 = time.perf_counter()
    for it in range(cfg.n_iter):
        try:
            chain.sweep()
        except SamplerError as exc:
            raise SamplerError(f"chain {chain_index + 1}: {exc}") from exc
        if it >= cfg.burn_in and (it - cfg.burn_in + 1) % cfg.thin == 0:
            out[k] = chain.flat()
            eff = chain.state.effects
            for e in sums:
                v = getattr(eff, e)
                if v is not None:
                    sums[e] = v.copy() if sums[e] is None else sums[e] + v
            if kept_effects is not None:
                kept_effects.append(RandomEffects(**{e: None if getattr(eff, e) is None else getattr(eff, e).copy() for e in sums}))
            k += 1
    elapsed = time.perf_counter() - t0
    means = {e: (None if v is None else v / max(k, 1)) for e, v in sums.items()}
    return out, means, chain.acceptance_rates(), elapsed, kept_effects


def run(dataset_or_bundle, spec=None, cfg=None):
    """Run ``cfg.n_chains`` independent chains and collect the retained draws.

    Deterministic given ``(cfg.seed, cfg, dataset)``: chain ``c`` uses the
    ``c``-th child of ``SeedSequence(cfg.seed)``.
    """
    cfg = cfg or SamplerConfig()
    if spec is None:
        bundle = dataset_or_bundle
        spec = bundle.spec
    else:
        bundle = build_design(dataset_or_bundle, spec)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_chains)
    if cfg.n_jobs > 1 and cfg.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.n_jobs, cfg.n_chains)) as ex:
            results = list(ex.map(_run_chain, [bundle] * cfg.n_chains, [cfg] * cfg.n_chains, range(cfg.n_chains), seeds))
    else:
        results = [_run_chain(bundle, cfg, c, s) for c, s in enumerate(seeds)]
    names, labels = parameter_names(spec)
    draws = np.stack([r[0] for r in results])
    mean_eff = {}
    for e in ("b", "u", "a"):
        vals = [r[1][e] for r in results]
        mean_eff[e] = None if vals[0] is None else np.mean(vals, axis=0)
    return PosteriorSample(
        spec=spec,
        names=names,
        labels=labels,
        draws=draws,
        effects_mean=RandomEffects(**mean_eff),
        subject_ids=bundle.subject_ids,
        config=cfg,
        acceptance=[r[2] for r in results],
        timings=[r[3] for r in results],
        effects_draws=[r[4] for r in results] if cfg.keep_effects else None,
    )


def run_gaussian(dataset, spec, cfg=None):
    """LSMM entry point; identical sweep without latent weights or skewness."""
    if spec.family != "gaussian":
        raise ValueError("run_gaussian needs a gaussian-family spec")
    return run(dataset, spec, cfg)
