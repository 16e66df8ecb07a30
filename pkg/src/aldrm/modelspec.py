"""Model specifications, design matrices and distribution-parameter evaluation.

Four model families share one description:

* ALDRM  - AL likelihood, location/scale/skewness all regressed (identity/log/logit links)
* LSLQMM - AL likelihood with fixed skewness, regressed location and scale
* LQMM   - AL likelihood with fixed skewness and a single scalar scale
* LSMM   - Gaussian likelihood with regressed mean and log standard deviation

Spec file grammar (one ``key = value`` per line, ``#`` starts a comment)::

    family = al                      # al | gaussian
    location.fixed = 1, time, time2, x1, x2
    location.random = 1, time, time2
    scale.fixed = 1, time, x1
    scale.random = 1, time
    skewness = fixed:0.5             # or the two lines below
    skewness.fixed = x1, x2
    skewness.random = 1, time

Terms are ``1`` (intercept), ``time``, ``time2`` (squared time) or a covariate
name. Empty right-hand sides are allowed for ``*.random`` and mean "no terms".
"""

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import DataError, SpecError

ETA_BOUND = 15.0
PARTS = ("location", "scale", "skewness")
LINKS = {"location": "identity", "scale": "log", "skewness": "logit"}

_TERM_ALIASES = {
    "1": "1",
    "intercept": "1",
    "time": "time",
    "t": "time",
    "time2": "time2",
    "time^2": "time2",
    "time²": "time2",
    "t2": "time2",
}


def canonical_term(term):
    term = term.strip()
    return _TERM_ALIASES.get(term.lower(), term)


@dataclass(frozen=True)
class PredictorSpec:
    fixed_terms: tuple = ()
    random_terms: tuple = ()
    link: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "fixed_terms", tuple(canonical_term(t) for t in self.fixed_terms))
        object.__setattr__(self, "random_terms", tuple(canonical_term(t) for t in self.random_terms))
        for terms in (self.fixed_terms, self.random_terms):
            if len(set(terms)) != len(terms):
                raise SpecError(f"duplicate term in {terms}")
        if self.link not in ("identity", "log", "logit"):
            raise SpecError(f"unknown link '{self.link}'")

    @property
    def shared_terms(self):
        """Terms present in both the fixed and random lists."""
        return tuple(t for t in self.fixed_terms if t in self.random_terms)


@dataclass(frozen=True)
class ModelSpec:
    """Family plus one predictor per distribution parameter.

    ``skewness`` is either a float (fixed tau) or a :class:`PredictorSpec`;
    it is ``None`` for the Gaussian family.
    """

    family: str
    location: PredictorSpec
    scale: PredictorSpec
    skewness: object = None

    def __post_init__(self):
        if self.family not in ("al", "gaussian"):
            raise SpecError(f"unknown family '{self.family}'")
        if not self.location.fixed_terms:
            raise SpecError("location part needs at least one fixed term")
        if not self.scale.fixed_terms:
            raise SpecError("scale part needs at least one fixed term")
        if self.location.link != "identity" or self.scale.link != "log":
            raise SpecError("location uses the identity link and scale the log link")
        if self.family == "gaussian":
            if self.skewness is not None:
                raise SpecError("the gaussian family has no skewness component")
        elif isinstance(self.skewness, PredictorSpec):
            if self.skewness.link != "logit":
                raise SpecError("skewness uses the logit link")
            if not (self.skewness.fixed_terms or self.skewness.random_terms):
                raise SpecError("modelled skewness needs at least one term")
        else:
            if self.skewness is None:
                raise SpecError("the al family needs a skewness value or predictor")
            tau = float(self.skewness)
            if not 0.0 < tau < 1.0:
                raise SpecError(f"fixed skewness must lie in (0, 1), got {tau}")
            object.__setattr__(self, "skewness", tau)

    @property
    def tau_fixed(self):
        return self.skewness if isinstance(self.skewness, float) else None

    @property
    def models_skewness(self):
        return isinstance(self.skewness, PredictorSpec)

    @property
    def is_lqmm(self):
        return (
            self.family == "al"
            and self.tau_fixed is not None
            and self.scale.fixed_terms == ("1",)
            and not self.scale.random_terms
        )

    @property
    def kind(self):
        if self.family == "gaussian":
            return "LSMM"
        if self.models_skewness:
            return "ALDRM"
        return "LQMM" if self.is_lqmm else "LSLQMM"

    def parts(self):
        """Modelled predictor parts, in sweep order."""
        out = {"location": self.location, "scale": self.scale}
        if self.models_skewness:
            out["skewness"] = self.skewness
        return out

    def terms(self):
        names = set()
        for p in self.parts().values():
            names.update(p.fixed_terms)
            names.update(p.random_terms)
        return names


def predictor(fixed=(), random=(), part="location"):
    return PredictorSpec(tuple(fixed), tuple(random), LINKS[part])


# ---------------------------------------------------------------------------
# spec files
# ---------------------------------------------------------------------------


def _split_terms(value):
    value = value.strip()
    if not value or value.lower() in ("none", "-"):
        return ()
    return tuple(t.strip() for t in value.split(",") if t.strip())


def parse_spec(text):
    """Parse the plain-text key/value spec format (see module docstring)."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"expected 'key = value', got '{raw.strip()}'", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key in entries:
            raise SpecError(f"duplicate key '{key}'", lineno)
        entries[key] = (value, lineno)

    allowed = {"family", "skewness"} | {f"{p}.{k}" for p in PARTS for k in ("fixed", "random")}
    for key, (_, lineno) in entries.items():
        if key not in allowed:
            raise SpecError(f"unknown key '{key}'", lineno)

    family, family_line = entries.pop("family", ("al", None))
    family = family.lower()
    if family not in ("al", "gaussian"):
        raise SpecError(f"unknown family '{family}'", family_line)

    def part(name, required):
        fixed = entries.get(f"{name}.fixed")
        random = entries.get(f"{name}.random")
        if fixed is None and random is None:
            if required:
                raise SpecError(f"missing '{name}.fixed'")
            return None
        return predictor(
            _split_terms(fixed[0]) if fixed else (),
            _split_terms(random[0]) if random else (),
            name,
        )

    location = part("location", True)
    scale = part("scale", False) or predictor(("1",), (), "scale")
    skew_value = entries.get("skewness")
    skew_pred = part("skewness", False)
    if skew_value is not None and skew_pred is not None:
        raise SpecError("give either 'skewness = fixed:<tau>' or skewness.* lines, not both", skew_value[1])
    if family == "gaussian":
        if skew_value is not None or skew_pred is not None:
            raise SpecError("the gaussian family has no skewness component")
        skewness = None
    elif skew_pred is not None:
        skewness = skew_pred
    elif skew_value is not None:
        value, lineno = skew_value
        v = value.lower()
        if v.startswith("fixed:"):
            v = v[len("fixed:"):]
        try:
            skewness = float(v)
        except ValueError:
            raise SpecError(f"cannot parse skewness '{value}'", lineno) from None
        if not 0.0 < skewness < 1.0:
            raise SpecError(f"fixed skewness must lie in (0, 1), got {skewness}", lineno)
    else:
        raise SpecError("the al family needs 'skewness = fixed:<tau>' or skewness.* lines")
    return ModelSpec(family, location, scale, skewness)


def load_spec(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec file {path}: {exc}") from exc
    return parse_spec(text)


def format_spec(spec):
    """Inverse of :func:`parse_spec`."""
    lines = [f"family = {spec.family}"]
    for name, p in (("location", spec.location), ("scale", spec.scale)):
        lines.append(f"{name}.fixed = {', '.join(p.fixed_terms)}")
        lines.append(f"{name}.random = {', '.join(p.random_terms)}")
    if spec.models_skewness:
        lines.append(f"skewness.fixed = {', '.join(spec.skewness.fixed_terms)}")
        lines.append(f"skewness.random = {', '.join(spec.skewness.random_terms)}")
    elif spec.tau_fixed is not None:
        lines.append(f"skewness = fixed:{spec.tau_fixed!r}")
    return "\n".join(lines) + "\n"


def simulation_spec(kind="ALDRM", tau=0.5):
    """Predictor structure of the simulation design for each model family."""
    location = predictor(("1", "time", "time2", "x1", "x2"), ("1", "time", "time2"), "location")
    scale = predictor(("1", "time", "x1"), ("1", "time"), "scale")
    kind = kind.upper()
    if kind == "ALDRM":
        return ModelSpec("al", location, scale, predictor(("x1", "x2"), ("1", "time"), "skewness"))
    if kind == "LSLQMM":
        return ModelSpec("al", location, scale, tau)
    if kind == "LSMM":
        return ModelSpec("gaussian", location, scale)
    if kind == "LQMM":
        return ModelSpec("al", location, predictor(("1",), (), "scale"), tau)
    raise SpecError(f"unknown model kind '{kind}'")


def application_spec():
    """ALDRM structure of the blood-pressure application (age standardized, sex 0/1)."""
    return ModelSpec(
        "al",
        predictor(("1", "time", "time2", "age", "sex"), ("1", "time", "time2"), "location"),
        predictor(("1", "time", "age"), ("1", "time"), "scale"),
        predictor(("age", "sex"), ("1", "time"), "skewness"),
    )


# ---------------------------------------------------------------------------
# design matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PartDesign:
    """Fixed (``X``) and random (``Z``) design rows of one distribution parameter."""

    fixed_terms: tuple
    random_terms: tuple
    X: np.ndarray
    Z: np.ndarray
    link: str

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def q(self):
        return self.Z.shape[1]

    @property
    def shared(self):
        """``(fixed_index, random_index)`` pairs of identical columns."""
        return tuple(
            (i, self.random_terms.index(t)) for i, t in enumerate(self.fixed_terms) if t in self.random_terms
        )


@dataclass(frozen=True)
class DesignBundle:
    spec: ModelSpec
    subject_ids: tuple
    subject: np.ndarray  # subject index of every observation
    offsets: np.ndarray  # n_subjects + 1 segment boundaries
    time: np.ndarray
    y: np.ndarray
    parts: dict = field(default_factory=dict)

    @property
    def n_obs(self):
        return self.y.size

    @property
    def n_subjects(self):
        return self.offsets.size - 1

    def __getitem__(self, name):
        return self.parts[name]

    def __contains__(self, name):
        return name in self.parts


def term_column(term, time, cov, cov_names):
    if term == "1":
        return np.ones_like(time)
    if term == "time":
        return time.copy()
    if term == "time2":
        return time * time
    if term in cov_names:
        return cov[:, cov_names.index(term)].copy()
    raise DataError(f"unknown covariate '{term}' (available: {', '.join(cov_names) or 'none'})")


def build_design(dataset, spec):
    """Per-observation design rows of every modelled distribution parameter."""
    if dataset.n_subjects == 0:
        raise DataError("empty dataset")
    subject, time, y = dataset.stacked()
    cov_names = dataset.covariate_names
    cov = dataset.covariate_matrix()[subject] if cov_names else np.empty((y.size, 0))
    parts = {}
    for name, pred in spec.parts().items():
        X = np.column_stack([term_column(t, time, cov, cov_names) for t in pred.fixed_terms]) if pred.fixed_terms else np.empty((y.size, 0))
        Z = np.column_stack([term_column(t, time, cov, cov_names) for t in pred.random_terms]) if pred.random_terms else np.empty((y.size, 0))
        for a in (X, Z):
            a.setflags(write=False)
        parts[name] = PartDesign(pred.fixed_terms, pred.random_terms, np.ascontiguousarray(X), np.ascontiguousarray(Z), pred.link)
    for a in (subject, time, y):
        a.setflags(write=False)
    return DesignBundle(
        spec=spec,
        subject_ids=tuple(s.id for s in dataset.subjects),
        subject=subject.astype(np.intp),
        offsets=dataset.offsets(),
        time=time,
        y=y,
        parts=parts,
    )


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass
class ParameterVector:
    """Population parameters ``(beta, Sigma_b, xi, Sigma_u, alpha, Sigma_a)``.

    For the LQMM the scale is the single positive ``sigma_scalar`` and ``xi`` is
    unused. Covariance matrices are empty ``(0, 0)`` arrays when a part has no
    random terms; skewness entries are ``None`` when skewness is not modelled.
    """

    beta: np.ndarray
    Sigma_b: np.ndarray
    xi: np.ndarray = None
    Sigma_u: np.ndarray = None
    alpha: np.ndarray = None
    Sigma_a: np.ndarray = None
    sigma_scalar: float = None

    def __post_init__(self):
        for name in ("beta", "xi", "alpha"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.atleast_1d(np.asarray(v, dtype=float)))
        for name in ("Sigma_b", "Sigma_u", "Sigma_a"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                setattr(self, name, v.reshape(int(round(np.sqrt(v.size))), -1) if v.size else np.zeros((0, 0)))


# coefficient / covariance / effect names per part
_PART_SYMBOLS = {
    "location": ("beta", "Sigma_b", "b"),
    "scale": ("xi", "Sigma_u", "u"),
    "skewness": ("alpha", "Sigma_a", "a"),
}


def part_symbols(part):
    return _PART_SYMBOLS[part]


def cov_index_pairs(q):
    """Canonical order of covariance entries: diagonal first, then upper off-diagonal."""
    return [(i, i) for i in range(q)] + [(i, j) for i in range(q) for j in range(i + 1, q)]


def parameter_names(spec):
    """Canonical scalar parameter names with their ``part:term`` labels.

    Indices are 1-based, e.g. ``beta[2]`` or ``Sigma_b[1,2]``.
    """
    names, labels = [], []
    for part, pred in spec.parts().items():
        coef, cov, _ = part_symbols(part)
        if part == "scale" and spec.is_lqmm:
            names.append("sigma")
            labels.append("scale:sigma")
            continue
        for k, t in enumerate(pred.fixed_terms):
            names.append(f"{coef}[{k + 1}]")
            labels.append(f"{part}:{t}")
        for i, j in cov_index_pairs(len(pred.random_terms)):
            names.append(f"{cov}[{i + 1},{j + 1}]")
            ti, tj = pred.random_terms[i], pred.random_terms[j]
            labels.append(f"{part}:var({ti})" if i == j else f"{part}:cov({ti},{tj})")
    return names, labels


def flatten(theta, spec):
    """ParameterVector -> 1-D array in :func:`parameter_names` order."""
    out = []
    for part, pred in spec.parts().items():
        coef, cov, _ = part_symbols(part)
        if part == "scale" and spec.is_lqmm:
            out.append(float(theta.sigma_scalar))
            continue
        out.extend(np.asarray(getattr(theta, coef), dtype=float).tolist())
        S = getattr(theta, cov)
        out.extend(S[i, j] for i, j in cov_index_pairs(len(pred.random_terms)))
    return np.array(out, dtype=float)


def unflatten(values, spec):
    """Inverse of :func:`flatten`."""
    values = np.asarray(values, dtype=float)
    expected = len(parameter_names(spec)[0])
    if values.size != expected:
        raise ValueError(f"expected {expected} values, got {values.size}")
    pos = 0
    kw = {}
    for part, pred in spec.parts().items():
        coef, cov, _ = part_symbols(part)
        q = len(pred.random_terms)
        if part == "scale" and spec.is_lqmm:
            kw["sigma_scalar"] = float(values[pos])
            kw["xi"] = np.array([np.log(values[pos])])
            kw["Sigma_u"] = np.zeros((0, 0))
            pos += 1
            continue
        p = len(pred.fixed_terms)
        kw[coef] = values[pos : pos + p].copy()
        pos += p
        S = np.zeros((q, q))
        for i, j in cov_index_pairs(q):
            S[i, j] = S[j, i] = values[pos]
            pos += 1
        kw[cov] = S
    return ParameterVector(**kw)


@dataclass
class RandomEffects:
    """Per-subject random effects, one ``(n_subjects, q)`` array per part."""

    b: np.ndarray
    u: np.ndarray = None
    a: np.ndarray = None

    @classmethod
    def zeros(cls, bundle):
        n = bundle.n_subjects
        kw = {}
        for part, (_, _, sym) in _PART_SYMBOLS.items():
            kw[sym] = np.zeros((n, bundle[part].q)) if part in bundle else None
        return cls(**kw)


def clamp_eta(eta):
    return np.clip(eta, -ETA_BOUND, ETA_BOUND)


def inverse_link(eta, link):
    if link == "identity":
        return eta
    if link == "log":
        return np.exp(clamp_eta(eta))
    if link == "logit":
        return expit(clamp_eta(eta))
    raise SpecError(f"unknown link '{link}'")


def linear_predictor(part, coef, effects, subject):
    eta = part.X @ coef
    if part.q:
        eta = eta + np.einsum("ij,ij->i", part.Z, effects[subject])
    return eta


def eval_params(theta, effects, bundle, obs_index=None):
    """Distribution parameters ``(mu, sigma, tau)`` at every (or the selected) observation.

    ``tau`` is ``None`` for the Gaussian family, where ``sigma`` is the standard
    deviation. Scale and skewness predictors are clamped to ``|eta| <= 15``.
    """
    spec = bundle.spec
    subject = bundle.subject
    mu = linear_predictor(bundle["location"], theta.beta, effects.b, subject)
    if spec.is_lqmm:
        sigma = np.full(bundle.n_obs, float(theta.sigma_scalar))
    else:
        sigma = inverse_link(linear_predictor(bundle["scale"], theta.xi, effects.u, subject), "log")
    if spec.family == "gaussian":
        tau = None
    elif spec.models_skewness:
        tau = inverse_link(linear_predictor(bundle["skewness"], theta.alpha, effects.a, subject), "logit")
    else:
        tau = np.full(bundle.n_obs, spec.tau_fixed)
    if obs_index is not None:
        mu, sigma = mu[obs_index], sigma[obs_index]
        tau = None if tau is None else tau[obs_index]
    return mu, sigma, tau


def with_skewness(spec, skewness):
    return replace(spec, skewness=skewness)
