"""Bayesian mixed-effects distributional regression under the asymmetric Laplace distribution."""

__version__ = "0.1.0"

from .aldist import ALParams, MixtureCoefficients  # noqa: E402
from .data import LongitudinalDataset, SubjectRecord, read_csv  # noqa: E402
from .diagnostics import PosteriorSummary, coverage_report, gelman_rubin, summarize  # noqa: E402
from .errors import AldrmError, DataError, DomainError, SamplerError, SpecError  # noqa: E402
from .modelspec import ModelSpec, ParameterVector, PredictorSpec, build_design, eval_params, parse_spec, simulation_spec  # noqa: E402
from .sampler import PosteriorSample, Priors, SamplerConfig, run, run_gaussian  # noqa: E402
from .selection import CriterionReport, FittedModel, QuantileSet, criterion, predictive_errors  # noqa: E402
from .simgen import Scenario, default_truth, generate, run_study  # noqa: E402

__all__ = [
    "ALParams",
    "MixtureCoefficients",
    "LongitudinalDataset",
    "SubjectRecord",
    "read_csv",
    "PosteriorSummary",
    "coverage_report",
    "gelman_rubin",
    "summarize",
    "AldrmError",
    "DataError",
    "DomainError",
    "SamplerError",
    "SpecError",
    "ModelSpec",
    "ParameterVector",
    "PredictorSpec",
    "build_design",
    "eval_params",
    "parse_spec",
    "simulation_spec",
    "PosteriorSample",
    "Priors",
    "SamplerConfig",
    "run",
    "run_gaussian",
    "CriterionReport",
    "FittedModel",
    "QuantileSet",
    "criterion",
    "predictive_errors",
    "Scenario",
    "default_truth",
    "generate",
    "run_study",
]
