"""Mixtures of hidden truncation hyperbolic factor analyzers."""

from .evaluation import adjusted_rand_index, confusion_matrix
from .exceptions import (
    ComponentCollapseError,
    ConstraintViolation,
    DegenerateLikelihoodError,
    DegenerateTruncationError,
    DomainError,
    FitFailure,
    NonSPDError,
    SchemaVersionError,
    UnsupportedDimensionError,
)
from .fit import (
    FitConfig,
    FitResult,
    MixtureModel,
    bic,
    fit,
    grid_search,
    observed_log_likelihood,
    responsibilities,
    sample_mixture,
)
from .hthfa import FactorComponentParams, check_constraints, derive_component, hthfa_log_density
from .io import DataSet, load_csv, load_model, save_model, split_semisupervised, standardize

__version__ = "0.1.0"
