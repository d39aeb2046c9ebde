"""Generalised Wishart process models for input-dependent covariance."""

from ._core import (
    DegenerateError,
    DomainError,
    Error,
    FitError,
    Kernel,
    ParseError,
    SchemaError,
    SingularMatrixError,
    WishartModel,
    __version__,
    dynamics_test,
    fit_dcc_garch,
    fit_mcmc,
    fit_smc,
    fit_vi,
    generate_sim1,
    generate_sim2,
    mean_path,
    mse_mean_path,
    psrf,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
