"""Second-order statistics of motion-compensated prediction residuals.

A stochastic video model with closed-form autocorrelations of MC-coding
residuals and MC frame-interpolation errors, a synthesizer that renders
video following the model, a block-matching engine, Monte Carlo oracles and
an experiment CLI.
"""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    AutocorrMap,
    CodingScenario,
    DomainError,
    EmpiricalRD,
    ExplicitMSE,
    FrucScenario,
    GaussianRD,
    ModelParams,
    Uncompressed,
    coding_acf_map,
    coding_residual_acf,
    coding_residual_variance,
    fruc_acf_map,
    fruc_error_acf,
    fruc_mse,
    fruc_mse_half,
)

__all__ = [
    "AutocorrMap",
    "CodingScenario",
    "DomainError",
    "EmpiricalRD",
    "ExplicitMSE",
    "FrucScenario",
    "GaussianRD",
    "ModelParams",
    "Uncompressed",
    "coding_acf_map",
    "coding_residual_acf",
    "coding_residual_variance",
    "fruc_acf_map",
    "fruc_error_acf",
    "fruc_mse",
    "fruc_mse_half",
]
