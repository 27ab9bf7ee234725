"""Surrogate-based automatic calibration toolkit.

Pipeline: Latin hypercube design of simulator inputs, principal-component
reduction of stacked multi-field output, cross-validated Legendre
polynomial-chaos surrogates per retained component, Gaussian-likelihood
MAP/MLE optimization with learned per-field scales, and multi-chain MCMC
over the joint posterior.
"""

from autocal.design import DesignMatrix, ParameterSpace, lhs_sample
from autocal.exceptions import ConvergenceError, OptimizationError
from autocal.fields import (
    EnsembleOutput,
    FieldSchema,
    FieldSpec,
    Grid,
    RawField,
    StackedVector,
    build_schema,
)
from autocal.loss import CalibrationLoss, PriorConfig
from autocal.mcmc import McmcConfig, PosteriorSamples, run_chains
from autocal.optimize import CalibrationResult, OptimizerConfig, maximize
from autocal.polybasis import MultiIndexSet, build_index_set, eval_basis
from autocal.reduction import PcaReducer
from autocal.surrogate import HyperGrid, PceRegressor, SurrogateModel, fit_surrogate
from autocal.toy import ToyModel, ToyModelConfig, toy_generate_campaign

__version__ = "0.1.0"

__all__ = [
    "CalibrationLoss",
    "CalibrationResult",
    "ConvergenceError",
    "DesignMatrix",
    "EnsembleOutput",
    "FieldSchema",
    "FieldSpec",
    "Grid",
    "HyperGrid",
    "McmcConfig",
    "MultiIndexSet",
    "OptimizationError",
    "OptimizerConfig",
    "ParameterSpace",
    "PcaReducer",
    "PceRegressor",
    "PosteriorSamples",
    "PriorConfig",
    "RawField",
    "StackedVector",
    "SurrogateModel",
    "ToyModel",
    "ToyModelConfig",
    "build_index_set",
    "build_schema",
    "eval_basis",
    "fit_surrogate",
    "lhs_sample",
    "maximize",
    "run_chains",
    "toy_generate_campaign",
]
