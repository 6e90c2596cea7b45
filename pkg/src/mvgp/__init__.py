"""Multivariate Gaussian processes: matrix-normal laws, d-variate processes,
pre-Brownian motion and multi-output regression."""

from .kernels import Family, KernelSpec
from .linalg import DegenerateCovarianceError, NotPositiveDefiniteError
from .matnorm import Axis, AxisPartition, Block, MatrixNormal, MultivariateNormalSpec
from .mvgpr import FitConfig, MvgprModel, PredictiveDistribution, TrainingSet
from .process import MeanFunction, MultivariateGP, PathEnsemble

__version__ = "0.1.0"

__all__ = [
    "Axis",
    "AxisPartition",
    "Block",
    "DegenerateCovarianceError",
    "Family",
    "FitConfig",
    "KernelSpec",
    "MatrixNormal",
    "MeanFunction",
    "MultivariateGP",
    "MultivariateNormalSpec",
    "MvgprModel",
    "NotPositiveDefiniteError",
    "PathEnsemble",
    "PredictiveDistribution",
    "TrainingSet",
]
