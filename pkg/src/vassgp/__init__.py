"""Sparse spectrum GP regression by adaptive nonconjugate variational message passing."""
from .adaptive import fit_adaptive
from .data import Dataset, DegenerateColumnWarning
from .fitting import GlobalFit, fit_global, select_basis
from .moments import (GaussianLaw, SpectralBasis, expected_design, expected_gram,
                      expected_point_moments, trig_moments)
from .neighborhood import NeighborhoodSpec, batch_local_predict, knn, local_predict
from .predict import Prediction, mnlp, nmse, predict_many, predictive
from .quadrature import QuadratureError, log_H
from .synthetic import SyntheticSpec, generate
from .vmp import (FitConfig, FitResult, NotSPDError, Priors, VariationalState, fit_vmp,
                  lower_bound, spd_guard)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DegenerateColumnWarning", "GaussianLaw", "SpectralBasis", "Priors",
    "VariationalState", "FitConfig", "FitResult", "NotSPDError", "QuadratureError",
    "Prediction", "NeighborhoodSpec", "SyntheticSpec", "GlobalFit",
    "log_H", "trig_moments", "expected_design", "expected_gram", "expected_point_moments",
    "fit_vmp", "fit_adaptive", "lower_bound", "spd_guard", "select_basis", "fit_global",
    "predictive", "predict_many", "nmse", "mnlp", "knn", "local_predict",
    "batch_local_predict", "generate",
]
