"""Posterior predictive moments and the NMSE / MNLP scores."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .moments import DesignCache, SpectralBasis, expected_point_moments
from .quadrature import log_H
from .vmp import Priors, VariationalState

__all__ = [
    "Prediction",
    "InsufficientDataError",
    "DegenerateMetricError",
    "noise_floor",
    "predictive",
    "predict_many",
    "nmse",
    "mnlp",
]

LOG_2PI = math.log(2.0 * math.pi)


class InsufficientDataError(ValueError):
    """The predictive variance needs H(n - 4, ...), i.e. n >= 5."""


class DegenerateMetricError(ValueError):
    """NMSE denominator is zero."""


@dataclass(frozen=True)
class Prediction:
    mean: float       # original target units
    variance: float   # squared target units


def noise_floor(C_gamma: float, n: int, A_gamma: float) -> float:
    """E_q(gamma^2) = H(n-4, C, A^2) / H(n-2, C, A^2)."""
    if n < 5:
        raise InsufficientDataError(f"predictive variance needs n >= 5, got n = {n}")
    A2 = A_gamma ** 2
    return math.exp(log_H(n - 4, C_gamma, A2) - log_H(n - 2, C_gamma, A2))


def predictive(state: VariationalState, basis: SpectralBasis, data: Dataset,
               x_star_raw, priors: Priors) -> Prediction:
    """Predictive mean and variance at one raw (untransformed) input."""
    floor = noise_floor(state.C_gamma, data.n, priors.A_gamma)
    x = data.transform(np.asarray(x_star_raw, dtype=float))
    EZ, EZZ = expected_point_moments(x, basis, state.lam)
    mu_a = state.mu_alpha
    M = state.second_moment_alpha()
    mean_c = float(EZ @ mu_a)
    var = floor + float(np.sum(M * EZZ)) - mean_c ** 2
    return Prediction(mean_c + data.y_mean, var)


def predict_many(state: VariationalState, basis: SpectralBasis, data: Dataset,
                 X_star_raw, priors: Priors, chunk: int = 256):
    """Vectorised :func:`predictive` over rows; returns (means, variances)."""
    floor = noise_floor(state.C_gamma, data.n, priors.A_gamma)
    X = np.atleast_2d(data.transform(np.atleast_2d(np.asarray(X_star_raw, dtype=float))))
    m = basis.m
    M = state.second_moment_alpha()
    A, B, D = M[:m, :m], M[m:, :m], M[m:, m:]
    means = np.empty(X.shape[0])
    quad = np.empty(X.shape[0])
    law = state.lam
    for lo in range(0, X.shape[0], chunk):
        cache = DesignCache(X[lo:lo + chunk], basis)
        EZ = cache.design(law)
        cm, sm, cp, sp = cache.second(law)
        # tr(M E[Z Z']) written out over the cos/sin blocks
        tr = 0.5 * (np.einsum("qrl,rl->q", cm, A + D)
                    + np.einsum("qrl,rl->q", cp, A - D)
                    + 2.0 * np.einsum("qrl,rl->q", sm + sp, B))
        means[lo:lo + chunk] = EZ @ state.mu_alpha
        quad[lo:lo + chunk] = tr
    var = floor + quad - means ** 2
    return means + data.y_mean, var


def _unpack(predictions):
    if isinstance(predictions, tuple) and len(predictions) == 2 and np.ndim(predictions[0]) == 1:
        mu, var = predictions
    else:
        mu = [p.mean for p in predictions]
        var = [p.variance for p in predictions]
    return np.asarray(mu, dtype=float), np.asarray(var, dtype=float)


def nmse(predictions, y_star, y_train_mean: float) -> float:
    """sum (y* - mu*)^2 / sum (y* - ybar)^2 with ybar the training target mean."""
    mu, _ = _unpack(predictions)
    y_star = np.asarray(y_star, dtype=float)
    if mu.shape != y_star.shape or y_star.size < 1:
        raise ValueError("predictions and targets must be non-empty and equal length")
    den = float(np.sum((y_star - y_train_mean) ** 2))
    if den == 0.0:
        raise DegenerateMetricError("all test targets equal the training mean")
    return float(np.sum((y_star - mu) ** 2)) / den


def mnlp(predictions, y_star) -> float:
    """Mean Gaussian negative log predictive density, log(2 pi) included."""
    mu, var = _unpack(predictions)
    y_star = np.asarray(y_star, dtype=float)
    if mu.shape != y_star.shape or y_star.size < 1:
        raise ValueError("predictions and targets must be non-empty and equal length")
    if np.any(~(var > 0)):
        raise ValueError("predictive variances must be positive")
    return float(0.5 * np.mean((y_star - mu) ** 2 / var + np.log(var) + LOG_2PI))
