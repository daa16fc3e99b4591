"""Seeded synthetic datasets: model-true, piecewise nonstationary, irrelevant dims."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset

__all__ = ["SyntheticSpec", "GroundTruth", "generate", "features"]


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 200
    d: int = 2
    m_true: int = 20
    lambda_true: tuple = (2.0, 0.5)
    sigma_true: float = 1.0
    gamma_true: float = 0.1
    nonstationary: str = "none"      # none | piecewise | irrelevant_dims
    irrelevant: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.m_true < 1:
            raise ValueError("n, d, m_true must be positive")
        if len(self.lambda_true) != self.d:
            raise ValueError(f"lambda_true has {len(self.lambda_true)} entries, d = {self.d}")
        if self.sigma_true <= 0 or self.gamma_true < 0:
            raise ValueError("sigma_true must be > 0 and gamma_true >= 0")
        if self.nonstationary not in ("none", "piecewise", "irrelevant_dims"):
            raise ValueError(f"unknown scenario {self.nonstationary!r}")


@dataclass(frozen=True)
class GroundTruth:
    """Everything needed to rebuild y from X: y = amp * Z alpha + noise_scale * eps."""

    S: np.ndarray
    lam: np.ndarray
    alpha: np.ndarray
    eps: np.ndarray
    amplitude: np.ndarray
    noise_scale: np.ndarray
    relevant: int = field(default=0)

    def signal(self, X) -> np.ndarray:
        X = np.atleast_2d(X)[:, : self.relevant]
        return features(X, self.S, self.lam) @ self.alpha


def features(X, S, lam) -> np.ndarray:
    """Z with rows [cos((s_r * x)' lam) ..., sin((s_r * x)' lam) ...]."""
    ph = (np.asarray(X)[:, None, :] * S[None, :, :]) @ np.asarray(lam)
    return np.concatenate([np.cos(ph), np.sin(ph)], axis=1)


def generate(spec: SyntheticSpec):
    """Return (X_raw, y_raw, truth). Pass through Dataset.from_raw to fit."""
    rng = np.random.default_rng(spec.seed)
    m, d = spec.m_true, spec.d
    S = rng.standard_normal((m, d))
    alpha = rng.normal(0.0, spec.sigma_true / np.sqrt(m), size=2 * m)
    X = rng.uniform(-1.0, 1.0, size=(spec.n, d))
    eps = rng.standard_normal(spec.n)
    lam = np.asarray(spec.lambda_true, dtype=float)
    f = features(X, S, lam) @ alpha

    amp = np.ones(spec.n)
    noise = np.full(spec.n, spec.gamma_true)
    if spec.nonstationary == "piecewise":
        # left half nearly flat and quiet, right half 10x amplitude and noise
        left = X[:, 0] < 0.0
        amp = np.where(left, 0.1, 1.0)
        noise = np.where(left, 0.1 * spec.gamma_true, spec.gamma_true)
    y = amp * f + noise * eps

    if spec.nonstationary == "irrelevant_dims":
        X = np.hstack([X, rng.uniform(0.0, 1.0, size=(spec.n, spec.irrelevant))])
    truth = GroundTruth(S, lam, alpha, eps, amp, noise, relevant=d)
    return X, y, truth


def generate_dataset(spec: SyntheticSpec, rescale: bool = False):
    X, y, truth = generate(spec)
    return Dataset.from_raw(X, y, rescale=rescale), truth


def split(X, y, n_test: int, seed: int):
    """Seeded random train/test split of rows."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(y))
    te, tr = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    return (X[tr], y[tr]), (X[te], y[te])
