"""Training data container with the centering/rescaling it was built with."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Dataset", "DegenerateColumnWarning"]


class DegenerateColumnWarning(UserWarning):
    """An input column has zero range; it is mapped to all zeros."""


@dataclass(frozen=True)
class Dataset:
    """Inputs X (n, d) and centered targets y (n,).

    ``lo``/``hi`` are the per-column raw minima/maxima used to map inputs to
    [-1, 1]; both are ``None`` when no rescaling was applied.
    """

    X: np.ndarray
    y: np.ndarray
    y_mean: float = 0.0
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.size:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.size} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("Dataset must not contain missing or non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y_mean", float(self.y_mean))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def y_raw(self) -> np.ndarray:
        return self.y + self.y_mean

    @classmethod
    def from_raw(cls, X_raw, y_raw, rescale: bool = True, dropped: int = 0) -> "Dataset":
        X_raw = np.atleast_2d(np.asarray(X_raw, dtype=float))
        y_raw = np.asarray(y_raw, dtype=float).reshape(-1)
        if y_raw.size == 0:
            raise ValueError("empty dataset")
        lo = hi = None
        X = X_raw
        if rescale:
            lo = X_raw.min(axis=0)
            hi = X_raw.max(axis=0)
            X = _rescale(X_raw, lo, hi, warn=True)
        y_mean = float(y_raw.mean())
        return cls(X, y_raw - y_mean, y_mean, lo, hi, dropped)

    def transform(self, X_raw) -> np.ndarray:
        """Map raw inputs with the training transform (never refit)."""
        X_raw = np.asarray(X_raw, dtype=float)
        single = X_raw.ndim == 1
        X_raw = np.atleast_2d(X_raw)
        if X_raw.shape[1] != self.d:
            raise ValueError(f"expected {self.d} input columns, got {X_raw.shape[1]}")
        out = X_raw if self.lo is None else _rescale(X_raw, self.lo, self.hi)
        return out[0] if single else out

    def subset(self, idx, recenter: bool = True) -> "Dataset":
        """Rows ``idx``; targets re-centered on their own mean when ``recenter``."""
        idx = np.asarray(idx, dtype=int)
        y_raw = self.y_raw[idx]
        y_mean = float(y_raw.mean()) if recenter else self.y_mean
        return Dataset(self.X[idx], y_raw - y_mean, y_mean, self.lo, self.hi)


def _rescale(X, lo, hi, warn=False):
    span = hi - lo
    flat = span <= 0
    if warn and np.any(flat):
        warnings.warn(
            f"columns {np.flatnonzero(flat).tolist()} are constant; mapped to 0",
            DegenerateColumnWarning,
            stacklevel=3,
        )
    safe = np.where(flat, 1.0, span)
    out = 2.0 * (X - lo) / safe - 1.0
    return np.where(flat, 0.0, out)
