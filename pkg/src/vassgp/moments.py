"""Closed-form Gaussian expectations of the trigonometric design matrix.

For lambda ~ N(mu, Sigma) and fixed vectors t1, t2,

    E[cos(t1'l) cos(t2'l)] = 1/2 [nu- cos(t-'mu) + nu+ cos(t+'mu)]
    E[sin(t1'l) sin(t2'l)] = 1/2 [nu- cos(t-'mu) - nu+ cos(t+'mu)]
    E[sin(t1'l) cos(t2'l)] = 1/2 [nu- sin(t-'mu) + nu+ sin(t+'mu)]

with t- = t1 - t2, t+ = t1 + t2 and nu = exp(-1/2 t' Sigma t).
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GaussianLaw",
    "SpectralBasis",
    "DesignCache",
    "trig_moments",
    "expected_design",
    "expected_gram",
    "expected_point_moments",
    "damping",
]

# exp(-745) is below the smallest subnormal double
_UNDERFLOW = 745.0


@dataclass(frozen=True)
class GaussianLaw:
    mu: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        if mu.ndim != 1 or Sigma.shape != (mu.size, mu.size):
            raise ValueError(
                f"GaussianLaw shape mismatch: mu {mu.shape}, Sigma {Sigma.shape}"
            )
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(Sigma))):
            raise ValueError("GaussianLaw parameters must be finite")
        scale = max(1.0, float(np.abs(Sigma).max()))
        if (np.abs(Sigma - Sigma.T).max() > 1e-10 * scale
                or np.linalg.eigvalsh(0.5 * (Sigma + Sigma.T)).min() < -1e-12 * scale):
            raise ValueError("Sigma must be symmetric positive semidefinite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", Sigma)

    @property
    def dim(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class SpectralBasis:
    """m spectral points s_r (rows of S), drawn from N(0, I_d).

    The squared exponential covariance sigma^2 exp(-h' Lambda h / 2) has
    spectral density N(0, Lambda^-1 / 4 pi^2); the lengthscales enter the
    features through (s_r * x)' lambda, so S itself stays standard normal.
    """

    S: np.ndarray

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        if S.shape[0] < 1 or not np.all(np.isfinite(S)):
            raise ValueError("SpectralBasis needs at least one finite row")
        object.__setattr__(self, "S", S)

    @property
    def m(self) -> int:
        return self.S.shape[0]

    @property
    def d(self) -> int:
        return self.S.shape[1]

    @classmethod
    def draw(cls, m: int, d: int, rng: np.random.Generator) -> "SpectralBasis":
        return cls(rng.standard_normal((m, d)))


def damping(T: np.ndarray, Sigma: np.ndarray) -> np.ndarray:
    """exp(-1/2 t' Sigma t) over the last axis of T, flushed to 0 on underflow."""
    d = T.shape[-1]
    Tf = T.reshape(-1, d)
    expo = 0.5 * np.einsum("ij,ij->i", Tf @ Sigma, Tf).reshape(T.shape[:-1])
    out = np.zeros_like(expo)
    ok = expo <= _UNDERFLOW
    out[ok] = np.exp(-expo[ok])
    return out


def _check_law(law: GaussianLaw, d: int) -> None:
    if law.dim != d:
        raise ValueError(f"dimension mismatch: law has d={law.dim}, inputs have d={d}")


def trig_moments(t1, t2, law: GaussianLaw):
    """(coscos, sinsin, sincos, cos1, sin1) for a single pair of vectors."""
    t1 = np.atleast_1d(np.asarray(t1, dtype=float))
    t2 = np.atleast_1d(np.asarray(t2, dtype=float))
    if t1.shape != t2.shape or t1.ndim != 1:
        raise ValueError(f"t1 {t1.shape} and t2 {t2.shape} must be equal-length vectors")
    _check_law(law, t1.size)
    tm, tp = t1 - t2, t1 + t2
    num, nup, nu1 = damping(np.stack([tm, tp, t1]), law.Sigma)
    am, ap, a1 = tm @ law.mu, tp @ law.mu, t1 @ law.mu
    coscos = 0.5 * (num * np.cos(am) + nup * np.cos(ap))
    sinsin = 0.5 * (num * np.cos(am) - nup * np.cos(ap))
    sincos = 0.5 * (num * np.sin(am) + nup * np.sin(ap))
    return float(coscos), float(sinsin), float(sincos), float(nu1 * np.cos(a1)), float(nu1 * np.sin(a1))


class DesignCache:
    """Per-fit products t_ir = s_r * x_i and their pairwise sums/differences.

    The t arrays are read-only after construction (the only mutable part is
    a one-entry memo of the pairwise moments, so share across threads only
    with care); shapes are (n, m, d) for T and
    (n, m, m, d) for the pairwise arrays.
    """

    def __init__(self, X: np.ndarray, basis: SpectralBasis):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != basis.d:
            raise ValueError(
                f"dimension mismatch: X has d={X.shape[1]}, basis has d={basis.d}"
            )
        self.X = X
        self.basis = basis
        self._key = None
        self._second = None
        self.T = X[:, None, :] * basis.S[None, :, :]
        # t- and t+ for r <= l only, stacked so one BLAS call covers both;
        # t-_lr = -t-_rl and t+_lr = t+_rl give the remaining pairs
        self._iu = np.triu_indices(basis.m)
        Tr, Tl = self.T[:, self._iu[0], :], self.T[:, self._iu[1], :]
        self._Tmp = np.stack([Tr - Tl, Tr + Tl])
        for a in (self.T, self._Tmp):
            a.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @functools.cached_property
    def Tm(self) -> np.ndarray:
        """t-_irl = t_ir - t_il, shape (n, m, m, d)."""
        out = self.T[:, :, None, :] - self.T[:, None, :, :]
        out.setflags(write=False)
        return out

    @functools.cached_property
    def Tp(self) -> np.ndarray:
        """t+_irl = t_ir + t_il, shape (n, m, m, d)."""
        out = self.T[:, :, None, :] + self.T[:, None, :, :]
        out.setflags(write=False)
        return out

    def _full(self, upper: np.ndarray, sign: float = 1.0) -> np.ndarray:
        m = self.basis.m
        r, l = self._iu
        out = np.empty((upper.shape[0], m, m))
        out[:, r, l] = upper
        out[:, l, r] = sign * upper
        return out

    @property
    def m(self) -> int:
        return self.basis.m

    def first(self, law: GaussianLaw):
        """Damping factors and phases for E_q(Z): each (n, m)."""
        _check_law(law, self.basis.d)
        ph = (self.T.reshape(-1, self.basis.d) @ law.mu).reshape(self.T.shape[:-1])
        return damping(self.T, law.Sigma), ph

    def second(self, law: GaussianLaw):
        """Damped pairwise trig terms, each (n, m, m):

        nu- cos(t-'mu), nu- sin(t-'mu), nu+ cos(t+'mu), nu+ sin(t+'mu).
        The most recent result is memoised.
        """
        _check_law(law, self.basis.d)
        key = (law.mu.tobytes(), law.Sigma.tobytes())
        if key != self._key:
            nu = damping(self._Tmp, law.Sigma)
            ph = (self._Tmp.reshape(-1, self.basis.d) @ law.mu).reshape(nu.shape)
            c, s = nu * np.cos(ph), nu * np.sin(ph)
            self._second = (self._full(c[0]), self._full(s[0], -1.0),
                            self._full(c[1]), self._full(s[1]))
            self._key = key
        return self._second

    def design(self, law: GaussianLaw) -> np.ndarray:
        nu, a = self.first(law)
        return np.concatenate([nu * np.cos(a), nu * np.sin(a)], axis=1)

    def gram_blocks(self, law: GaussianLaw):
        """Per-point blocks, each (n, m, m).

        P = E[cos_r cos_l], Q = E[cos_r sin_l], R = E[sin_r sin_l]; Q is the
        upper-right (cos rows, sin columns) block of E_q(Z_i Z_i').
        """
        cm, sm, cp, sp = self.second(law)
        return 0.5 * (cm + cp), 0.5 * (sp - sm), 0.5 * (cm - cp)

    def gram(self, law: GaussianLaw) -> np.ndarray:
        cm, sm, cp, sp = (b.sum(axis=0) for b in self.second(law))
        P, Q, R = 0.5 * (cm + cp), 0.5 * (sp - sm), 0.5 * (cm - cp)
        return np.block([[P, Q], [Q.T, R]])


def expected_design(X, basis: SpectralBasis, law: GaussianLaw) -> np.ndarray:
    """E_q(Z), shape (n, 2m): damped cosines then damped sines."""
    return DesignCache(X, basis).design(law)


def expected_gram(X, basis: SpectralBasis, law: GaussianLaw) -> np.ndarray:
    """E_q(Z'Z) = sum_i E_q(Z_i Z_i'), shape (2m, 2m)."""
    return DesignCache(X, basis).gram(law)


def expected_point_moments(x_star, basis: SpectralBasis, law: GaussianLaw):
    """E_q(Z*) and the outer-product moment E_q(Z* Z*') at one query point."""
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    if x_star.ndim != 1:
        raise ValueError("x_star must be a vector")
    cache = DesignCache(x_star[None, :], basis)
    return cache.design(law)[0], cache.gram(law)
