"""Brute-force cross-checks for the closed forms.

Nothing here calls into :mod:`vassgp.moments`, :mod:`vassgp.quadrature` or
the bound/gradient code of :mod:`vassgp.vmp`; basis functions are evaluated
by direct trigonometry on sampled lengthscales, and the scale densities are
normalised on a grid rather than through ``log_H``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import mpmath
import numpy as np
from scipy import stats

__all__ = [
    "OracleReport",
    "sample_gaussian",
    "mc_trig_moment",
    "central_difference",
    "fd_gradient",
    "ScaleSampler",
    "mc_elbo",
    "mc_predictive",
    "hp_log_H",
]

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class OracleReport:
    estimate: float
    std_error: float
    n_samples: int
    seed: int

    def __post_init__(self):
        if not self.std_error >= 0:
            raise ValueError("std_error must be nonnegative")

    def agrees(self, value: float, k: float = 4.0, slack: float = 1e-12) -> bool:
        """|value - estimate| <= k standard errors (plus rounding slack)."""
        return abs(value - self.estimate) <= k * self.std_error + slack * (1 + abs(value))


def _report(samples: np.ndarray, seed: int) -> OracleReport:
    n = samples.size
    se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return OracleReport(float(samples.mean()), se, n, seed)


def sample_gaussian(mu, Sigma, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draws from N(mu, Sigma); Sigma may be singular (eigen square root)."""
    mu = np.asarray(mu, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    w, V = np.linalg.eigh(0.5 * (Sigma + Sigma.T))
    root = V * np.sqrt(np.clip(w, 0.0, None))
    return mu + rng.standard_normal((size, mu.size)) @ root.T


class _Accumulator:
    """Running sums for mean and standard error over chunks."""

    def __init__(self, k: int):
        self.s = np.zeros(k)
        self.s2 = np.zeros(k)
        self.n = 0

    def add(self, block: np.ndarray):
        self.s += block.sum(axis=0)
        self.s2 += (block * block).sum(axis=0)
        self.n += block.shape[0]

    def reports(self, seed: int):
        mean = self.s / self.n
        var = np.clip(self.s2 / self.n - mean ** 2, 0.0, None) * self.n / max(self.n - 1, 1)
        se = np.sqrt(var / self.n)
        return tuple(OracleReport(float(a), float(b), self.n, seed) for a, b in zip(mean, se))


def mc_trig_moment(t1, t2, mu, Sigma, n_samples: int = 10 ** 6, seed: int = 0,
                   chunk: int = 250_000):
    """MC estimates of (coscos, sinsin, sincos, cos1, sin1) as OracleReports."""
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    rng = np.random.default_rng(seed)
    acc = _Accumulator(5)
    done = 0
    while done < n_samples:
        b = min(chunk, n_samples - done)
        lam = sample_gaussian(mu, Sigma, b, rng)
        a1, a2 = lam @ t1, lam @ t2
        c1, s1, c2, s2 = np.cos(a1), np.sin(a1), np.cos(a2), np.sin(a2)
        acc.add(np.column_stack([c1 * c2, s1 * s2, s1 * c2, c1, s1]))
        done += b
    return acc.reports(seed)


# -- finite differences ----------------------------------------------------

def central_difference(f, x0, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at array ``x0`` (any shape)."""
    if not 1e-7 <= step <= 1e-3:
        raise ValueError("step must lie in [1e-7, 1e-3]")
    x0 = np.array(x0, dtype=float)
    g = np.empty(x0.size)
    flat = x0.reshape(-1)
    for j in range(flat.size):
        xp, xm = flat.copy(), flat.copy()
        xp[j] += step
        xm[j] -= step
        g[j] = (f(xp.reshape(x0.shape)) - f(xm.reshape(x0.shape))) / (2.0 * step)
    return g.reshape(x0.shape)


def fd_gradient(functional, state, selector: str, step: float = 1e-5) -> np.ndarray:
    """Gradient of ``functional(state)`` w.r.t. the field named ``selector``.

    For symmetric matrix fields each free entry (a, b), a <= b, is perturbed
    symmetrically and the result is returned as the matrix G with
    dL = sum_ab G_ab dS_ab for symmetric dS, i.e. off-diagonal entries are
    halved.
    """
    names = {f.name for f in fields(state)}
    if selector not in names:
        raise KeyError(f"{selector!r} is not a field of {type(state).__name__}")
    x0 = np.asarray(getattr(state, selector), dtype=float)

    if x0.ndim == 2:
        d = x0.shape[0]
        iu = np.triu_indices(d)

        def f(v):
            S = np.zeros((d, d))
            S[iu] = v
            S = S + np.triu(S, 1).T
            return functional(replace(state, **{selector: S}))

        g = central_difference(f, x0[iu], step)
        G = np.zeros((d, d))
        G[iu] = g
        off = np.triu(G, 1) / 2.0
        return np.diag(np.diag(G)) + off + off.T

    def f(v):
        val = float(v) if x0.ndim == 0 else v
        return functional(replace(state, **{selector: val}))

    return central_difference(f, x0, step)


# -- scale densities -------------------------------------------------------

class ScaleSampler:
    """Inverse-CDF sampler for s with density ~ s^-p exp(-C/s^2) / (A^2 + s^2).

    The unnormalised density is tabulated on ``grid`` log-spaced points over
    [1e-6, 1e6] * sqrt(C/p) and the CDF is inverted by monotone linear
    interpolation in log s.
    """

    def __init__(self, p: float, C: float, A: float, grid: int = 4096):
        if not (C > 0 and p > 1 and A > 0):
            raise ValueError(f"cannot build a grid for p={p}, C={C}, A={A}")
        centre = math.sqrt(C / p)
        self.p, self.C, self.A = p, C, A
        self.logs = np.linspace(math.log(1e-6 * centre), math.log(1e6 * centre), grid)
        s = np.exp(self.logs)
        logf = self.log_unnormalised(s)
        top = logf.max()
        if not np.isfinite(top):
            raise ValueError("scale density grid is degenerate")
        # integrate in log s: ds = s d(log s)
        w = np.exp(logf - top) * s
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(self.logs))])
        self.log_norm = float(top + math.log(cdf[-1]))
        self.cdf = cdf / cdf[-1]

    def log_unnormalised(self, s):
        s = np.asarray(s, dtype=float)
        return -self.C / (s * s) - self.p * np.log(s) - np.log(self.A ** 2 + s * s)

    def logpdf(self, s):
        return self.log_unnormalised(s) - self.log_norm

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.uniform(size=size)
        return np.exp(np.interp(u, self.cdf, self.logs))


def _features(X, S, lam):
    """Z for each sampled lam: (N, n, 2m) by direct trigonometry."""
    ph = np.einsum("ik,rk,sk->sir", X, S, lam)
    return np.concatenate([np.cos(ph), np.sin(ph)], axis=-1)


def mc_elbo(state, data, basis, priors, n_samples: int = 10 ** 5, seed: int = 0,
            entropy: str = "mc", chunk: int = 20_000) -> OracleReport:
    """MC estimate of E_q log p(y, theta) - E_q log q(theta).

    ``entropy`` controls the q(lambda) term: "mc" (sampled), "analytic"
    (closed-form Gaussian entropy, no sampling noise) or "none" (omitted).
    Intended for desk-scale instances (n <= 50, m <= 5).
    """
    if entropy not in ("mc", "analytic", "none"):
        raise ValueError(f"unknown entropy mode {entropy!r}")
    n, m = data.n, basis.m
    X, y, S = data.X, data.y, basis.S
    rng = np.random.default_rng(seed)
    q_sigma = ScaleSampler(2 * m, state.C_sigma, priors.A_sigma)
    q_gamma = ScaleSampler(n, state.C_gamma, priors.A_gamma)
    q_alpha = stats.multivariate_normal(state.mu_alpha, state.Sigma_alpha)
    q_lam = stats.multivariate_normal(state.mu_lambda, state.Sigma_lambda)
    p_lam = stats.multivariate_normal(priors.mu_lambda0, priors.Sigma_lambda0)
    const = 0.0
    if entropy == "analytic":
        const = float(q_lam.entropy())

    def log_half_cauchy(s, A):
        return math.log(2.0 * A / math.pi) - np.log(A * A + s * s)

    vals = []
    done = 0
    while done < n_samples:
        b = min(chunk, n_samples - done)
        alpha = sample_gaussian(state.mu_alpha, state.Sigma_alpha, b, rng)
        lam = sample_gaussian(state.mu_lambda, state.Sigma_lambda, b, rng)
        sig = q_sigma.sample(b, rng)
        gam = q_gamma.sample(b, rng)
        Z = _features(X, S, lam)
        resid = y[None, :] - np.einsum("sij,sj->si", Z, alpha)
        lp = (-0.5 * n * LOG_2PI - n * np.log(gam) - 0.5 * np.sum(resid ** 2, 1) / gam ** 2
              - m * LOG_2PI - 2 * m * np.log(sig) + m * math.log(m)
              - 0.5 * m * np.sum(alpha ** 2, 1) / sig ** 2
              + np.atleast_1d(p_lam.logpdf(lam))
              + log_half_cauchy(sig, priors.A_sigma) + log_half_cauchy(gam, priors.A_gamma))
        lq = (np.atleast_1d(q_alpha.logpdf(alpha)) + q_sigma.logpdf(sig) + q_gamma.logpdf(gam))
        if entropy == "mc":
            lq = lq + np.atleast_1d(q_lam.logpdf(lam))
        vals.append(lp - lq)
        done += b
    rep = _report(np.concatenate(vals), seed)
    return replace(rep, estimate=rep.estimate + const)


def mc_predictive(state, basis, data, x_star_raw, priors, n_samples: int = 10 ** 5,
                  seed: int = 0, chunk: int = 50_000):
    """(mean, variance) reports for y* simulated from q(alpha) q(lambda) q(gamma)."""
    rng = np.random.default_rng(seed)
    x = data.transform(np.asarray(x_star_raw, dtype=float).reshape(-1))[None, :]
    q_gamma = ScaleSampler(data.n, state.C_gamma, priors.A_gamma)
    draws = []
    done = 0
    while done < n_samples:
        b = min(chunk, n_samples - done)
        alpha = sample_gaussian(state.mu_alpha, state.Sigma_alpha, b, rng)
        lam = sample_gaussian(state.mu_lambda, state.Sigma_lambda, b, rng)
        gam = q_gamma.sample(b, rng)
        f = np.einsum("sj,sj->s", _features(x, basis.S, lam)[:, 0, :], alpha)
        draws.append(f + gam * rng.standard_normal(b))
        done += b
    ys = np.concatenate(draws) + data.y_mean
    mean = _report(ys, seed)
    sq = (ys - ys.mean()) ** 2
    var = _report(sq, seed)
    return mean, var


# -- high-precision quadrature ---------------------------------------------

def hp_log_H(p, q, r, dps: int = 40) -> float:
    """log of int_0^inf x^(p+2) exp(-q x^2) / (1 + r x^2) dx in mpmath.

    Integrates over s = log x with breakpoints around the peak of the
    log-integrand, which is located by bisection.
    """
    with mpmath.workdps(dps):
        p, q, r = mpmath.mpf(p), mpmath.mpf(q), mpmath.mpf(r)

        def h(s):
            e2 = mpmath.exp(2 * s)
            return (p + 3) * s - q * e2 - mpmath.log1p(r * e2)

        def dh(s):
            e2 = mpmath.exp(2 * s)
            return (p + 3) - 2 * q * e2 - 2 * r * e2 / (1 + r * e2)

        # dh is decreasing; bracket its root by stepping outwards
        lo, hi = mpmath.mpf(-1), mpmath.mpf(1)
        while dh(lo) < 0:
            lo *= 2
        while dh(hi) > 0:
            hi *= 2
        for _ in range(200):
            mid = (lo + hi) / 2
            if dh(mid) > 0:
                lo = mid
            else:
                hi = mid
        s0 = (lo + hi) / 2
        h0 = h(s0)
        w = 1 / mpmath.sqrt(p + 3)
        # truncate where the integrand has fallen by e^-200 (the tails are
        # monotone); an infinite upper limit makes exp(-q e^2s) intractable
        ends = []
        for sign in (-1, 1):
            k = 1
            while h(s0 + sign * k * w) - h0 > -200:
                k *= 2
            ends.append(s0 + sign * k * w)
        inner = [s0 + k * w for k in (-16, -4, -1, 0, 1, 4, 16)]
        pts = [ends[0]] + [x for x in inner if ends[0] < x < ends[1]] + [ends[1]]
        val = mpmath.quad(lambda s: mpmath.exp(h(s) - h0), pts)
        return float(h0 + mpmath.log(val))
