"""Oracle cross-checks runnable from the command line.

Each check returns (name, passed, detail). ``quick`` shrinks sample sizes and
instance counts so the whole set runs in a few seconds; the pass thresholds
are the same in both modes.
"""
from __future__ import annotations

import itertools

import numpy as np

from .adaptive import fit_adaptive
from .data import Dataset
from .moments import GaussianLaw, SpectralBasis, trig_moments
from .oracle import fd_gradient, hp_log_H, mc_elbo, mc_trig_moment
from .quadrature import log_H
from .synthetic import SyntheticSpec, generate
from .vmp import FitConfig, Priors, Problem, VariationalState

__all__ = ["random_law", "random_state", "run_checks"]


def random_law(d: int, rng: np.random.Generator, scale: float = 0.3) -> GaussianLaw:
    G = rng.normal(scale=scale, size=(d, d))
    return GaussianLaw(rng.normal(size=d), G @ G.T + 0.05 * np.eye(d))


def random_state(m: int, d: int, rng: np.random.Generator) -> VariationalState:
    """A valid but unconverged state (SPD covariances, positive scales)."""
    Ga = rng.normal(scale=0.2, size=(2 * m, 2 * m))
    Gl = rng.normal(scale=0.3, size=(d, d))
    return VariationalState(
        mu_alpha=rng.normal(scale=0.5, size=2 * m),
        Sigma_alpha=Ga @ Ga.T + 0.1 * np.eye(2 * m),
        mu_lambda=rng.normal(size=d),
        Sigma_lambda=Gl @ Gl.T + 0.1 * np.eye(d),
        C_sigma=float(rng.uniform(0.5, 5.0)),
        C_gamma=float(rng.uniform(0.5, 5.0)),
    )


def _instance(n, d, m, seed):
    lam = tuple(np.linspace(1.5, 0.5, d))
    X, y, _ = generate(SyntheticSpec(n=n, d=d, m_true=m, lambda_true=lam, seed=seed))
    data = Dataset.from_raw(X, y)
    basis = SpectralBasis.draw(m, d, np.random.default_rng(seed + 1))
    return data, basis, Priors.isotropic(d)


def check_trig_moments(quick, seed):
    rng = np.random.default_rng(seed)
    count, samples = (10, 10 ** 5) if quick else (100, 10 ** 6)
    worst = 0.0
    for i in range(count):
        d = int(rng.integers(1, 6))
        law = random_law(d, rng)
        t1, t2 = rng.normal(size=d), rng.normal(size=d)
        reps = mc_trig_moment(t1, t2, law.mu, law.Sigma, samples, seed=seed + i)
        for r, v in zip(reps, trig_moments(t1, t2, law)):
            worst = max(worst, abs(v - r.estimate) / max(r.std_error, 1e-300))
    return "trig moments vs Monte Carlo", worst <= 4.0, f"max |z| = {worst:.2f} over {count} instances"


def check_log_H(quick, seed):
    ps = [0, 3, 30, 300, 3000]
    qs = np.logspace(-6, 6, 3 if quick else 5)
    rs = np.logspace(-4, 4, 3 if quick else 5)
    worst = 0.0
    for p, q, r in itertools.product(ps, qs, rs):
        a, b = log_H(p, q, r), hp_log_H(p, q, r)
        worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    return "log_H vs mpmath", worst <= 1e-8, f"max rel err = {worst:.2e}"


def check_gradient(quick, seed):
    data, basis, priors = _instance(30, 3, 5, seed)
    prob = Problem(data, basis, priors)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(3 if quick else 20):
        st = random_state(5, 3, rng)
        _, F6 = prob.lambda_gradients(st)
        fd = fd_gradient(prob.lower_bound_full, st, "mu_lambda", 1e-5)
        worst = max(worst, float(np.linalg.norm(fd - F6) / np.linalg.norm(F6)))
    return "F6 vs finite differences", worst < 1e-5, f"max rel err = {worst:.2e}"


def check_bound(quick, seed):
    data, basis, priors = _instance(40, 2, 5, seed)
    prob = Problem(data, basis, priors)
    res = fit_adaptive(data, basis, priors, FitConfig(), max_iter=10 if quick else 50)
    st = res.state
    gap = abs(prob.lower_bound(st) - prob.lower_bound_full(st))
    return "closed-form vs term-by-term bound", gap <= 1e-10, f"|diff| = {gap:.2e}"


def check_elbo(quick, seed):
    data, basis, priors = _instance(10, 1, 2, seed)
    res = fit_adaptive(data, basis, priors)
    rep = mc_elbo(res.state, data, basis, priors, 2 * 10 ** 4 if quick else 10 ** 5, seed=seed)
    L = Problem(data, basis, priors).lower_bound(res.state)
    z = abs(rep.estimate - L) / rep.std_error
    return "bound vs Monte Carlo ELBO", z <= 4.0, f"|z| = {z:.2f}"


CHECKS = (check_trig_moments, check_log_H, check_gradient, check_bound, check_elbo)


def run_checks(quick: bool = True, seed: int = 0):
    return [c(quick, seed) for c in CHECKS]
