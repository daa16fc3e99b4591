"""Basis selection by short restarts, and the global fit built on it."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .adaptive import fit_adaptive
from .data import Dataset
from .moments import SpectralBasis
from .predict import predict_many
from .vmp import FitConfig, FitResult, Priors, Problem, VariationalState

__all__ = ["Candidate", "warm_start", "best_start", "select_basis", "GlobalFit", "fit_global",
           "basis_rng"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Candidate:
    basis: SpectralBasis
    state: VariationalState
    lower_bound: float


def basis_rng(seed, *path) -> np.random.Generator:
    """Generator for basis draws, keyed on (seed, *path) only."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))


def warm_start(data: Dataset, basis: SpectralBasis, priors: Priors,
               config: FitConfig, mu_lambda=None) -> Candidate:
    """Standard initialisation (optionally with a given q(lambda) mean)
    followed by ``restart_iters`` adaptive cycles."""
    prob = Problem(data, basis, priors)
    state = prob.initial_state(mu_lambda)
    res = fit_adaptive(data, basis, priors, config, state=state,
                       max_iter=config.restart_iters, problem=prob)
    return Candidate(basis, res.state, res.lower_bound)


def best_start(data: Dataset, basis: SpectralBasis, priors: Priors, config: FitConfig,
               mu_lambda_starts=()) -> Candidate:
    """Best of the standard start and one start per extra q(lambda) mean."""
    best = None
    for mu in (None, *mu_lambda_starts):
        cand = warm_start(data, basis, priors, config, mu)
        if best is None or cand.lower_bound > best.lower_bound:
            best = cand
    return best


def select_basis(data: Dataset, m: int, priors: Priors, config: FitConfig,
                 rng: np.random.Generator | None = None, restarts: int | None = None,
                 mu_lambda_starts=()):
    """Draw ``restarts`` bases, run ``restart_iters`` adaptive cycles on each.

    Returns (best, candidates); ``best`` has the highest lower bound, ties going
    to the earliest draw. Candidates that fail numerically are skipped. Each
    entry of ``mu_lambda_starts`` adds a second start per basis whose q(lambda)
    mean begins there; the better start represents that basis.
    """
    rng = rng if rng is not None else basis_rng(config.seed)
    restarts = config.restarts if restarts is None else restarts
    candidates = []
    errors = []
    for j in range(restarts):
        basis = SpectralBasis.draw(m, data.d, rng)
        try:
            if mu_lambda_starts:
                cand = best_start(data, basis, priors, config, mu_lambda_starts)
            else:
                cand = warm_start(data, basis, priors, config)
        except (ArithmeticError, np.linalg.LinAlgError, ValueError) as err:
            errors.append(err)
            log.debug("candidate %d failed: %s", j, err)
            continue
        candidates.append(cand)
    if not candidates:
        raise ArithmeticError(f"all {restarts} basis candidates failed: {errors[-1]}")
    best = max(candidates, key=lambda c: c.lower_bound)
    return best, candidates


@dataclass(frozen=True)
class GlobalFit:
    data: Dataset
    basis: SpectralBasis
    priors: Priors
    result: FitResult
    candidates: tuple

    @property
    def state(self) -> VariationalState:
        return self.result.state

    def predict(self, X_raw):
        return predict_many(self.state, self.basis, self.data, X_raw, self.priors)


def fit_global(data: Dataset, m: int, priors: Priors, config: FitConfig | None = None,
               rng: np.random.Generator | None = None, restarts: int | None = None) -> GlobalFit:
    """Basis selection followed by the adaptive fit run to convergence."""
    config = config or FitConfig()
    best, candidates = select_basis(data, m, priors, config, rng, restarts)
    prob = Problem(data, best.basis, priors)
    result = fit_adaptive(data, best.basis, priors, config, state=best.state, problem=prob)
    return GlobalFit(data, best.basis, priors, result, tuple(candidates))
