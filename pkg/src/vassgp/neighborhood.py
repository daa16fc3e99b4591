"""Two-stage local regression with a lengthscale-weighted neighbourhood.

Stage 1 fits on the k Euclidean nearest neighbours of a query. Stage 2
re-selects k neighbours under the metric

    d(x*, x)^2 = (x* - x)' diag(mu_lambda^2) (x* - x)

using the stage-1 lengthscale means, fits again, and predicts from that
second model. There is no third stage.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fitting
from .adaptive import fit_adaptive
from .data import Dataset
from .moments import SpectralBasis
from .predict import InsufficientDataError, noise_floor, predict_many
from .vmp import FitConfig, FitResult, Priors

__all__ = [
    "NeighborhoodSpec",
    "knn",
    "StageFit",
    "LocalResult",
    "local_predict",
    "BatchResult",
    "batch_local_predict",
    "query_seed",
]

log = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-8


@dataclass(frozen=True)
class NeighborhoodSpec:
    k: int
    weights: np.ndarray | None = None   # None means Euclidean

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError("weights must be finite and nonnegative")
            object.__setattr__(self, "weights", w)

    @property
    def degenerate(self) -> bool:
        return self.weights is not None and not np.any(self.weights > WEIGHT_FLOOR ** 2)

    @classmethod
    def from_lengthscales(cls, k: int, mu_lambda) -> "NeighborhoodSpec":
        mu = np.asarray(mu_lambda, dtype=float)
        return cls(k, mu * mu)


def knn(X, x_star, spec: NeighborhoodSpec) -> np.ndarray:
    """Indices of the k nearest rows, nearest first; ties go to the lower index."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    n, d = X.shape
    if x_star.size != d:
        raise ValueError(f"query has {x_star.size} coordinates, data has {d}")
    if spec.k > n:
        raise ValueError(f"k = {spec.k} exceeds the number of training rows n = {n}")
    w = np.ones(d) if spec.weights is None or spec.degenerate else spec.weights
    if w.size != d:
        raise ValueError(f"{w.size} weights for {d} dimensions")
    diff = X - x_star
    dist2 = (diff * diff) @ w
    return np.argsort(dist2, kind="stable")[: spec.k]


@dataclass(frozen=True)
class StageFit:
    index: np.ndarray
    basis: SpectralBasis
    result: FitResult
    mean: float
    variance: float
    floor: float      # noise part of the variance, H(k-4)/H(k-2)


@dataclass(frozen=True)
class LocalResult:
    mean: float
    variance: float
    stage1: StageFit
    stage2: StageFit
    fallback: bool

    @property
    def weights(self) -> np.ndarray:
        mu = self.stage1.result.state.mu_lambda
        return mu * mu


def query_seed(seed: int, query_id: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(query_id)])


def _fit_stage(train: Dataset, idx, x_star_raw, m, priors, config, rng, restarts,
               basis=None, starts=()):
    local = train.subset(idx)
    if basis is None:
        start, _ = fitting.select_basis(local, m, priors, config, rng=rng, restarts=restarts,
                                        mu_lambda_starts=starts)
    else:
        start = fitting.best_start(local, basis, priors, config, starts)
    result = fit_adaptive(local, start.basis, priors, config, state=start.state)
    mu, var = predict_many(result.state, start.basis, local, np.atleast_2d(x_star_raw), priors)
    floor = noise_floor(result.state.C_gamma, local.n, priors.A_gamma)
    return StageFit(np.asarray(idx), start.basis, result, float(mu[0]), float(var[0]), floor)


def local_predict(train: Dataset, x_star_raw, k: int = 60, m: int = 20,
                  priors: Priors | None = None, config: FitConfig | None = None,
                  local_restarts: int = 3, reuse_basis: bool = False,
                  query_id: int = 0) -> LocalResult:
    """Adaptive-neighbourhood prediction at one raw query point.

    Exactly two full fits are run. Basis draws for the two stages come from
    independent children of ``SeedSequence([config.seed, query_id])``; with
    ``reuse_basis`` stage 2 keeps the stage-1 basis and repeats the stage-1
    procedure on it. Otherwise each redrawn stage-2 basis is tried from the
    standard start and from a start at the stage-1 lengthscale means, keeping
    whichever has the higher bound.
    """
    config = config or FitConfig()
    priors = priors or Priors.isotropic(train.d)
    if k > train.n:
        raise ValueError(f"k = {k} exceeds the number of training rows n = {train.n}")
    if k < 5:
        raise InsufficientDataError(f"local fits need k >= 5, got k = {k}")
    x_star = train.transform(np.asarray(x_star_raw, dtype=float).reshape(-1))
    rng1, rng2 = (np.random.default_rng(s) for s in query_seed(config.seed, query_id).spawn(2))

    idx1 = knn(train.X, x_star, NeighborhoodSpec(k))
    s1 = _fit_stage(train, idx1, x_star_raw, m, priors, config, rng1, local_restarts)

    spec2 = NeighborhoodSpec.from_lengthscales(k, s1.result.state.mu_lambda)
    fallback = spec2.degenerate
    if fallback:
        log.warning("stage-1 lengthscales are all below %g; stage 2 uses Euclidean distance",
                    WEIGHT_FLOOR)
    idx2 = knn(train.X, x_star, spec2)
    if reuse_basis:
        s2 = _fit_stage(train, idx2, x_star_raw, m, priors, config, rng2, local_restarts,
                        basis=s1.basis)
    else:
        # also try starting q(lambda) at the stage-1 mean; the bound decides
        s2 = _fit_stage(train, idx2, x_star_raw, m, priors, config, rng2, local_restarts,
                        starts=(s1.result.state.mu_lambda,))
    return LocalResult(s2.mean, s2.variance, s1, s2, fallback)


@dataclass(frozen=True)
class BatchResult:
    means: np.ndarray          # NaN where the query failed
    variances: np.ndarray
    stage1_means: np.ndarray
    stage1_variances: np.ndarray
    summaries: tuple           # one dict per query
    errors: tuple              # (query position, message)

    @property
    def ok(self) -> np.ndarray:
        return np.isfinite(self.means)

    @property
    def floors(self) -> np.ndarray:
        """Noise floor of each stage-2 variance (NaN for failed queries)."""
        return np.array([np.nan if s is None else s["stage2"]["floor"] for s in self.summaries])


def _summary(res: LocalResult) -> dict:
    out = {"fallback": res.fallback}
    for name, st in (("stage1", res.stage1), ("stage2", res.stage2)):
        out[name] = {
            "iterations": st.result.iterations,
            "lower_bound": st.result.lower_bound,
            "converged": st.result.converged,
            "mean": st.mean,
            "variance": st.variance,
            "floor": st.floor,
        }
    return out


def _one(args):
    train, x, qid, kw = args
    try:
        return _summary(local_predict(train, x, query_id=qid, **kw)), None
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as err:
        return None, f"{type(err).__name__}: {err}"


def batch_local_predict(train: Dataset, X_star_raw, k: int = 60, m: int = 20,
                        priors: Priors | None = None, config: FitConfig | None = None,
                        local_restarts: int = 3, reuse_basis: bool = False,
                        query_ids=None, n_jobs: int = 1) -> BatchResult:
    """Independent :func:`local_predict` per row of ``X_star_raw``.

    Query ``i`` is seeded by ``query_ids[i]`` (default ``i``), so results do
    not depend on ordering or on ``n_jobs``. Failures are recorded, not raised.
    """
    X = np.atleast_2d(np.asarray(X_star_raw, dtype=float))
    ids = np.arange(len(X)) if query_ids is None else np.asarray(query_ids, dtype=int)
    if ids.shape != (len(X),):
        raise ValueError("query_ids must have one entry per query")
    config = config or FitConfig()
    priors = priors or Priors.isotropic(train.d)
    kw = dict(k=k, m=m, priors=priors, config=config,
              local_restarts=local_restarts, reuse_basis=reuse_basis)
    jobs = [(train, x, int(q), kw) for x, q in zip(X, ids)]
    if n_jobs == 1 or len(jobs) < 2:
        out = [_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            out = list(pool.map(_one, jobs))

    nq = len(X)
    cols = {key: np.full(nq, np.nan) for key in ("m2", "v2", "m1", "v1")}
    summaries, errors = [], []
    for i, (summ, err) in enumerate(out):
        summaries.append(summ)
        if err is not None:
            errors.append((i, err))
            continue
        cols["m2"][i] = summ["stage2"]["mean"]
        cols["v2"][i] = summ["stage2"]["variance"]
        cols["m1"][i] = summ["stage1"]["mean"]
        cols["v1"][i] = summ["stage1"]["variance"]
    return BatchResult(cols["m2"], cols["v2"], cols["m1"], cols["v1"],
                       tuple(summaries), tuple(errors))
