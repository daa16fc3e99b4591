"""Seeded experiment protocols shared by ``scripts/`` and the acceptance tests.

Each ``*_trial`` function runs one seed and returns a plain dict, so callers
can aggregate however they like.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .adaptive import fit_adaptive
from .data import Dataset
from .fitting import basis_rng, fit_global
from .moments import SpectralBasis
from .neighborhood import batch_local_predict
from .predict import mnlp, nmse, noise_floor
from .synthetic import SyntheticSpec, generate, split
from .vmp import FitConfig, Priors, fit_vmp

__all__ = [
    "acceleration_trial",
    "recovery_trial",
    "nonstationary_trial",
    "irrelevant_trial",
    "auto_mpg_trial",
    "load_auto_mpg",
]


def acceleration_trial(seed: int, n: int = 200, d: int = 5, m: int = 25,
                       max_iter: int = 500) -> dict:
    """Plain and adaptive cycles from the same start on a model-true dataset."""
    lam = tuple(np.linspace(2.0, 0.5, d))
    X, y, _ = generate(SyntheticSpec(n=n, d=d, m_true=m, lambda_true=lam, seed=seed))
    data = Dataset.from_raw(X, y)
    basis = SpectralBasis.draw(m, d, basis_rng(seed, 1))
    priors = Priors.isotropic(d)
    cfg = FitConfig(max_iter=max_iter)
    plain = fit_vmp(data, basis, priors, cfg)
    fast = fit_adaptive(data, basis, priors, cfg)
    return {
        "seed": seed,
        "iter_plain": plain.iterations,
        "iter_adaptive": fast.iterations,
        "lb_plain": plain.lower_bound,
        "lb_adaptive": fast.lower_bound,
        "converged": plain.converged and fast.converged,
    }


def recovery_trial(seed: int, n: int = 200, m: int = 20, lambda_true=(2.0, 0.5),
                   restarts: int = 10) -> dict:
    """Global fit on a model-true set with one uniform irrelevant column appended."""
    spec = SyntheticSpec(n=n, d=len(lambda_true), m_true=m, lambda_true=tuple(lambda_true),
                         nonstationary="irrelevant_dims", irrelevant=1, seed=seed)
    X, y, _ = generate(spec)
    # the relevant columns already span [-1, 1]; keep their scale so lambda is comparable
    data = Dataset.from_raw(X, y, rescale=False)
    d = X.shape[1]
    fit = fit_global(data, m, Priors.isotropic(d), FitConfig(seed=seed, restarts=restarts))
    mu = np.abs(fit.state.mu_lambda)
    truth = np.abs(np.asarray(lambda_true, dtype=float))
    rel_err = np.abs(mu[: truth.size] - truth) / truth
    ard = mu[truth.size:].max() < 0.5 * mu[: truth.size].min()
    return {
        "seed": seed,
        "abs_mu_lambda": mu.tolist(),
        "sd_lambda": np.sqrt(np.diag(fit.state.Sigma_lambda)).tolist(),
        "rel_err": rel_err.tolist(),
        "recovered": bool(np.all(rel_err <= 0.25)),
        "ard": bool(ard),
        "ok": bool(np.all(rel_err <= 0.25) and ard),
        "lower_bound": fit.result.lower_bound,
    }


def _local_vs_global(train: Dataset, Xte, yte, k, m, priors, cfg, n_jobs=1) -> dict:
    g = fit_global(train, m, priors, cfg)
    gm, gv = g.predict(Xte)
    b = batch_local_predict(train, Xte, k=k, m=m, priors=priors, config=cfg, n_jobs=n_jobs)
    ok = b.ok
    g_floor = noise_floor(g.state.C_gamma, train.n, priors.A_gamma)
    return {
        "global_mnlp": mnlp((gm, gv), yte),
        "global_nmse": nmse((gm, gv), yte, train.y_mean),
        "local_mnlp": mnlp((b.means[ok], b.variances[ok]), yte[ok]),
        "local_nmse": nmse((b.means[ok], b.variances[ok]), yte[ok], train.y_mean),
        "stage1_mnlp": mnlp((b.stage1_means[ok], b.stage1_variances[ok]), yte[ok]),
        "stage1_nmse": nmse((b.stage1_means[ok], b.stage1_variances[ok]), yte[ok],
                            train.y_mean),
        "n_failed": len(b.errors),
        # smallest variance minus its noise floor, over every prediction made
        "floor_margin": float(min(np.min(gv - g_floor),
                                  np.min(b.variances[ok] - b.floors[ok]),
                                  np.min([s["stage1"]["variance"] - s["stage1"]["floor"]
                                          for s in b.summaries if s is not None]))),
    }


def nonstationary_trial(seed: int, n_train: int = 400, n_test: int = 100, k: int = 60,
                        m: int = 20, n_jobs: int = 1) -> dict:
    """Piecewise synthetic: global fit versus adaptive-neighbourhood local fits."""
    X, y, _ = generate(SyntheticSpec(n=n_train + n_test, d=2, m_true=20,
                                     nonstationary="piecewise", seed=seed))
    (Xtr, ytr), (Xte, yte) = split(X, y, n_test, seed)
    train = Dataset.from_raw(Xtr, ytr)
    out = _local_vs_global(train, Xte, yte, k, m, Priors.isotropic(2), FitConfig(seed=seed),
                           n_jobs)
    return {"seed": seed, **out}


def irrelevant_trial(seed: int, n_train: int = 300, n_test: int = 25, k: int = 60,
                     m: int = 20, irrelevant: int = 10, n_jobs: int = 1) -> dict:
    """Model-true 2-d signal plus uniform noise columns: stage 1 versus stage 2."""
    X, y, _ = generate(SyntheticSpec(n=n_train + n_test, d=2, m_true=20, lambda_true=(2.0, 0.5),
                                     nonstationary="irrelevant_dims", irrelevant=irrelevant,
                                     seed=seed))
    (Xtr, ytr), (Xte, yte) = split(X, y, n_test, seed)
    train = Dataset.from_raw(Xtr, ytr)
    priors = Priors.isotropic(train.d)
    cfg = FitConfig(seed=seed)
    b = batch_local_predict(train, Xte, k=k, m=m, priors=priors, config=cfg, n_jobs=n_jobs)
    ok = b.ok
    return {
        "seed": seed,
        "stage1_mnlp": mnlp((b.stage1_means[ok], b.stage1_variances[ok]), yte[ok]),
        "stage2_mnlp": mnlp((b.means[ok], b.variances[ok]), yte[ok]),
        "stage1_nmse": nmse((b.stage1_means[ok], b.stage1_variances[ok]), yte[ok],
                            train.y_mean),
        "stage2_nmse": nmse((b.means[ok], b.variances[ok]), yte[ok], train.y_mean),
        "n_failed": len(b.errors),
        "floor_margin": float(np.min(b.variances[ok] - b.floors[ok])),
    }


AUTO_MPG_COLUMNS = ["mpg", "cylinders", "displacement", "horsepower", "weight",
                    "acceleration", "model_year"]


def load_auto_mpg(path):
    """(X, y, rows dropped) from the UCI whitespace file or a headed CSV.

    Car name and origin are discarded; rows with a missing entry are dropped.
    """
    path = Path(path)
    rows, dropped = [], 0
    if path.suffix == ".csv":
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            cols = [c for c in AUTO_MPG_COLUMNS if c in reader.fieldnames]
            if "model year" in reader.fieldnames and "model_year" not in cols:
                cols.append("model year")
            if len(cols) != len(AUTO_MPG_COLUMNS):
                raise ValueError(f"{path} lacks some of {AUTO_MPG_COLUMNS}")
            raw = [[r[c].strip() for c in cols] for r in reader]
    else:
        raw = [line.split('"')[0].split()[:7] for line in path.read_text().splitlines()
               if line.strip()]
    for cells in raw:
        if len(cells) != 7 or any(c in ("?", "", "NA", "nan") for c in cells):
            dropped += 1
            continue
        rows.append([float(c) for c in cells])
    arr = np.asarray(rows)
    return arr[:, 1:], arr[:, 0], dropped


def auto_mpg_trial(path, seed: int = 0, k: int = 60, m: int = 20, n_test: int = 80,
                   n_jobs: int = 1) -> dict:
    """Local fits on a random 80-row test split of Auto-MPG, prior Sigma_lambda0 = I."""
    X, y, dropped = load_auto_mpg(path)
    (Xtr, ytr), (Xte, yte) = split(X, y, n_test, seed)
    train = Dataset.from_raw(Xtr, ytr)
    priors = Priors.isotropic(train.d, scale=1.0)
    b = batch_local_predict(train, Xte, k=k, m=m, priors=priors, config=FitConfig(seed=seed),
                            n_jobs=n_jobs)
    ok = b.ok
    return {
        "seed": seed,
        "n_rows": len(y),
        "dropped": dropped,
        "mnlp": mnlp((b.means[ok], b.variances[ok]), yte[ok]),
        "nmse": nmse((b.means[ok], b.variances[ok]), yte[ok], train.y_mean),
        "n_failed": len(b.errors),
    }
