"""Command-line front end: ``fit``, ``local``, ``eval``, ``verify``, ``generate``.

Every run writes its merged configuration to ``effective_config.json`` next
to its outputs. Failures exit with 1 (configuration), 2 (data) or 3
(numerical) and print a one-line JSON error on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .data import Dataset
from .fitting import fit_global
from .neighborhood import batch_local_predict
from .predict import DegenerateMetricError, mnlp, nmse
from .synthetic import SyntheticSpec, generate, split
from .vmp import FitConfig, Priors

log = logging.getLogger("vassgp")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
MISSING = {"", "?", "na", "nan", "null", "none"}


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass
class RunConfig:
    mode: str = "global"
    train: str | None = None
    test: str | None = None
    target: str = "y"
    features: list | None = None
    test_size: int | None = None
    test_fraction: float | None = None
    split_seed: int | None = None
    out: str = "out"
    rescale: bool = True
    m: int = 20
    k: int | None = None
    A_sigma: float = 25.0
    A_gamma: float = 25.0
    mu_lambda0: float = 0.0
    sigma_lambda0_scale: float = 10.0
    tol: float = 1e-6
    max_iter: int = 500
    rho: float = 1.5
    restarts: int = 10
    restart_iters: int = 2
    seed: int = 0
    guard_max_halvings: int = 60
    local_restarts: int = 3
    reuse_basis: bool = False
    n_jobs: int = 1
    timing: bool = False

    def validate(self) -> "RunConfig":
        if self.mode not in ("global", "local"):
            raise ConfigError(f"mode must be 'global' or 'local', got {self.mode!r}")
        if self.train is None:
            raise ConfigError("a training CSV is required (--train)")
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if self.mode == "local":
            if self.k is None:
                raise ConfigError("local mode requires k")
            if self.k < 5:
                raise ConfigError(f"k must be >= 5 for a predictive variance, got {self.k}")
        if self.test is None and self.test_size is None and self.test_fraction is None:
            raise ConfigError("give --test, --test-size or --test-fraction")
        if self.test is not None and (self.test_size or self.test_fraction):
            raise ConfigError("--test cannot be combined with a split of the training file")
        if self.test_fraction is not None and not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.sigma_lambda0_scale <= 0 or self.A_sigma <= 0 or self.A_gamma <= 0:
            raise ConfigError("prior scales must be positive")
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be >= 1")
        try:
            self.fit_config()
        except ValueError as err:
            raise ConfigError(str(err)) from err
        return self

    def fit_config(self) -> FitConfig:
        return FitConfig(tol=self.tol, max_iter=self.max_iter, rho=self.rho,
                         restarts=self.restarts, restart_iters=self.restart_iters,
                         seed=self.seed, guard_max_halvings=self.guard_max_halvings)

    def priors(self, d: int) -> Priors:
        return Priors.isotropic(d, scale=self.sigma_lambda0_scale, mean=self.mu_lambda0,
                                A_sigma=self.A_sigma, A_gamma=self.A_gamma)


# -- CSV I/O ---------------------------------------------------------------

def read_table(path, target: str, features=None):
    """(X, y, feature names, rows dropped for missing cells) from a headed CSV."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"cannot read {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if target not in header:
        raise DataError(f"target column {target!r} not in {path} (columns: {header})")
    names = list(features) if features else [h for h in header if h != target]
    missing = [c for c in names if c not in header]
    if missing:
        raise DataError(f"columns {missing} not in {path}")
    cols = [header.index(c) for c in names] + [header.index(target)]
    kept, dropped = [], 0
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        cells = [row[j].strip() for j in cols]
        if any(c.lower() in MISSING for c in cells):
            dropped += 1
            continue
        try:
            kept.append([float(c) for c in cells])
        except ValueError as err:
            raise DataError(f"{path}:{lineno}: non-numeric cell ({err})") from None
    if not kept:
        raise DataError(f"{path} has no complete rows")
    arr = np.asarray(kept)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path} contains non-finite values")
    return arr[:, :-1], arr[:, -1], names, dropped


def ingest(path, target: str, features=None, rescale: bool = True) -> Dataset:
    """Training Dataset from CSV: rows with missing cells dropped, inputs
    rescaled to [-1, 1] and targets centred on training statistics."""
    X, y, _, dropped = read_table(path, target, features)
    if dropped:
        log.info("dropped %d rows with missing cells from %s", dropped, path)
    return Dataset.from_raw(X, y, rescale=rescale, dropped=dropped)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_table(path, X, y, names, target):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + [target])
        for row, t in zip(X, y):
            w.writerow([_fmt(v) for v in row] + [_fmt(t)])


def write_predictions(path, means, variances):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "mean", "variance"])
        for i, (mu, v) in enumerate(zip(means, variances)):
            w.writerow([i, _fmt(mu), _fmt(v)])


def read_predictions(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"mean", "variance"} <= set(rows[0]):
        raise DataError(f"{path} is not a predictions file")
    return (np.array([float(r["mean"]) for r in rows]),
            np.array([float(r["variance"]) for r in rows]))


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _metrics(means, variances, y_test, y_train_mean) -> dict:
    ok = np.isfinite(means) & np.isfinite(variances)
    out = {"n_test": int(len(y_test)), "n_scored": int(ok.sum())}
    if ok.any():
        try:
            out["nmse"] = nmse((means[ok], variances[ok]), y_test[ok], y_train_mean)
        except DegenerateMetricError:
            out["nmse"] = None
        out["mnlp"] = mnlp((means[ok], variances[ok]), y_test[ok])
    else:
        out["nmse"] = out["mnlp"] = None
    return out


# -- commands --------------------------------------------------------------

def _load_split(cfg: RunConfig):
    X, y, names, dropped = read_table(cfg.train, cfg.target, cfg.features)
    if cfg.test is not None:
        Xte, yte, _, dropped_te = read_table(cfg.test, cfg.target, names)
        Xtr, ytr = X, y
    else:
        n_test = cfg.test_size if cfg.test_size is not None else int(round(cfg.test_fraction * len(y)))
        if not 1 <= n_test < len(y):
            raise ConfigError(f"test split of {n_test} rows is impossible with {len(y)} rows")
        seed = cfg.seed if cfg.split_seed is None else cfg.split_seed
        (Xtr, ytr), (Xte, yte) = split(X, y, n_test, seed)
        dropped_te = 0
    train = Dataset.from_raw(Xtr, ytr, rescale=cfg.rescale, dropped=dropped)
    return train, Xte, yte, {"dropped_train": dropped, "dropped_test": dropped_te,
                             "n_train": train.n, "features": names}


def run(cfg: RunConfig) -> int:
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "effective_config.json", asdict(cfg))
    t0 = time.perf_counter()
    train, Xte, yte, info = _load_split(cfg)
    if cfg.test is None:
        # held-out rows, so that `eval` can recompute the metrics later
        write_table(out / "test_split.csv", Xte, yte, info["features"], cfg.target)
    priors = cfg.priors(train.d)
    fc = cfg.fit_config()

    if cfg.mode == "global":
        g = fit_global(train, cfg.m, priors, fc)
        means, variances = g.predict(Xte)
        with open(out / "trace.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "lower_bound", "step_size", "accepted"])
            lbs = dict(g.result.lb_trace)
            w.writerow([0, _fmt(lbs[0]), "", ""])
            for t, a, acc in g.result.step_trace:
                w.writerow([t, _fmt(lbs[t]) if t in lbs else "", _fmt(a), int(acc)])
        extra = {"iterations": g.result.iterations, "converged": g.result.converged,
                 "lower_bound": g.result.lower_bound}
    else:
        if cfg.k > train.n:
            raise ConfigError(f"k = {cfg.k} exceeds the number of training rows n = {train.n}")
        b = batch_local_predict(train, Xte, k=cfg.k, m=cfg.m, priors=priors, config=fc,
                                local_restarts=cfg.local_restarts,
                                reuse_basis=cfg.reuse_basis, n_jobs=cfg.n_jobs)
        means, variances = b.means, b.variances
        errors = dict(b.errors)
        with open(out / "trace.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["query", "stage", "iterations", "lower_bound", "converged",
                        "fallback", "mean", "variance", "error"])
            for q, s in enumerate(b.summaries):
                if s is None:
                    w.writerow([q, "", "", "", "", "", "", "", errors[q]])
                    continue
                for stage in ("stage1", "stage2"):
                    st = s[stage]
                    w.writerow([q, stage[-1], st["iterations"], _fmt(st["lower_bound"]),
                                int(st["converged"]), int(s["fallback"]),
                                _fmt(st["mean"]), _fmt(st["variance"]), ""])
        extra = {"n_failed": len(b.errors)}

    write_predictions(out / "predictions.csv", means, variances)
    metrics = _metrics(means, variances, yte, train.y_mean)
    metrics.update(extra)
    metrics["y_train_mean"] = train.y_mean
    metrics.update({k: v for k, v in info.items() if k != "features"})
    write_json(out / "metrics.json", metrics)
    if cfg.timing:
        write_json(out / "timing.json", {"wall_clock_seconds": time.perf_counter() - t0})
    log.info("nmse=%s mnlp=%s", metrics["nmse"], metrics["mnlp"])
    return 0


def cmd_eval(args) -> int:
    means, variances = read_predictions(args.predictions)
    _, y, _, _ = read_table(args.truth, args.target, args.features)
    if len(y) != len(means):
        raise DataError(f"{len(means)} predictions but {len(y)} test targets")
    if args.train_mean is not None:
        ybar = args.train_mean
    elif args.train is not None:
        ybar = float(read_table(args.train, args.target, args.features)[1].mean())
    else:
        raise ConfigError("eval needs --train or --train-mean for the NMSE baseline")
    metrics = _metrics(means, variances, y, ybar)
    text = json.dumps(metrics, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_generate(args) -> int:
    lam = tuple(args.lambda_true) if args.lambda_true else tuple([1.0] * args.d)
    spec = SyntheticSpec(n=args.n, d=args.d, m_true=args.m_true, lambda_true=lam,
                         sigma_true=args.sigma, gamma_true=args.gamma,
                         nonstationary=args.scenario, irrelevant=args.irrelevant,
                         seed=args.seed)
    X, y, _ = generate(spec)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_table(args.out, X, y, [f"x{j + 1}" for j in range(X.shape[1])], "y")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_checks

    results = run_checks(quick=not args.full, seed=args.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    if args.out:
        write_json(args.out, [{"check": n, "passed": ok, "detail": d} for n, ok, d in results])
    return 0 if all(ok for _, ok, _ in results) else EXIT_NUMERIC


# -- argument parsing ------------------------------------------------------

def _flag_kind(annotation: str):
    head = annotation.split("|")[0].strip()
    return {"int": int, "float": float, "str": str, "bool": bool, "list": list}[head]


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with RunConfig fields")
    for f in fields(RunConfig):
        if f.name == "mode":
            continue
        flag = "--" + f.name.replace("_", "-")
        kind = _flag_kind(f.type)
        if kind is list:
            p.add_argument(flag, nargs="+", default=None)
        elif kind is bool:
            p.add_argument(flag, action=argparse.BooleanOptionalAction, default=None)
        else:
            p.add_argument(flag, type=kind, default=None)


def build_config(args, mode: str) -> RunConfig:
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot load config {args.config}: {err}") from None
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(base) - {f.name for f in fields(RunConfig)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            base[f.name] = v
    base["mode"] = mode
    try:
        return RunConfig(**base)
    except TypeError as err:
        raise ConfigError(str(err)) from None


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vassgp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="global fit and prediction")
    _add_run_flags(p)
    p = sub.add_parser("local", help="adaptive-neighbourhood prediction per query")
    _add_run_flags(p)

    p = sub.add_parser("eval", help="NMSE / MNLP from a predictions file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--truth", required=True, help="test CSV with the target column")
    p.add_argument("--target", default="y")
    p.add_argument("--features", nargs="+", default=None)
    p.add_argument("--train", help="training CSV (for the NMSE baseline mean)")
    p.add_argument("--train-mean", type=float)
    p.add_argument("--out")

    p = sub.add_parser("verify", help="run the oracle cross-checks")
    p.add_argument("--full", action="store_true", help="full sample sizes (slow)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("generate", help="write a synthetic dataset as CSV")
    p.add_argument("--scenario", choices=["none", "piecewise", "irrelevant_dims"], default="none")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--m-true", type=int, default=20)
    p.add_argument("--lambda-true", type=float, nargs="+")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--irrelevant", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _fail(code: int, kind: str, err: Exception) -> int:
    print(json.dumps({"error": kind, "exit_code": code, "message": str(err)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("fit", "local"):
            cfg = build_config(args, "global" if args.command == "fit" else "local")
            return run(cfg)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_generate(args)
    except ConfigError as err:
        return _fail(EXIT_CONFIG, "config", err)
    except (DataError, OSError) as err:
        return _fail(EXIT_DATA, "data", err)
    except (ArithmeticError, np.linalg.LinAlgError) as err:
        return _fail(EXIT_NUMERIC, "numerical", err)
    except ValueError as err:
        # remaining validation errors come from library preconditions on inputs
        return _fail(EXIT_CONFIG, "config", err)


if __name__ == "__main__":
    sys.exit(main())
