"""Adaptive step sizes on the natural-gradient direction for q(lambda).

Each cycle steps the natural parameters of q(lambda) by a_t times the
natural gradient, which gives

    Sigma_lambda <- [(1 - a_t) Sigma_lambda^-1 + a_t F5]^-1
    mu_lambda    <- mu_lambda + a_t Sigma_lambda F6

followed by the unit-step updates of q(alpha), C_sigma, C_gamma. While the
lower bound keeps increasing, a_t grows by a factor rho; on a decrease the
previous state is restored and the cycle is retried at a_t = 1 with the same
F5/F6. If the unit step also fails one damped retry at a_t = 1/2 is made,
after which the better of the two candidates is committed and logged.
Candidates whose update or bound cannot be evaluated are treated as
rejected; if no candidate in a retry chain is usable the fit stops.
"""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .data import Dataset
from .moments import SpectralBasis
from .vmp import (
    FitConfig,
    FitResult,
    NotSPDError,
    Priors,
    Problem,
    VariationalState,
    guarded_lambda_step,
    spd_guard,
)

__all__ = ["fit_adaptive", "spd_guard", "FitConfig", "FitResult"]

_DAMPED = 0.5


def fit_adaptive(data: Dataset, basis: SpectralBasis, priors: Priors,
                 config: FitConfig | None = None,
                 state: VariationalState | None = None,
                 max_iter: int | None = None,
                 problem: Problem | None = None) -> FitResult:
    """Run the adaptive cycle from ``state`` (default: the standard initialisation).

    ``max_iter`` overrides ``config.max_iter``; every attempt, failed or not,
    counts as one iteration.
    """
    config = config or FitConfig()
    limit = config.max_iter if max_iter is None else max_iter
    prob = problem or Problem(data, basis, priors)
    state = state if state is not None else prob.initial_state()
    L = prob.lower_bound(state)

    lb_trace = [(0, L)]
    step_trace = []
    diagnostics = []
    converged = False
    t = 0
    a = 1.0
    grads = None
    phase = 0           # 0 normal, 1 unit-step retry, 2 damped retry
    failed = []         # (L, state) of rejected candidates in the current retry chain

    while t < limit:
        if grads is None:
            grads = prob.lambda_gradients(state)
        F5, F6 = grads
        t += 1
        try:
            Sigma, mu, a_used, k = guarded_lambda_step(
                state, F5, F6, a, config.rho, config.guard_max_halvings)
        except NotSPDError:
            diagnostics.append({"event": "guard_exhausted", "iteration": t, "a": a})
            step_trace.append((t, a / config.rho ** config.guard_max_halvings, False))
            break
        if k:
            diagnostics.append({"event": "guard", "iteration": t, "halvings": k})

        try:
            cand = prob.finish_cycle(replace(state, Sigma_lambda=Sigma, mu_lambda=mu))
            L_cand = prob.lower_bound(cand)
        except (np.linalg.LinAlgError, ArithmeticError, ValueError) as err:
            # a candidate that cannot be evaluated counts as a rejected step
            diagnostics.append({"event": "candidate_failed", "iteration": t,
                                "error": f"{type(err).__name__}: {err}"})
            cand, L_cand = None, -math.inf
        delta = L_cand - L
        rel = delta / (abs(L) + 1e-12)

        if delta > 0:
            step_trace.append((t, a_used, True))
            lb_trace.append((t, L_cand))
            state, L = cand, L_cand
            a = config.rho * a_used
            grads, phase, failed = None, 0, []
            if rel < config.tol:
                converged = True
                break
            continue

        step_trace.append((t, a_used, False))
        failed.append((L_cand, cand, a_used))
        if phase == 0 and a_used != 1.0:
            phase, a = 1, 1.0
            continue
        if phase < 2:
            phase, a = 2, _DAMPED
            continue

        # unit and damped retries both failed: commit the better candidate
        L_best, best, a_best = max(failed, key=lambda f: f[0])
        if best is None:
            diagnostics.append({"event": "stalled", "iteration": t})
            break
        diagnostics.append({"event": "decrease", "iteration": t,
                            "delta": L_best - L, "a": a_best})
        rel_best = (L_best - L) / (abs(L) + 1e-12)
        state, L = best, L_best
        lb_trace.append((t, L))
        a, grads, phase, failed = 1.0, None, 0, []
        if abs(rel_best) < config.tol:
            converged = True
            break

    return FitResult(state, tuple(lb_trace), tuple(step_trace), t, converged,
                     tuple(diagnostics))
