import numpy as np
import pytest

from conftest import make_problem
from vassgp import fitting
from vassgp.fitting import basis_rng, fit_global, select_basis, warm_start
from vassgp.vmp import FitConfig


@pytest.fixture(scope="module")
def prob():
    return make_problem(n=40, d=2, m=4, seed=9)


def test_best_candidate_has_the_highest_bound(prob):
    best, cands = select_basis(prob.data, 4, prob.priors, FitConfig(), restarts=6)
    assert len(cands) == 6
    assert best.lower_bound == max(c.lower_bound for c in cands)
    assert best is next(c for c in cands if c.lower_bound == best.lower_bound)


def test_single_restart_is_plain_warm_start(prob):
    cfg = FitConfig(seed=3)
    best, cands = select_basis(prob.data, 4, prob.priors, cfg, restarts=1)
    assert len(cands) == 1
    basis = fitting.SpectralBasis.draw(4, 2, basis_rng(3))
    assert basis.S.tobytes() == best.basis.S.tobytes()
    again = warm_start(prob.data, basis, prob.priors, cfg)
    assert again.lower_bound == best.lower_bound


def test_basis_bytes_depend_only_on_seed(prob):
    a = fit_global(prob.data, 4, prob.priors, FitConfig(seed=5), restarts=3)
    b = fit_global(prob.data, 4, prob.priors, FitConfig(seed=5), restarts=3)
    c = fit_global(prob.data, 4, prob.priors, FitConfig(seed=6), restarts=3)
    assert a.basis.S.tobytes() == b.basis.S.tobytes() != c.basis.S.tobytes()
    assert a.result.lower_bound == b.result.lower_bound


def test_global_fit_improves_on_its_start(prob):
    fit = fit_global(prob.data, 4, prob.priors, FitConfig(seed=0), restarts=3)
    start = max(c.lower_bound for c in fit.candidates)
    assert fit.result.lower_bound >= start - 1e-9
    mu, var = fit.predict(np.zeros((3, 2)))
    assert mu.shape == (3,) and np.all(var > 0)


def test_failing_candidates_are_skipped(prob, monkeypatch):
    real = fitting.warm_start
    count = []

    def flaky(*a, **k):
        count.append(1)
        if len(count) % 2:
            raise FloatingPointError("boom")
        return real(*a, **k)

    monkeypatch.setattr(fitting, "warm_start", flaky)
    _, cands = select_basis(prob.data, 4, prob.priors, FitConfig(), restarts=4)
    assert len(cands) == 2
    monkeypatch.setattr(fitting, "warm_start", lambda *a, **k: (_ for _ in ()).throw(
        FloatingPointError("always")))
    with pytest.raises(ArithmeticError):
        select_basis(prob.data, 4, prob.priors, FitConfig(), restarts=2)


def test_best_start_keeps_the_higher_bound(prob):
    basis = fitting.SpectralBasis.draw(4, 2, basis_rng(1))
    cfg = FitConfig()
    plain = warm_start(prob.data, basis, prob.priors, cfg)
    starts = (np.array([3.0, 0.1]), np.zeros(2))
    others = [warm_start(prob.data, basis, prob.priors, cfg, mu) for mu in starts]
    best = fitting.best_start(prob.data, basis, prob.priors, cfg, starts)
    assert best.lower_bound == max(c.lower_bound for c in [plain, *others])
    assert fitting.best_start(prob.data, basis, prob.priors, cfg).lower_bound == plain.lower_bound


def test_initial_state_accepts_a_lengthscale_mean(prob):
    from vassgp.vmp import Problem

    p = Problem(prob.data, prob.basis, prob.priors)
    st = p.initial_state(np.array([1.0, -2.0]))
    np.testing.assert_array_equal(st.mu_lambda, [1.0, -2.0])
    np.testing.assert_array_equal(p.initial_state().mu_lambda, [0.5, 0.5])
