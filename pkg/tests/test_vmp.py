from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from conftest import make_problem
from vassgp.data import Dataset
from vassgp.moments import SpectralBasis
from vassgp.oracle import fd_gradient, mc_elbo, sample_gaussian
from vassgp.verify import random_state
from vassgp.vmp import (FitConfig, NotSPDError, Priors, Problem, fit_vmp, guarded_lambda_step,
                        spd_guard, update_lambda)


def residual_by_hermite(prob, state, nodes=80):
    """E||y - Z alpha||^2 for d = 1 by Gauss-Hermite over lambda."""
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    mu, s2 = state.mu_lambda[0], state.Sigma_lambda[0, 0]
    lam = mu + np.sqrt(s2) * x
    w = w / w.sum()
    X, S, y = prob.data.X[:, 0], prob.basis.S[:, 0], prob.data.y
    M = state.second_moment_alpha()
    total = 0.0
    for li, wi in zip(lam, w):
        ph = np.outer(X, S) * li
        Z = np.hstack([np.cos(ph), np.sin(ph)])
        total += wi * (y @ y - 2 * y @ Z @ state.mu_alpha + np.sum(M * (Z.T @ Z)))
    return total


def test_raw_gradients_match_quadrature_derivatives():
    prob = make_problem(n=3, d=1, m=2, seed=5)
    st0 = random_state(2, 1, np.random.default_rng(0))
    F12, F34 = prob.raw_gradients(st0)
    h = 1e-5

    def at(mu=None, s2=None):
        s = replace(st0,
                    mu_lambda=st0.mu_lambda if mu is None else np.array([mu]),
                    Sigma_lambda=st0.Sigma_lambda if s2 is None else np.array([[s2]]))
        return residual_by_hermite(prob, s)

    mu0, s0 = st0.mu_lambda[0], st0.Sigma_lambda[0, 0]
    d_mu = (at(mu=mu0 + h) - at(mu=mu0 - h)) / (2 * h)
    d_s = (at(s2=s0 + h) - at(s2=s0 - h)) / (2 * h)
    assert F34[0] == pytest.approx(d_mu, rel=1e-7)
    assert F12[0, 0] == pytest.approx(d_s, rel=1e-7)


def test_raw_gradients_point_mass_hand_expansion():
    # Sigma_lambda = 0: all damping factors are 1
    prob = make_problem(n=3, d=1, m=2, seed=6)
    st0 = replace(random_state(2, 1, np.random.default_rng(1)), Sigma_lambda=np.zeros((1, 1)))
    _, F34 = prob.raw_gradients(st0)
    X, S, y = prob.data.X[:, 0], prob.basis.S[:, 0], prob.data.y
    M = st0.second_moment_alpha()
    mu = st0.mu_lambda[0]

    def quad(lam):
        ph = np.outer(X, S) * lam
        Z = np.hstack([np.cos(ph), np.sin(ph)])
        return y @ y - 2 * y @ Z @ st0.mu_alpha + np.sum(M * (Z.T @ Z))

    h = 1e-6
    assert F34[0] == pytest.approx((quad(mu + h) - quad(mu - h)) / (2 * h), rel=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_F6_is_the_mu_gradient(problem, seed):
    st0 = random_state(problem.m, problem.d, np.random.default_rng(seed))
    _, F6 = problem.lambda_gradients(st0)
    fd = fd_gradient(problem.lower_bound_full, st0, "mu_lambda", 1e-5)
    assert np.linalg.norm(fd - F6) / np.linalg.norm(F6) < 1e-5


@pytest.mark.parametrize("seed", range(3))
def test_F5_is_the_sigma_gradient(problem, seed):
    # dL/dSigma_lambda = (Sigma_lambda^-1 - F5) / 2 with C_sigma, C_gamma held fixed
    st0 = random_state(problem.m, problem.d, np.random.default_rng(seed + 10))
    F5, _ = problem.lambda_gradients(st0)
    G = 0.5 * (np.linalg.inv(st0.Sigma_lambda) - F5)
    fd = fd_gradient(problem.lower_bound_full, st0, "Sigma_lambda", 1e-5)
    assert np.linalg.norm(fd - G) / np.linalg.norm(G) < 1e-4


def test_update_lambda_unit_step(problem):
    st0 = problem.initial_state()
    F5, F6 = problem.lambda_gradients(st0)
    Sigma, mu = update_lambda(st0, F5, F6, 1.0)
    np.testing.assert_allclose(Sigma, np.linalg.inv(F5), rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(mu, st0.mu_lambda + Sigma @ F6, rtol=1e-12)


def test_update_lambda_zero_direction(problem):
    st0 = random_state(problem.m, problem.d, np.random.default_rng(3))
    F5, _ = problem.lambda_gradients(st0)
    for a in (0.3, 1.0, 2.5):
        try:
            _, mu = update_lambda(st0, F5, np.zeros(problem.d), a)
        except NotSPDError:
            continue
        np.testing.assert_array_equal(mu, st0.mu_lambda)


def test_update_lambda_half_step_mixes_precisions():
    rng = np.random.default_rng(4)
    st0 = random_state(2, 3, rng)
    G = rng.normal(size=(3, 3))
    F5 = G @ G.T + np.eye(3)
    Sigma, _ = update_lambda(st0, F5, np.zeros(3), 0.5)
    expected = 0.5 * np.linalg.inv(st0.Sigma_lambda) + 0.5 * F5
    np.testing.assert_allclose(np.linalg.inv(Sigma), expected, rtol=1e-10)


def test_update_lambda_does_not_commit_on_failure():
    st0 = random_state(2, 2, np.random.default_rng(5))
    F5 = -10.0 * np.eye(2)
    before = st0.Sigma_lambda.copy()
    with pytest.raises(NotSPDError) as info:
        update_lambda(st0, F5, np.ones(2), 1.0)
    assert info.value.matrix.shape == (2, 2)
    np.testing.assert_array_equal(st0.Sigma_lambda, before)


def test_guard_halves_until_spd():
    st0 = replace(random_state(2, 2, np.random.default_rng(6)), Sigma_lambda=np.eye(2))
    F5 = np.diag([1.0, -3.0])
    Sigma, _, a_used, k = guarded_lambda_step(st0, F5, np.zeros(2), 1.0, 1.5, 60)
    # (1 - a) + a (-3) > 0 needs a < 1/4
    assert a_used == pytest.approx(1.5 ** -k) and a_used < 0.25 and 1.5 * a_used >= 0.25
    with pytest.raises(NotSPDError):
        guarded_lambda_step(st0, F5, np.zeros(2), 1.0, 1.5, 2)


def test_update_alpha_dense_oracle(problem):
    st0 = random_state(problem.m, problem.d, np.random.default_rng(7))
    Sigma, mu = problem.update_alpha(st0)
    EZ, EZtZ = problem.moments(st0.lam)
    hg, hs = problem.ratio_gamma(st0.C_gamma), problem.ratio_sigma(st0.C_sigma)
    inv = np.linalg.inv(EZtZ * hg + problem.m * hs * np.eye(2 * problem.m))
    np.testing.assert_allclose(Sigma, inv, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(mu, inv @ EZ.T @ problem.y * hg, rtol=1e-10, atol=1e-12)


def test_update_alpha_zero_targets():
    prob = make_problem()
    data = Dataset(prob.data.X, np.zeros(prob.n))
    p0 = Problem(data, prob.basis, prob.priors)
    _, mu = p0.update_alpha(random_state(prob.m, prob.d, np.random.default_rng(8)))
    np.testing.assert_array_equal(mu, 0.0)


def test_update_scales_examples(problem):
    m = problem.m
    st0 = replace(random_state(m, problem.d, np.random.default_rng(9)),
                  mu_alpha=np.zeros(2 * m), Sigma_alpha=np.eye(2 * m))
    C_sigma, _ = problem.update_scales(st0)
    assert C_sigma == pytest.approx(m * m)
    data = Dataset(problem.data.X, np.zeros(problem.n))
    p0 = Problem(data, problem.basis, problem.priors)
    _, C_gamma = p0.update_scales(st0)
    assert C_gamma == pytest.approx(0.5 * np.trace(p0.moments(st0.lam).EZtZ))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_C_gamma_is_half_expected_residual(seed):
    prob = make_problem(n=8, d=2, m=3, seed=1)
    rng = np.random.default_rng(seed)
    st0 = random_state(3, 2, rng)
    _, C_gamma = prob.update_scales(st0)
    assert C_gamma >= 0
    alpha = sample_gaussian(st0.mu_alpha, st0.Sigma_alpha, 20000, rng)
    lam = sample_gaussian(st0.mu_lambda, st0.Sigma_lambda, 20000, rng)
    ph = np.einsum("ik,rk,sk->sir", prob.data.X, prob.basis.S, lam)
    Z = np.concatenate([np.cos(ph), np.sin(ph)], axis=-1)
    r = 0.5 * np.sum((prob.y - np.einsum("sij,sj->si", Z, alpha)) ** 2, axis=1)
    assert abs(r.mean() - C_gamma) <= 4 * r.std(ddof=1) / np.sqrt(r.size)


def test_closed_form_bound_matches_terms_along_a_fit(problem):
    state = problem.initial_state()
    for _ in range(15):
        F5, F6 = problem.lambda_gradients(state)
        Sigma, mu = update_lambda(state, F5, F6, 1.0)
        state = problem.finish_cycle(replace(state, Sigma_lambda=Sigma, mu_lambda=mu))
        assert problem.lower_bound(state) == pytest.approx(problem.lower_bound_full(state),
                                                           abs=1e-10)


def test_bound_matches_monte_carlo_elbo(small_problem):
    prob = small_problem
    res = fit_vmp(prob.data, prob.basis, prob.priors)
    rep = mc_elbo(res.state, prob.data, prob.basis, prob.priors, 10 ** 5, seed=3)
    assert rep.agrees(prob.lower_bound(res.state), k=4.0)


def test_entropy_modes_differ_by_gaussian_entropy(small_problem):
    prob = small_problem
    res = fit_vmp(prob.data, prob.basis, prob.priors)
    a = mc_elbo(res.state, prob.data, prob.basis, prob.priors, 2000, seed=1, entropy="analytic")
    b = mc_elbo(res.state, prob.data, prob.basis, prob.priors, 2000, seed=1, entropy="none")
    d = prob.d
    ent = 0.5 * (d * np.log(2 * np.pi * np.e) + np.linalg.slogdet(res.state.Sigma_lambda)[1])
    assert a.estimate - b.estimate == pytest.approx(ent, abs=1e-10)


def test_converged_point_is_a_local_maximum(problem):
    res = fit_vmp(problem.data, problem.basis, problem.priors, FitConfig(tol=1e-10))
    L0 = problem.lower_bound_full(res.state)
    rng = np.random.default_rng(0)
    for _ in range(5):
        u = rng.normal(size=problem.d)
        u /= np.linalg.norm(u)
        for sgn in (1, -1):
            moved = replace(res.state, mu_lambda=res.state.mu_lambda + sgn * 0.1 * u)
            assert problem.lower_bound_full(moved) < L0


def test_single_data_point_converges():
    data = Dataset.from_raw(np.array([[0.3, -0.2]]), np.array([1.7]), rescale=False)
    basis = SpectralBasis.draw(3, 2, np.random.default_rng(0))
    res = fit_vmp(data, basis, Priors.isotropic(2))
    assert res.converged
    EZ = Problem(data, basis, Priors.isotropic(2)).moments(res.state.lam).EZ
    assert float(EZ[0] @ res.state.mu_alpha) + data.y_mean == pytest.approx(1.7)


def test_fit_vmp_trace_and_flags(problem):
    res = fit_vmp(problem.data, problem.basis, problem.priors, FitConfig(max_iter=7, tol=1e-14))
    assert not res.converged and res.iterations == 7
    assert len(res.lb_trace) == 8 and res.lb_trace[0][0] == 0


def test_spd_guard_examples():
    np.testing.assert_array_equal(spd_guard(np.eye(3)), np.eye(3))
    with pytest.raises(NotSPDError):
        spd_guard(np.diag([1.0, -1e-9]))
    rng = np.random.default_rng(0)
    G = rng.normal(size=(6, 6))
    A = G @ G.T + 1e-3 * np.eye(6)
    L = spd_guard(A)
    assert np.linalg.norm(L @ L.T - A) <= 1e-12 * np.linalg.norm(A)


def test_priors_and_config_validation():
    with pytest.raises(ValueError):
        Priors(np.zeros(2), -np.eye(2))
    with pytest.raises(ValueError):
        Priors(np.zeros(2), np.eye(2), A_sigma=0.0)
    for bad in (dict(rho=1.0), dict(tol=0.0), dict(max_iter=0)):
        with pytest.raises(ValueError):
            FitConfig(**bad)
