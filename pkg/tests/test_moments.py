import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st
from hypothesis.extra.numpy import arrays

from vassgp.moments import (DesignCache, GaussianLaw, SpectralBasis, damping, expected_design,
                            expected_gram, expected_point_moments, trig_moments)
from vassgp.oracle import sample_gaussian
from vassgp.verify import random_law


def mc_design(X, S, law, n, seed):
    """Sample means of Z and Z'Z with direct trigonometry, plus standard errors."""
    rng = np.random.default_rng(seed)
    lam = sample_gaussian(law.mu, law.Sigma, n, rng)
    ph = np.einsum("ik,rk,sk->sir", X, S, lam)
    Z = np.concatenate([np.cos(ph), np.sin(ph)], axis=-1)
    ZZ = np.einsum("sia,sib->sab", Z, Z)
    se = lambda a: a.std(0, ddof=1) / np.sqrt(n)
    return Z.mean(0), se(Z), ZZ.mean(0), se(ZZ)


def test_zero_vectors():
    law = GaussianLaw(np.array([0.3, -1.0]), np.eye(2))
    assert trig_moments(np.zeros(2), np.zeros(2), law) == (1.0, 0.0, 0.0, 1.0, 0.0)


def test_point_mass():
    mu = np.array([0.3, 0.7])
    law = GaussianLaw(mu, np.zeros((2, 2)))
    t1, t2 = np.array([1.0, 2.0]), np.array([0.5, -1.0])
    cc, ss, sc, c1, s1 = trig_moments(t1, t2, law)
    a1, a2 = t1 @ mu, t2 @ mu
    assert cc == pytest.approx(np.cos(a1) * np.cos(a2), abs=1e-15)
    assert ss == pytest.approx(np.sin(a1) * np.sin(a2), abs=1e-15)
    assert sc == pytest.approx(np.sin(a1) * np.cos(a2), abs=1e-15)
    assert (c1, s1) == (np.cos(a1), np.sin(a1))


def test_reference_instance_monte_carlo():
    law = GaussianLaw(np.array([0.3, 0.7]), np.array([[0.2, 0.05], [0.05, 0.1]]))
    t1, t2 = np.array([1.0, 2.0]), np.array([0.5, -1.0])
    from vassgp.oracle import mc_trig_moment

    for rep, v in zip(mc_trig_moment(t1, t2, law.mu, law.Sigma, 10 ** 6, seed=11),
                      trig_moments(t1, t2, law)):
        assert rep.agrees(v, k=4.0)


def test_dimension_mismatch():
    law = GaussianLaw(np.zeros(2), np.eye(2))
    with pytest.raises(ValueError):
        trig_moments(np.zeros(3), np.zeros(3), law)
    with pytest.raises(ValueError):
        trig_moments(np.zeros(2), np.zeros(3), law)
    with pytest.raises(ValueError):
        expected_design(np.zeros((4, 3)), SpectralBasis(np.ones((2, 2))), law)


def test_law_validation():
    with pytest.raises(ValueError):
        GaussianLaw(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(ValueError):
        GaussianLaw(np.zeros(2), np.eye(3))


def test_zero_input_row():
    basis = SpectralBasis(np.random.default_rng(0).normal(size=(3, 2)))
    law = random_law(2, np.random.default_rng(1))
    EZ = expected_design(np.zeros((1, 2)), basis, law)
    np.testing.assert_array_equal(EZ, [[1, 1, 1, 0, 0, 0]])
    G = expected_gram(np.zeros((1, 2)), basis, law)
    np.testing.assert_array_equal(G[:3, :3], np.ones((3, 3)))
    np.testing.assert_array_equal(G[3:, :], 0.0)
    np.testing.assert_array_equal(G[:, 3:], 0.0)


def test_point_mass_design():
    rng = np.random.default_rng(2)
    X, S, mu = rng.normal(size=(5, 2)), rng.normal(size=(3, 2)), rng.normal(size=2)
    EZ = expected_design(X, SpectralBasis(S), GaussianLaw(mu, np.zeros((2, 2))))
    ph = (X[:, None, :] * S[None]) @ mu
    np.testing.assert_allclose(EZ, np.hstack([np.cos(ph), np.sin(ph)]), atol=1e-15)


@pytest.mark.parametrize("n,d,m,seed", [(4, 2, 3, 0), (5, 2, 3, 1), (3, 3, 4, 2)])
def test_design_and_gram_monte_carlo(n, d, m, seed):
    rng = np.random.default_rng(seed)
    X, S = rng.uniform(-1, 1, (n, d)), rng.normal(size=(m, d))
    law = random_law(d, rng)
    EZ, se_Z, EZZ, se_ZZ = mc_design(X, S, law, 10 ** 6 // 4, seed + 100)
    basis = SpectralBasis(S)
    assert np.all(np.abs(expected_design(X, basis, law) - EZ) <= 4 * se_Z + 1e-12)
    assert np.all(np.abs(expected_gram(X, basis, law) - EZZ) <= 4 * se_ZZ + 1e-12)


def test_point_moments_monte_carlo():
    rng = np.random.default_rng(7)
    d, m = 3, 4
    x, S = rng.uniform(-1, 1, d), rng.normal(size=(m, d))
    law = random_law(d, rng)
    EZ, se_Z, EZZ, se_ZZ = mc_design(x[None], S, law, 4 * 10 ** 5, 8)
    ez, ezz = expected_point_moments(x, SpectralBasis(S), law)
    assert np.all(np.abs(ez - EZ[0]) <= 4 * se_Z[0] + 1e-12)
    assert np.all(np.abs(ezz - EZZ) <= 4 * se_ZZ + 1e-12)


def test_upper_right_block_is_cos_sin():
    # with a point mass, Q[r, l] must be cos(t_r'mu) sin(t_l'mu)
    rng = np.random.default_rng(3)
    x, S, mu = rng.normal(size=2), rng.normal(size=(3, 2)), rng.normal(size=2)
    _, ezz = expected_point_moments(x, SpectralBasis(S), GaussianLaw(mu, np.zeros((2, 2))))
    ph = (S * x) @ mu
    np.testing.assert_allclose(ezz[:3, 3:], np.outer(np.cos(ph), np.sin(ph)), atol=1e-14)


def _instance(draw_seed, n, d, m):
    rng = np.random.default_rng(draw_seed)
    return rng.uniform(-1, 1, (n, d)), SpectralBasis(rng.normal(size=(m, d))), random_law(d, rng)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(1, 12), d=st.integers(1, 5),
       m=st.integers(1, 6))
def test_gram_properties(seed, n, d, m):
    X, basis, law = _instance(seed, n, d, m)
    G = expected_gram(X, basis, law)
    EZ = expected_design(X, basis, law)
    assert np.all(np.abs(EZ) <= 1.0)
    assert np.max(np.abs(G - G.T)) <= 1e-13
    assert np.linalg.eigvalsh(G).min() >= -1e-10 * np.trace(G)
    pair = np.diag(G)[:m] + np.diag(G)[m:]
    np.testing.assert_allclose(pair, n, rtol=0, atol=1e-12 * n)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), d=st.integers(1, 5), m=st.integers(1, 6))
def test_point_covariance_psd(seed, d, m):
    X, basis, law = _instance(seed, 1, d, m)
    ez, ezz = expected_point_moments(X[0], basis, law)
    cov = ezz - np.outer(ez, ez)
    assert np.linalg.eigvalsh(cov).min() >= -1e-12


vec = arrays(np.float64, 3, elements=st.floats(-3, 3))


@settings(max_examples=200, deadline=None)
@given(t1=vec, t2=vec, seed=st.integers(0, 2 ** 32 - 1))
def test_lemma_identities(t1, t2, seed):
    law = random_law(3, np.random.default_rng(seed))
    cc, ss, sc, c1, s1 = trig_moments(t1, t2, law)
    tm = t1 - t2
    nu = np.exp(-0.5 * tm @ law.Sigma @ tm)
    assert cc + ss == pytest.approx(nu * np.cos(tm @ law.mu), abs=1e-14)
    assert abs(c1) <= np.exp(-0.5 * t1 @ law.Sigma @ t1) + 1e-15
    cc2, ss2, sc2, _, _ = trig_moments(t2, t1, law)
    assert (cc2, ss2) == pytest.approx((cc, ss), abs=1e-15)
    # the t- term flips sign under the swap, the t+ term does not
    tp = t1 + t2
    assert sc + sc2 == pytest.approx(np.exp(-0.5 * tp @ law.Sigma @ tp) * np.sin(tp @ law.mu),
                                     abs=1e-14)


def test_damping_underflow_is_exact_zero():
    T = np.array([[1e3, 0.0], [0.1, 0.0]])
    out = damping(T, np.eye(2))
    assert out[0] == 0.0 and out[1] == pytest.approx(np.exp(-0.005))


def test_cache_matches_full_pairs():
    X, basis, law = _instance(5, 6, 3, 5)
    c = DesignCache(X, basis)
    cm, sm, cp, sp = c.second(law)
    num, nup = damping(c.Tm, law.Sigma), damping(c.Tp, law.Sigma)
    am, ap = c.Tm @ law.mu, c.Tp @ law.mu
    np.testing.assert_allclose(cm, num * np.cos(am), atol=1e-15)
    np.testing.assert_allclose(sm, num * np.sin(am), atol=1e-15)
    np.testing.assert_allclose(cp, nup * np.cos(ap), atol=1e-15)
    np.testing.assert_allclose(sp, nup * np.sin(ap), atol=1e-15)


def test_basis_draw_is_seeded():
    a = SpectralBasis.draw(4, 2, np.random.default_rng(9))
    b = SpectralBasis.draw(4, 2, np.random.default_rng(9))
    assert a.S.tobytes() == b.S.tobytes()
    with pytest.raises(ValueError):
        SpectralBasis(np.full((2, 2), np.inf))
