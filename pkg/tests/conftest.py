import numpy as np
import pytest

from vassgp.data import Dataset
from vassgp.moments import SpectralBasis
from vassgp.synthetic import SyntheticSpec, generate
from vassgp.vmp import Priors, Problem


def make_problem(n=30, d=3, m=5, seed=0, rescale=True):
    lam = tuple(np.linspace(1.5, 0.5, d))
    X, y, _ = generate(SyntheticSpec(n=n, d=d, m_true=m, lambda_true=lam, seed=seed))
    data = Dataset.from_raw(X, y, rescale=rescale)
    basis = SpectralBasis.draw(m, d, np.random.default_rng(seed + 1))
    return Problem(data, basis, Priors.isotropic(d))


@pytest.fixture
def problem():
    return make_problem()


@pytest.fixture
def small_problem():
    return make_problem(n=10, d=1, m=2, seed=4)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
