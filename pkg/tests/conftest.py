import numpy as np
import pytest
import hypothesis.strategies as st

from neural_field_spectrum.charfun import EVEN
from neural_field_spectrum.hopf import hopf_find
from neural_field_spectrum.model import KernelTerm, ModelParams
from neural_field_spectrum.numerics import QuadGrid
from neural_field_spectrum.spectrum import eigen_solve

HOPF_SEED = (1.3j, -0.2 + 1.1j, -0.2 + 1.1j)


def make_params(c_hat=-3.27, xi=2.0, a=1.0, b=1.0, alpha=1.0, tau0=1.0, gamma=4.0):
    return ModelParams(alpha=alpha, tau0=tau0, gamma=gamma, a=a, b=b,
                       terms=(KernelTerm(complex(c_hat), complex(xi)),))


@st.composite
def complex_numbers(draw, bound=3.0):
    re = draw(st.floats(min_value=-bound, max_value=bound, allow_nan=False, allow_infinity=False))
    im = draw(st.floats(min_value=-bound, max_value=bound, allow_nan=False, allow_infinity=False))
    return complex(re, im)


@pytest.fixture
def ref_params():
    return make_params()


@pytest.fixture
def two_term_params():
    return ModelParams(alpha=1.0, tau0=1.0, gamma=4.0, a=1.0, b=1.0,
                       terms=(KernelTerm(-4.0, 1.0), KernelTerm(2.0, 3.0)))


@pytest.fixture(scope="session")
def grid32():
    return QuadGrid.build(1.0, 1.0, 32)


@pytest.fixture(scope="session")
def grid64():
    return QuadGrid.build(1.0, 1.0, 64)


@pytest.fixture(scope="session")
def ref_pair():
    """Eigenpair near 1.34i at c_hat = -3.27."""
    return eigen_solve(make_params(), EVEN, EVEN, HOPF_SEED)


@pytest.fixture(scope="session")
def hopf_result():
    return hopf_find(make_params(), (-4.0, -2.5), (EVEN, EVEN), HOPF_SEED)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
