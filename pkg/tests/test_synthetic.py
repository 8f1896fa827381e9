import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mist.errors import ValidationError
from mist.functionals import SHANNON, renyi
from mist.synthetic import (ChainSpec, CycleSpec, OracleDensity, gaussian_mi, gen_chain,
                            gen_cycle, oracle_mi)


def test_noiseless_chain():
    x = gen_chain(ChainSpec(200, 0.0, 1)).samples
    assert np.array_equal(x[:, 1], x[:, 0] ** 2)
    assert np.array_equal(x[:, 2], (x[:, 0] ** 2) ** 2)


def test_noiseless_cycle():
    x = gen_cycle(CycleSpec(200, 0.0, 1.0, 1)).samples
    assert np.array_equal(x[:, 2], (x[:, 0] ** 2) ** 2 + x[:, 0])


def test_generators_are_deterministic():
    a = gen_chain(ChainSpec(50, 0.3, 7))
    assert np.array_equal(a.samples, gen_chain(ChainSpec(50, 0.3, 7)).samples)
    assert not np.array_equal(a.samples, gen_chain(ChainSpec(50, 0.3, 8)).samples)
    c = gen_cycle(CycleSpec(50, 0.3, 0.5, 7))
    assert np.array_equal(c.samples, gen_cycle(CycleSpec(50, 0.3, 0.5, 7)).samples)


@given(st.integers(2, 300), st.floats(0, 2), st.integers(0, 2 ** 32))
def test_cycle_without_coupling_is_chain(n, a, seed):
    assert np.array_equal(gen_cycle(CycleSpec(n, a, 0.0, seed)).samples,
                          gen_chain(ChainSpec(n, a, seed)).samples)


@given(st.integers(2, 300), st.floats(0, 5), st.integers(0, 2 ** 32))
def test_first_column_in_support(n, a, seed):
    x1 = gen_chain(ChainSpec(n, a, seed)).samples[:, 0]
    assert np.all((x1 >= -0.5) & (x1 <= 0.5))


def test_marginal_moments():
    x = gen_chain(ChainSpec(10_000, 0.1, 3)).samples
    se = x[:, 1].std(ddof=1) / 100
    assert abs(x[:, 1].mean() - 1 / 12) <= 3 * se
    assert abs(x[:, 0].var(ddof=1) / (1 / 12) - 1) <= 0.1


def test_noise_variance_default_and_override():
    # With a=1 the residual X2 - X1^2 is the noise itself.
    x = gen_chain(ChainSpec(20_000, 1.0, 4)).samples
    assert np.var(x[:, 1] - x[:, 0] ** 2) == pytest.approx(0.5, rel=0.05)
    x = gen_chain(ChainSpec(20_000, 1.0, 4, noise_std=0.5)).samples
    assert np.var(x[:, 1] - x[:, 0] ** 2) == pytest.approx(0.25, rel=0.05)


@pytest.mark.parametrize("spec", [ChainSpec(1, 0.1, 0), ChainSpec(10, -0.1, 0),
                                  ChainSpec(10, 0.1, 0, noise_std=-1.0)])
def test_generator_errors(spec):
    with pytest.raises(ValidationError):
        gen_chain(spec)


def test_oracle_examples():
    assert abs(oracle_mi(OracleDensity("independent_uniform_pair"), SHANNON)) <= 1e-6
    g = oracle_mi(OracleDensity("gaussian_pair", rho=0.5), SHANNON)
    assert abs(-g - 0.14384) <= 1e-3
    assert abs(-g - gaussian_mi(0.5)) <= 1e-3
    table = np.outer([0.2, 0.5, 0.3], [0.6, 0.1, 0.3])
    assert abs(oracle_mi(OracleDensity("discretized_table", table=table), renyi(0.5)) - 1) <= 1e-6


def _gaussian_renyi(rho, alpha):
    """Closed form of the integral of p^(1-alpha) q^alpha for p = N(0, S), q = N(0, I)."""
    s = np.array([[1.0, rho], [rho, 1.0]])
    m = (1 - alpha) * np.linalg.inv(s) + alpha * np.eye(2)
    return np.linalg.det(s) ** (-(1 - alpha) / 2) * np.linalg.det(m) ** -0.5


@pytest.mark.parametrize("rho", [0.0, 0.3, 0.8])
def test_oracle_gaussian_renyi_closed_form(rho):
    got = oracle_mi(OracleDensity("gaussian_pair", rho=rho), renyi(0.5))
    assert abs(got - _gaussian_renyi(rho, 0.5)) <= 1e-4


@given(st.integers(0, 10_000), st.floats(0.05, 0.95))
def test_oracle_renyi_at_most_one(seed, alpha):
    t = np.random.default_rng(seed).random((4, 5)) + 1e-3
    assert oracle_mi(OracleDensity("discretized_table", table=t), renyi(alpha)) <= 1 + 1e-9


def test_grids_integrate_to_one():
    for d in (OracleDensity("gaussian_pair", rho=0.6), OracleDensity("independent_uniform_pair"),
              OracleDensity("discretized_table", table=np.ones((3, 3)))):
        assert abs(d.joint_on_grid().sum() - 1) <= 1e-6


@pytest.mark.parametrize("f", [SHANNON, renyi(0.5)])
def test_quadrature_converged(f):
    coarse = oracle_mi(OracleDensity("gaussian_pair", rho=0.7), f, check=False)
    fine = oracle_mi(OracleDensity("gaussian_pair", rho=0.7, grid=512), f, check=False)
    assert abs(coarse - fine) < 1e-3


def test_oracle_errors():
    with pytest.raises(ValidationError):
        oracle_mi(OracleDensity("gaussian_pair", rho=0.5, grid=32), SHANNON)
    with pytest.raises(ValidationError):
        oracle_mi(OracleDensity("gaussian_pair", rho=0.999, grid=64), SHANNON)
    with pytest.raises(ValidationError):
        oracle_mi(OracleDensity("gaussian_pair", rho=1.0), SHANNON)
    with pytest.raises(ValidationError):
        oracle_mi(OracleDensity("discretized_table"), SHANNON)
    with pytest.raises(ValidationError):
        oracle_mi(OracleDensity("mixture"), SHANNON)


def test_gaussian_mi_closed_form():
    assert gaussian_mi(0.5) == pytest.approx(-0.5 * math.log(0.75))
