import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kacvortex import meanfield as mf
from kacvortex.meanfield import MeanFieldModel, entropy, f, f_beta, i_prime, solve_m_beta

import oracles

T_GRID = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0]


def test_f_at_zero_and_slope():
    assert f(0.0, 2) == 0.0
    assert f(0.0, 3) == 0.0
    assert f(1e-8, 2) / 1e-8 == pytest.approx(0.5, rel=1e-12)
    assert mf.f_prime(0.0, 2) == 0.5


def test_f_frozen_values():
    assert f(2.0, 2) == pytest.approx(oracles.F2_AT_2, abs=1e-14)
    assert f(1.0, 3) == pytest.approx(oracles.F3_AT_1, abs=1e-14)


@pytest.mark.parametrize("t", [1e-3, 0.3, 1.0, 3.0, 7.9, 8.1, 15.0, 40.0])
def test_bessel_ratio_matches_series(t):
    assert f(t, 2) == pytest.approx(oracles.bessel_ratio(t), rel=1e-12)


@pytest.mark.parametrize("t", [1e-6, 1e-4, 1e-2, 0.5, 0.999, 1.001, 3.0, 30.0])
def test_langevin_matches_exponential_form(t):
    assert f(t, 3) == pytest.approx(oracles.langevin(t), rel=1e-12)


def test_langevin_small_argument():
    for t in (1e-10, 1e-6, 1e-3):
        assert f(t, 3) == pytest.approx(t / 3, rel=1e-5)


def test_f_large_argument_is_finite_and_below_one():
    for q in (2, 3):
        vals = np.asarray(f(np.array([100.0, 1e3, 1e6, 1e9]), q))
        assert np.all(np.isfinite(vals)) and np.all(vals < 1) and np.all(np.diff(vals) > 0)


def test_f_rejects_negative():
    with pytest.raises(ValueError):
        f(-0.1, 2)
    with pytest.raises(ValueError):
        f(1.0, 4)


@pytest.mark.parametrize("q", [2, 3])
def test_f_increasing_and_concave(q):
    t = np.linspace(0, 20, 401)
    v = np.asarray(f(t, q))
    assert np.all(np.diff(v) > 0)
    assert np.all(np.diff(v, 2) < 0)


@pytest.mark.parametrize("q", [2, 3])
def test_f_prime_matches_difference_quotient(q):
    for t in [0.05, 0.7, 1.0, 2.5, 9.0, 200.0, 5e3]:
        h = 1e-5 * t
        fd = (f(t + h, q) - f(t - h, q)) / (2 * h)
        assert mf.f_prime(t, q) == pytest.approx(fd, rel=1e-5)


@pytest.mark.parametrize("q", [2, 3])
def test_i_prime_roundtrip(q):
    for t in T_GRID:
        assert abs(i_prime(f(t, q), q) - t) <= 1e-8
    assert i_prime(0.0, q) == 0.0


def test_i_prime_roundtrip_at_two():
    assert i_prime(f(2.0, 2), 2) == pytest.approx(2.0, abs=1e-9)


@pytest.mark.parametrize("q", [2, 3])
def test_i_prime_small_rho(q):
    for rho in (1e-8, 1e-5):
        assert i_prime(rho, q) == pytest.approx(q * rho, rel=1e-6)


def test_i_prime_domain():
    with pytest.raises(ValueError):
        i_prime(1.0, 2)
    with pytest.raises(ValueError):
        i_prime(-0.1, 3)
    assert np.isfinite(i_prime(mf.RHO_MAX, 2))


@pytest.mark.parametrize("q", [2, 3])
def test_i_prime_vectorized_matches_scalar(q):
    rho = np.linspace(0, 0.99, 23).reshape(23, 1)
    vec = np.asarray(i_prime(rho, q))
    assert vec.shape == rho.shape
    for r, v in zip(rho.ravel(), vec.ravel()):
        assert v == i_prime(float(r), q)


@pytest.mark.parametrize("q", [2, 3])
def test_entropy_basic_shape(q):
    assert entropy(0.0, q) == 0.0
    grid = np.arange(0, 0.951, 0.05)
    vals = np.asarray(entropy(grid, q))
    assert np.all(np.diff(vals) > 0)
    assert np.all(np.diff(vals, 2) >= 0)


def test_entropy_matches_direct_maximization():
    assert entropy(0.9, 2) == pytest.approx(oracles.entropy_oracle(0.9), abs=1e-9)


@pytest.mark.parametrize("q", [2, 3])
def test_entropy_small_rho(q):
    # entropy ~ q rho^2 / 2 near zero
    assert entropy(1e-4, q) == pytest.approx(q * 1e-8 / 2, rel=1e-6)


@pytest.mark.parametrize("q", [2, 3])
def test_entropy_derivative_is_i_prime(q):
    for rho in (0.05, 0.3, 0.6, 0.9):
        h = 1e-6
        fd = (entropy(rho + h, q) - entropy(rho - h, q)) / (2 * h)
        assert fd == pytest.approx(i_prime(rho, q), abs=1e-6)


def test_entropy_rejects_unit_modulus():
    with pytest.raises(ValueError):
        entropy(1.0, 2)


def test_f_beta_zero_and_domain():
    model = MeanFieldModel(2, 5.0)
    assert f_beta(0.0, model) == 0.0
    with pytest.raises(ValueError):
        f_beta(1.0, model)


@pytest.mark.parametrize("q,beta", [(2, 5.0), (3, 5.0), (2, 3.0), (3, 10.0)])
def test_f_beta_grid_argmin_is_m_beta(q, beta):
    model = MeanFieldModel(q, beta)
    grid = np.arange(0, 0.999, 1e-3)
    argmin = grid[int(np.argmin(np.asarray(f_beta(grid, model))))]
    assert abs(argmin - solve_m_beta(model)) <= 1e-3


@pytest.mark.parametrize("q,beta", [(2, 2.0), (2, 1.0), (3, 3.0), (3, 2.5)])
def test_high_temperature_minimum_at_zero(q, beta):
    model = MeanFieldModel(q, beta)
    assert solve_m_beta(model) == 0.0
    grid = np.arange(0, 0.999, 1e-3)
    assert int(np.argmin(np.asarray(f_beta(grid, model)))) == 0


def test_m_beta_values():
    assert solve_m_beta(MeanFieldModel(2, 2.0)) == 0.0
    assert solve_m_beta(MeanFieldModel(3, 5.0)) == pytest.approx(0.725, abs=1e-3)
    # independent bisection on the exponential forms
    q3 = oracles.bisect_fixed_point(lambda m: oracles.langevin(5 * m))
    q2 = oracles.bisect_fixed_point(lambda m: oracles.bessel_ratio(5 * m))
    assert solve_m_beta(MeanFieldModel(3, 5.0)) == pytest.approx(q3, abs=1e-10)
    assert solve_m_beta(MeanFieldModel(2, 5.0)) == pytest.approx(q2, abs=1e-10)
    assert q2 == pytest.approx(0.87682, abs=1e-5)


@pytest.mark.parametrize("q", [2, 3])
def test_m_beta_residual_and_monotone(q):
    betas = [q + 0.1, q + 0.5, q + 1, 5.5, 8.0, 20.0]
    values = []
    for beta in betas:
        m = solve_m_beta(MeanFieldModel(q, beta))
        assert abs(m - f(beta * m, q)) <= 1e-10
        values.append(m)
    assert all(a < b for a, b in zip(values, values[1:]))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([2, 3]), st.floats(0.1, 12.0), st.floats(1e-6, 0.999))
def test_fixed_point_side(q, beta, x):
    m = solve_m_beta(MeanFieldModel(q, beta))
    if abs(x - m) < 1e-9:
        return
    assert (x > f(beta * x, q)) == (x > m)


def test_model_validation():
    with pytest.raises(ValueError):
        MeanFieldModel(2, 0.0)
    with pytest.raises(ValueError):
        MeanFieldModel(4, 5.0)
    assert MeanFieldModel(3, 5.0).ordered and not MeanFieldModel(3, 3.0).ordered
