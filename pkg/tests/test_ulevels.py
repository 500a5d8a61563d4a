import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import zeta

from orthofield.errors import ParameterError
from orthofield.rng import derive_key, lattice_bits
from orthofield.ulevels import (MomentFunctional, _hurwitz_far, first_level_at_least, level_prob, level_value,
                                log_tail, log_tail_inf, sample_u_levels, single_level_exceedance, u_level_pmf,
                                u_mean, u_moment_series, u_second_moment)


def brute_log_tail(m, n_max):
    n = np.arange(m, n_max + 1, dtype=np.float64)
    return float(np.sum(np.log1p(-0.5 / n**2)))


def test_level_values_and_probs():
    assert level_value(2) == pytest.approx(2 / math.log(2) ** 2)
    assert level_prob(2) == pytest.approx(1 / 8)
    assert level_prob(10) == pytest.approx(1 / 200)


def test_two_level_field_support():
    vals, probs = u_level_pmf(2)
    np.testing.assert_allclose(vals, [0.0, 2 / math.log(2) ** 2])
    np.testing.assert_allclose(probs, [7 / 8, 1 / 8])


def test_pmf_matches_independent_levels():
    vals, probs = u_level_pmf(4)
    assert probs.sum() == pytest.approx(1.0)
    mean = sum(level_value(n) * level_prob(n) for n in range(2, 5))
    assert float(vals @ probs) == pytest.approx(mean)


@pytest.mark.parametrize("s", [2, 4, 6, 8])
@pytest.mark.parametrize("m", [64.0, 100.0, 1e4, 1e9])
def test_hurwitz_asymptotic_matches_scipy(s, m):
    assert float(_hurwitz_far(s, np.array([m]))[0]) == pytest.approx(float(zeta(s, m)), rel=1e-13)


@pytest.mark.parametrize("m,n_max", [(2, 10), (5, 1000), (63, 5000), (64, 10**5), (1000, 10**6)])
def test_log_tail_matches_direct_product(m, n_max):
    assert float(log_tail(m, n_max)) == pytest.approx(brute_log_tail(m, n_max), rel=1e-11, abs=1e-17)


def test_log_tail_empty_range_is_zero():
    assert float(log_tail(11, 10)) == 0.0


def test_log_tail_inf_limit():
    # direct sum to 10^7 plus the integral tail -1/(2 * 10^7)
    direct = brute_log_tail(100, 10**7) - 0.5 / 10**7
    assert float(log_tail_inf(100.0)) == pytest.approx(direct, rel=1e-9)


@given(st.floats(0.5, 1e12))
def test_first_level_is_minimal(x):
    n = float(first_level_at_least(np.array([x]))[0])
    assert n >= 8
    assert level_value(n) >= x
    assert n == 8 or level_value(n - 1) < x


def brute_exceedance(x, n_max):
    n = np.arange(2, n_max + 1, dtype=np.float64)
    hit = level_value(n) >= x
    return -math.expm1(float(np.sum(np.log1p(-level_prob(n[hit])))))


@pytest.mark.parametrize("x", [1.0, 1.9, 3.0, 5.0, 40.0, 1234.5])
def test_single_level_exceedance_brute(x):
    n_max = 200_000
    assert float(single_level_exceedance(np.array([x]), n_max)[0]) == pytest.approx(brute_exceedance(x, n_max),
                                                                                  rel=1e-9, abs=1e-15)


def test_single_level_exceedance_monotone():
    x = np.linspace(5, 5000, 500)
    p = single_level_exceedance(x, 10**9)
    assert np.all(np.diff(p) <= 0)


def test_sampler_matches_pmf():
    n_max = 6
    vals, probs = u_level_pmf(n_max)
    bits = lattice_bits(derive_key(11, "replicate", 0), (0,), (400_000,))
    u, top = sample_u_levels(bits, n_max)
    idx = np.searchsorted(vals, u)
    idx = np.clip(idx, 0, len(vals) - 1)
    assert np.allclose(vals[idx], u, rtol=1e-12, atol=1e-12)
    freq = np.bincount(idx, minlength=len(vals)) / u.size
    se = np.sqrt(probs * (1 - probs) / u.size)
    assert np.all(np.abs(freq - probs) <= 5 * se + 1e-12)
    assert set(np.unique(top)) <= set(range(0, n_max + 1))


def test_sampler_top_level_tail():
    n_max = 10**9
    bits = lattice_bits(derive_key(12, "replicate", 0), (0,), (400_000,))
    _, top = sample_u_levels(bits, n_max)
    for m in (10, 100, 1000):
        p = 1 - math.exp(float(log_tail(m, n_max)))
        freq = float(np.mean(top >= m))
        assert abs(freq - p) <= 5 * math.sqrt(p * (1 - p) / top.size)


def test_sampler_value_is_sum_of_levels_at_most_top():
    bits = lattice_bits(derive_key(13, "replicate", 0), (0,), (5000,))
    u, top = sample_u_levels(bits, 50)
    assert np.all(u[top == 0] == 0)
    assert np.all(u[top > 0] >= level_value(top[top > 0]) - 1e-12)


def test_moment_functional_validation():
    with pytest.raises(ParameterError):
        MomentFunctional("cubic")
    with pytest.raises(ParameterError):
        MomentFunctional("g", eps=1.0)
    with pytest.raises(ParameterError):
        MomentFunctional("phi", d=1)


def test_partial_sum_matches_direct():
    f = MomentFunctional("g", eps=0.5)
    n = np.arange(2, 10**4 + 1, dtype=np.float64)
    v = n / np.log(n) ** 2
    direct = float(np.sum(0.5 / n**2 * v * np.log1p(v) ** 0.5))
    assert u_moment_series(10**4, f).partial_sum(10**4) == pytest.approx(direct, rel=1e-13)


def test_euler_maclaurin_tail_against_chunked_sum():
    f = MomentFunctional("g", eps=0.0)
    s = u_moment_series(10**7, f)
    short = type(s)(10**7, f, exact_upto=1 << 16)
    assert short.partial_sum(10**7) == pytest.approx(s.partial_sum(10**7), rel=1e-10)


def test_g_half_series_frozen_values():
    s = u_moment_series(10**8, MomentFunctional("g", eps=0.5))
    # direct float summation to 10^6; Euler-Maclaurin beyond
    assert s.partial_sum(10**6) == pytest.approx(1.2643098361475071, rel=1e-12)
    assert s.partial_sum(10**8) == pytest.approx(1.2934044069884205, rel=1e-9)
    assert s.converges()
    assert s.tail_exponent() == pytest.approx(1.5, abs=1e-3)


def test_xlog_series_frozen_growth():
    s = u_moment_series(10**8, MomentFunctional("g", eps=0.0))
    assert s.partial_sum(10**6) - s.partial_sum(10**3) == pytest.approx(0.1849499418261873, rel=1e-10)
    assert not s.converges()
    assert s.tail_exponent() == pytest.approx(1.0, abs=1e-3)


def test_u_moments_small_against_pmf():
    vals, probs = u_level_pmf(7)
    assert u_mean(7) == pytest.approx(float(vals @ probs), rel=1e-12)
    assert u_second_moment(7) == pytest.approx(float((vals**2) @ probs), rel=1e-12)


def test_nmax_validation():
    with pytest.raises(ParameterError):
        u_moment_series(1, MomentFunctional())
