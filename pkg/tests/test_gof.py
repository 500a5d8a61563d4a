import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from orthofield.errors import ParameterError
from orthofield.harness.gof import (EmpiricalDistribution, default_threshold, dkw_band, gof_stats, ks_normal,
                                    ks_two_sample, lattice_gap, normal_cdf)


def test_normal_cdf_reference():
    assert normal_cdf(1.96) == pytest.approx(0.9750021048517795, abs=1e-15)
    assert normal_cdf(0.0, 4.0) == 0.5
    assert normal_cdf(2.0, 4.0) == pytest.approx(normal_cdf(1.0))
    with pytest.raises(ParameterError):
        normal_cdf(0.0, 0.0)


def test_dkw_band():
    assert dkw_band(10_000) == pytest.approx(0.013581)
    with pytest.raises(ParameterError):
        dkw_band(0)


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=200), st.floats(0.1, 9.0))
def test_ks_matches_scipy(xs, s2):
    ks = ks_normal(EmpiricalDistribution.of(xs), s2)
    ref = stats.kstest(xs, "norm", args=(0, np.sqrt(s2))).statistic
    assert ks == pytest.approx(ref, abs=1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@given(st.lists(st.integers(-4, 4), min_size=1, max_size=80), st.lists(st.integers(-4, 4), min_size=1, max_size=80))
def test_two_sample_matches_scipy(a, b):
    assert ks_two_sample(a, b) == pytest.approx(stats.ks_2samp(a, b).statistic, abs=1e-12)


def test_lattice_gap_and_threshold():
    d = EmpiricalDistribution.of([-1.0, 1.0] * 50)
    assert d.max_atom == 0.5 and lattice_gap(d) == 0.25
    assert default_threshold(d) == pytest.approx(2 * 1.3581 / 10 + 0.25)
    cont = EmpiricalDistribution.of(np.linspace(-1, 1, 10_000))
    assert lattice_gap(cont) == 0.0 and default_threshold(cont) == 0.03


def test_gof_verdicts():
    x = np.random.default_rng(0).standard_normal(20_000)
    rep = gof_stats(x, 1.0)
    assert rep.passed and rep.ks < 0.02
    assert not gof_stats(x, 4.0).passed
    degenerate = gof_stats(np.zeros(100), 0.0)
    assert not degenerate.passed and degenerate.note


def test_empty_sample():
    with pytest.raises(ParameterError):
        EmpiricalDistribution.of([])
