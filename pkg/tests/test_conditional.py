import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orthofield.conditional import (FootprintFunctional, check_con1, cond_exp, cond_exp_mc, cond_functional,
                                    from_table, functional_of, projection, projection_corners, sum_functional,
                                    truncation_split, verify_commuting, verify_ortho, verify_tower)
from orthofield.errors import ArgumentError, CapacityError, ParameterError
from orthofield.innovations import InnovationSpec
from orthofield.models import (bounded_u_field, iid_model, linear_model, make_u_field, product_omd,
                               volterra_model)
from orthofield.ulevels import MomentFunctional

RAD = {"xi": InnovationSpec.rademacher()}
INF = math.inf


def product_fn(*coords):
    def fn(get, exact):
        out = 1
        for c in coords:
            out = out * get(c)
        return out
    return FootprintFunctional(tuple(coords), RAD, fn)


def test_cond_exp_cross_product_vanishes():
    f = product_fn(("xi", (-1, 0)), ("xi", (0, -1)))
    assert cond_exp(f, (-1, -1)) == 0.0
    assert cond_exp(f, (-1, 0), {("xi", (-1, 0)): 1.0}) == 0.0
    assert cond_exp(f, (0, 0), {("xi", (-1, 0)): 1.0, ("xi", (0, -1)): -1.0}) == -1.0


def test_cond_exp_linearity():
    a, b = ("xi", (0, 0)), ("xi", (-1, -1))
    f = FootprintFunctional((a, b), RAD, lambda get, ex: get(a) + get(b))
    assert cond_exp(f, (-1, -1), {b: 1.0}) == 1.0
    assert cond_exp(f, (-1, -1), {b: 1}, exact=True) == Fraction(1)


def test_cond_exp_half_space_anchor():
    a, b = ("xi", (0, 5)), ("xi", (1, 0))
    f = FootprintFunctional((a, b), RAD, lambda get, ex: get(a) * get(a) + get(b))
    assert cond_exp(f, (0, INF), {a: -1.0}) == 1.0


def test_cond_exp_errors():
    f = product_fn(("xi", (0, 0)))
    with pytest.raises(ArgumentError):
        cond_exp(f, (0, 0), {})
    g = functional_of(product_omd(make_u_field(10**6)))
    with pytest.raises(ParameterError):
        cond_exp(g, (-2, -2))
    big = sum_functional(iid_model(), list(itertools.product(range(5), repeat=2)))
    with pytest.raises(CapacityError):
        cond_exp(big, (-1, -1), cutoff=1000)


def test_cond_exp_mc_within_four_se():
    m = product_omd(bounded_u_field())
    f = sum_functional(m, [(0, 0), (1, 0), (0, 1)])
    fixed = {c: 1.0 for c in f.coords if all(x <= 0 for x in c[1])}
    fixed.update({c: 4.0 for c in f.coords if c[0] == "u" and all(x <= 0 for x in c[1])})
    exact = cond_exp(f, (0, 0), fixed)
    est, se = cond_exp_mc(f, (0, 0), fixed, 20000, seed=3)
    assert se > 0 and abs(est - exact) <= 4 * se


def test_cond_exp_mc_degenerate():
    f = product_fn(("xi", (-1, -1)))
    assert cond_exp_mc(f, (0, 0), {("xi", (-1, -1)): 1.0}, 10, 0) == (1.0, 0.0)


def random_functional(d: int, data) -> FootprintFunctional:
    n = data.draw(st.integers(1, 4))
    pts = data.draw(st.lists(st.tuples(*[st.integers(-1, 1)] * d), min_size=n, max_size=n, unique=True))
    coords = [("xi", p) for p in pts]
    vals = data.draw(st.lists(st.integers(-3, 3), min_size=2 ** n, max_size=2 ** n))
    table = np.array([Fraction(v) for v in vals], dtype=object).reshape((2,) * n)
    return from_table(coords, RAD, table)




@settings(max_examples=50)
@given(st.sampled_from([2, 3]), st.data())
def test_projection_properties(d, data):
    f = random_functional(d, data)
    u = tuple(data.draw(st.integers(-1, 1)) for _ in range(d))
    p = projection(f, u)
    t = p.table(True)
    # measurable at u and a martingale difference in every direction
    from orthofield.conditional import _cond_table, lower
    assert np.array_equal(_cond_table(p, t, u, True), t)
    for j in range(d):
        assert not np.any(_cond_table(p, t, lower(u, j), True))
    # order of composition is irrelevant and matches the corner sum
    for order in itertools.permutations(range(d)):
        assert np.array_equal(projection(f, u, order=order).table(True), t)
    assert np.array_equal(projection_corners(f, u).table(True), t)


@settings(max_examples=30)
@given(st.data())
def test_projections_reconstruct_centered_functional(data):
    f = random_functional(2, data)
    t = f.table(True)
    total = sum(projection(f, u).table(True) for u in itertools.product(range(-1, 2), repeat=2))
    mean = sum(t.reshape(-1)) / t.size
    # coordinates live in [-1, 1]^2, so the projections over that box exhaust f - E f
    assert np.array_equal(total, t - mean)
    us = list(itertools.product(range(-1, 2), repeat=2))
    for u, v in itertools.combinations(us, 2):
        inner = (projection(f, u).table(True) * projection(f, v).table(True)).sum() / t.size
        assert inner == 0


@settings(max_examples=30)
@given(st.data(), st.integers(1, 3))
def test_truncation_split_adds_up(data, level):
    f = random_functional(2, data)
    u = (0, 0)
    lo, hi = truncation_split(f, level, u, exact=True)
    assert np.array_equal(lo.table(True) + hi.table(True), projection(f, u).table(True))


def test_truncation_split_bad_level():
    with pytest.raises(ParameterError):
        truncation_split(product_fn(("xi", (0, 0))), 0)


def test_verify_ortho_product_literal_zero():
    rep = verify_ortho(product_omd(bounded_u_field()))
    assert rep.passed and rep.exact and rep.literal_zero and rep.max_deviation == 0


def test_verify_ortho_iid_and_volterra():
    assert verify_ortho(iid_model()).literal_zero
    assert verify_ortho(volterra_model({((1, 0), (0, 1)): 2.0})).passed


def test_verify_ortho_linear_has_witness():
    rep = verify_ortho(linear_model({(0, 0): 1.0, (1, 0): 0.5}))
    assert not rep.passed
    v = rep.violations[0]
    assert abs(v.deviation) == 0.5
    assert rep.to_dict()["witness"]["assignment"]


def test_verify_ortho_mc_fallback():
    m = product_omd(make_u_field(10**6))
    with pytest.raises(ParameterError):
        verify_ortho(m)
    rep = verify_ortho(m, mc_reps=4000, seed=1)
    assert rep.check == "ortho-mc" and rep.passed


def test_verify_commuting_and_tower():
    m = linear_model({(0, 0): 1.0, (1, 0): 0.5, (0, 1): -0.25, (1, 1): 0.25})
    f = sum_functional(m, [(0, 0), (1, 1)])
    rep = verify_commuting(f, (0, -1), (-1, 0))
    assert rep.passed and rep.literal_zero
    assert verify_commuting(f, (0, INF), (INF, 0)).literal_zero
    assert verify_tower(f, (-1, -1), (0, 0)) == 0
    with pytest.raises(ArgumentError):
        verify_tower(f, (0, 0), (-1, 0))


def test_con1_linear_d1():
    m = linear_model({(0,): 1.0, (1,): -1.0})
    rep = check_con1(m, 3)
    assert [rep.values[(n,)] for n in (1, 2, 3)] == [2.0, 1.0, 1.0]
    assert rep.sup == 2.0 and rep.stable_from == (2,) and rep.method == "exact"


def test_con1_omd_is_second_moment():
    # E_0(S_n) keeps only X_0, so the grid is flat at E X_0^2
    rep = check_con1(product_omd(bounded_u_field()), 3)
    assert set(rep.values.values()) == {2.5}


def test_con1_moment_enumeration_and_mc():
    m = linear_model({(0,): 1.0, (1,): -1.0})
    mf = MomentFunctional("g", eps=0.5)
    rep = check_con1(m, 3, moment=mf)
    assert rep.method == "enumeration"
    assert rep.values[(1,)] == pytest.approx(0.5 * mf(np.array([2.0]))[0])
    wide = linear_model({(0, 0): 1.0, (2, 0): -1.0, (0, 2): 1.0, (2, 2): 0.5})
    full = check_con1(wide, 2, moment=mf)
    mc = check_con1(wide, 2, moment=mf, cutoff=64, mc_reps=20000)
    assert full.method == "enumeration" and mc.method == "mc"
    for n, v in full.values.items():
        assert abs(mc.values[n] - v) <= 4 * mc.ses[n]
    with pytest.raises(ParameterError):
        check_con1(product_omd(make_u_field(10**6)), 2, moment=mf)
