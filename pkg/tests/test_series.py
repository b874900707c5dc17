import json
from fractions import Fraction as Q

import pytest
from hypothesis import given, settings, strategies as st

from artifact import mutations
from artifact.series import (
    Region, RegionSeries, binomial, biseries, coeff_extract, compare, constant,
    derive, exponent_classes, from_document, monomial, negate_var,
    power_of_linear, rational_power, series_add, series_mul, substitute,
    to_document, to_text,
)

R2 = Region.chain("xy")

# ---------------------------------------------------------------------------
# strategies: exact (uncapped) finite series on the chain x >> y


def _exponent_pair():
    cls = st.sampled_from([Q(0), Q(1, 2), Q(1, 3)])
    return st.tuples(cls, st.integers(-2, 2), st.integers(-2, 2)).map(
        lambda t: (t[0] + t[1], t[0] + t[2]))


coeffs = st.fractions(min_value=-5, max_value=5, max_denominator=6)


@st.composite
def exact_series(draw):
    n = draw(st.integers(0, 4))
    terms = {}
    for _ in range(n):
        (a, b), (c, d) = draw(_exponent_pair()), draw(_exponent_pair())
        terms[(a, b, c, d)] = draw(coeffs)
    return RegionSeries(R2, terms)


def same(a, b):
    return a.terms == b.terms


# ---------------------------------------------------------------------------
# ring axioms


@settings(max_examples=60, deadline=None)
@given(exact_series(), exact_series(), exact_series())
def test_addition_is_commutative_and_associative(f, g, h):
    assert same(f + g, g + f)
    assert same((f + g) + h, f + (g + h))
    assert not (f - f).terms


@settings(max_examples=60, deadline=None)
@given(exact_series(), exact_series(), exact_series())
def test_multiplication_axioms(f, g, h):
    assert same(f * g, g * f)
    assert same((f * g) * h, f * (g * h))
    assert same(f * (g + h), f * g + f * h)
    assert same(f * constant(R2), f)


@settings(max_examples=60, deadline=None)
@given(exact_series(), exact_series())
def test_derivative_is_a_derivation(f, g):
    for var in ("x", "y"):
        for bar in (False, True):
            lhs = derive(f * g, var, bar)
            rhs = derive(f, var, bar) * g + f * derive(g, var, bar)
            assert same(lhs, rhs)


@settings(max_examples=60, deadline=None)
@given(exact_series(), exact_series())
def test_negation_is_a_multiplicative_involution(f, g):
    assert same(negate_var(negate_var(f, "x"), "x"), f)
    assert same(negate_var(f * g, "y"), negate_var(f, "y") * negate_var(g, "y"))


@settings(max_examples=40, deadline=None)
@given(exact_series())
def test_document_round_trip(f):
    doc = json.loads(json.dumps(to_document(f)))
    back = from_document(doc)
    assert back.region == f.region and same(back, f)


# ---------------------------------------------------------------------------
# scalar helpers


def test_binomial_matches_integer_and_half_values():
    assert binomial(5, 2) == 10
    assert binomial(Q(1, 2), 2) == Q(-1, 8)
    assert binomial(-1, 3) == -1


def test_rational_power():
    assert rational_power(Q(9, 4), Q(3, 2)) == Q(27, 8)
    with pytest.raises(ValueError):
        rational_power(2, Q(1, 2))
    with pytest.raises(ValueError):
        rational_power(-1, 1)


def test_floats_are_rejected():
    with pytest.raises(TypeError):
        RegionSeries(R2, {(0.5, 0.5, 0, 0): 1})


def test_non_integer_spin_is_rejected():
    with pytest.raises(ValueError):
        RegionSeries(R2, {(Q(1, 2), 0, 0, 0): 1})


# ---------------------------------------------------------------------------
# regions, windows and structured operations


def test_region_coordinates_sum_over_subtrees():
    R = Region(("x", "y", "z"), {"y": "x", "z": "x"})
    assert R.coords((1, 1, 2, 2, 3, 3)) == (6, 6, 2, 2, 3, 3)
    assert Region.chain("xyz").coords((1, 1, 2, 2, 3, 3)) == (6, 6, 5, 5, 3, 3)
    with pytest.raises(ValueError):
        Region(("a", "b"), {"a": "b", "b": "a"})


def test_caps_drop_terms_outside_the_window():
    f = biseries({(k, k): 1 for k in range(6)}, 3)
    assert sorted(r for r, _ in f.terms) == [0, 1, 2, 3]
    g = f.truncate((2, 2))
    assert sorted(r for r, _ in g.terms) == [0, 1, 2]


def test_compare_uses_the_common_window():
    a = biseries({(0, 0): 1, (1, 1): 2, (3, 3): 5}, 3)
    b = biseries({(0, 0): 1, (1, 1): 2}, 2)
    assert compare(a, b) == []
    c = biseries({(0, 0): 1, (1, 1): 3}, 2)
    assert compare(a, c) == [((Q(1), Q(1)), Q(2), Q(3))]


def test_power_of_linear_matches_binomial_series():
    # (x + y)^(1/2) with x >> y, y coordinate capped at 3
    R = Region.chain("xy")
    s = power_of_linear(R, "x", {"y": 1}, Q(1, 2), Q(1, 2), (None, None, 3, 3))
    for k in range(4):
        for l in range(4):
            want = binomial(Q(1, 2), k) * binomial(Q(1, 2), l)
            key = (Q(1, 2) - k, Q(1, 2) - l, Q(k), Q(l))
            assert s.terms.get(key, 0) == want


def test_substitute_geometric_series():
    # p -> q/(1-q) truncated: p^2 must equal q^2/(1-q)^2 = sum (n-1) q^n
    inner = biseries({(n, 0): 1 for n in range(1, 8)}, 7, cap_bar=None)
    inner = inner.with_floors((Q(1), Q(0)))
    out = substitute(biseries({(2, 0): 1}), inner)
    for n in range(2, 8):
        assert out.coeff(n, 0) == n - 1


def test_substitute_half_integer_power():
    # p -> 4q(1+q): p^(1/2) pbar^(1/2) = 4 |q| (1+q)^(1/2) (1+qbar)^(1/2)
    inner = biseries({(1, 0): 4, (2, 0): 4}, 6, cap_bar=None).with_floors((Q(1), Q(0)))
    outer = biseries({(Q(1, 2), Q(1, 2)): 1}, 4)
    out = substitute(outer, inner)
    assert out.coeff(Q(1, 2), Q(1, 2)) == 4
    assert out.coeff(Q(3, 2), Q(1, 2)) == 2
    assert out.coeff(Q(3, 2), Q(3, 2)) == 1
    assert out.coeff(Q(5, 2), Q(1, 2)) == -Q(1, 2)


def test_coeff_extract_and_exponent_classes():
    f = RegionSeries(R2, {(Q(1, 2), Q(1, 2), 1, 0): 3, (Q(1, 2), Q(1, 2), 2, 2): 4,
                          (1, 0, 0, 0): 7})
    g = coeff_extract(f, "x", Q(1, 2), Q(1, 2))
    assert g.region.names == ("y",)
    assert dict(g.terms) == {(Q(1), Q(0)): 3, (Q(2), Q(2)): 4}
    assert exponent_classes(f) == {(Q(1, 2), Q(0)), (Q(0), Q(0))}


def test_negate_sign_mutation_changes_half_spin_terms():
    f = RegionSeries(R2, {(1, 0, 0, 0): 1})
    assert negate_var(f, "x").terms[(1, 0, 0, 0)] == -1
    with mutations.active("negate_sign"):
        assert negate_var(f, "x").terms[(1, 0, 0, 0)] == 1


def test_text_output_is_canonical():
    f = series_add(monomial(R2, {"x": (1, 0)}, 2), monomial(R2, {"y": (0, -1)}, Q(-1, 3)))
    assert to_text(f) == to_text(series_mul(f, constant(R2)))
    assert "2 * x" in to_text(f) and "-1/3 * ybar^-1" in to_text(f)
