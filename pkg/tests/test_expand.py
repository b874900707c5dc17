import json
import random
from fractions import Fraction as Q

import pytest

from artifact import mutations
from artifact.charts import ChartFunction, parse_exact_form, perm_from_cycles
from artifact.expand import (
    Cor4Elem, FreeCorTerm, GCor2Elem, ParenError, UnsupportedTransform,
    diff_kernel_check, e_A, expand_free, expand_xi, formal_dual, gcor2_dual, gcor2_expand,
    gcor2_invert, gcor_limit, parse_paren, q_prefactor, rename, s4_act_cor4, s_A, tau,
    transform, v_inverse,
)
from artifact.series import Region, biseries, coeff_extract, compare

# a free term with mixed rational exponents and nonzero spins
T = FreeCorTerm(1, {"12": Q(1, 2), "13": Q(-1, 3), "34": 1, "24": Q(2, 3), "14": -1, "23": Q(1, 4)},
                {"12": Q(1, 2), "13": Q(-1, 3), "34": 0, "24": Q(-1, 3), "14": -1, "23": Q(1, 4)})
F_RAT = ChartFunction(exact_form=parse_exact_form("p^2*(1-p)^-1 - 1/2*p"))
PHI = Cor4Elem([(T, F_RAT)])
TREES = ("1(2(34))", "1((23)4)", "(1(23))4", "((12)3)4", "(12)(34)")


# ---------------------------------------------------------------------------
# parsing


@pytest.mark.parametrize("text, message", [
    ("1(2(34)", "unbalanced"),
    ("1(2(33))", "duplicate"),
    ("1(2(3a))", "unexpected character"),
    ("1(*(34))", "rightmost"),
    ("1(2(35))", "not 1..4"),
])
def test_parse_errors(text, message):
    with pytest.raises(ParenError, match=message):
        parse_paren(text)


def test_tree_variables():
    A = parse_paren("1(2(34))")
    assert A.variables == ("x", "y", "z")
    assert A.region.parent("y") == "x" and A.region.parent("z") == "y"
    B = parse_paren("1(2(3(4*)))")
    # every node of a '*' chain has the origin as its right edge
    assert set(B.describe().values()) == {"z1", "z2", "z3", "z4"}
    assert set(parse_paren("(12)(34)").describe().values()) == {"z2 - z4", "z1 - z2", "z3 - z4"}
    assert parse_paren("(12)(34)").is_channel()
    assert not parse_paren("1(2(34))").is_channel()


def test_tau_on_the_standard_trees_and_equivariance():
    assert tau("1(2(34))") == perm_from_cycles("")
    assert tau("(1(23))4") == perm_from_cycles("(13)")
    assert tau("1((23)(4*))") == tau("1((23)4)")
    for s in ("(12)", "(234)", "(14)(23)"):
        sigma = perm_from_cycles(s)
        for A in TREES:
            B = parse_paren(A).relabel(sigma)
            want = tuple(sigma[tau(A)[i] - 1] for i in range(4))
            assert tau(B) == want


def test_tau_mutation_changes_one_entry():
    with mutations.active("tau_entry"):
        assert tau("1((23)4)") == perm_from_cycles("")
        assert tau("(1(23))4") == perm_from_cycles("(13)")


# ---------------------------------------------------------------------------
# free terms


def test_reversed_pairs_fold_with_a_sign():
    assert FreeCorTerm(1, {"21": 1}, {"21": 0}) == FreeCorTerm(-1, {"12": 1}, {"12": 0})
    assert FreeCorTerm(1, {"21": 1}, {"21": 1}) == FreeCorTerm(1, {"12": 1}, {"12": 1})
    with pytest.raises(ValueError):
        FreeCorTerm(1, {"12": Q(1, 2)}, {"12": 0})


def test_cor4_json_round_trip():
    doc = json.loads(json.dumps(PHI.to_json()))
    back = Cor4Elem.from_json(doc)
    assert [t for t, _ in back] == [T]
    assert compare(e_A(back, "1(2(34))", 3), e_A(PHI, "1(2(34))", 3)) == []


def test_free_expansion_of_a_single_difference():
    # z1 - z2 on 1(2(34)): x = z1 - z4, y = z2 - z4, so z1 - z2 = x - y exactly
    g = expand_free(FreeCorTerm(1, {"12": 1}, {}), "1(2(34))", 4)
    assert dict(g.terms) == {(1, 0, 0, 0, 0, 0): 1, (0, 0, 1, 0, 0, 0): -1}


def test_q_prefactor_pattern():
    t = q_prefactor([1, 2, 3, 4], [1, 2, 3, 4])
    assert t.exponent(1, 2) == (-4, -4)
    assert t.exponent(3, 4) == (-8, -8)
    assert t.exponent(1, 4) == (0, 0) and t.exponent(1, 3) == (2, 2)
    with pytest.raises(ValueError):
        q_prefactor([Q(1, 2), 0, 0, 0], [0, 0, 0, 0])


# ---------------------------------------------------------------------------
# expansions and the maps between them


def test_xi_expansion_on_the_chain_starts_with_z_over_y():
    g = expand_xi("1(2(34))", 3)
    assert min(k[4] for k in g.terms) == 1
    assert g.terms[(0, 0, -1, 0, 1, 0)] == 1


@pytest.mark.parametrize("A", TREES)
@pytest.mark.parametrize("s", ["(12)", "(243)", "(1234)"])
def test_e_A_is_s4_covariant(A, s):
    sigma = perm_from_cycles(s)
    B = parse_paren(A).relabel(sigma)
    assert compare(e_A(PHI, A, 3), e_A(s4_act_cor4(sigma, PHI), B, 3)) == []


@pytest.mark.parametrize("source, target", [
    ("1((23)4)", "1(4(23))"), ("(1(23))4", "4(1(23))"),
    ("((12)3)4", "4(3(12))"), ("1(2(34))", "1(2(43))"),
])
def test_transform_matches_direct_expansion(source, target):
    got = transform(e_A(PHI, source, 3), source, target)
    assert compare(got, e_A(PHI, target, 3)) == []


@pytest.mark.parametrize("source, target", [("1(2(34))", "(12)(34)"), ("(12)(34)", "1(2(34))")])
def test_unsupported_transform_is_reported(source, target):
    with pytest.raises(UnsupportedTransform):
        transform(e_A(PHI, source, 2), source, target)


def test_adding_a_star_point_gives_a_translation_invariant_series():
    h = transform(e_A(PHI, "1(2(34))", 3), "1(2(34))", "1(2(3(4*)))")
    assert h.terms
    assert diff_kernel_check(h, "translation", tree="1(2(3(4*)))").ok


@pytest.mark.parametrize("A, family", [("1(2(34))", "S"), ("(12)(34)", "S'")])
def test_cross_ratio_functions_are_killed_by_the_conformal_operators(A, family):
    outer = biseries({(Q(1, 3), Q(1, 3)): 2, (Q(4, 3), Q(1, 3)): -1, (2, 0): Q(1, 2)}, 4)
    g = s_A(outer, A, 4)
    assert diff_kernel_check(g, family).ok
    bad = g + expand_free(FreeCorTerm(1, {"12": 1}, {}), A, 4)
    assert not diff_kernel_check(bad, family).ok


def _random_outer(rng):
    terms = {}
    for _ in range(4):
        c = rng.choice([Q(0), Q(1, 2), Q(1, 3)])
        r, s = c + rng.randint(0, 3), c + rng.randint(0, 3)
        terms[(r, s)] = Q(rng.randint(-4, 4), rng.randint(1, 3))
    return biseries({k: v for k, v in terms.items() if v}, 12)


def test_channel_inverse_recovers_the_outer_on_half_the_window():
    rng = random.Random(7)
    for _ in range(3):
        o = _random_outer(rng)
        back = v_inverse(s_A(o, "(12)(34)", 12), "(12)(34)", check=False)
        assert back.caps[0] >= 6
        assert compare(back, o) == []


def test_inverse_rejects_non_solutions():
    g = e_A(PHI, "1(2(34))", 3)
    bad = g + expand_free(FreeCorTerm(1, {"12": 1}, {}), "1(2(34))", 3)
    with pytest.raises(ValueError):
        v_inverse(bad, "1(2(34))")
    with pytest.raises(ValueError):
        v_inverse(g, "1((23)4)")


@pytest.mark.parametrize("phi", [Cor4Elem([(T, None)]), PHI])
def test_formal_dual_reverses_the_star_chain(phi):
    d = formal_dual(e_A(phi, "1(2(3(4*)))", 3), T)
    assert d.region == parse_paren("4(3(2(1*)))").region
    assert compare(d, e_A(phi, "4(3(2(1*)))", 3)) == []


# ---------------------------------------------------------------------------
# two-insertion functions


def test_gcor2_dual_is_an_involution_and_matches_inversion():
    mu = GCor2Elem([gcor_limit(T, F_RAT)])
    g = gcor2_expand(mu, "z2>z0", 4)
    assert compare(gcor2_dual(gcor2_dual(g)), g) == []
    assert compare(gcor2_dual(g), gcor2_expand(gcor2_invert(mu), "z2>z0", 4)) == []


def test_gcor2_is_the_leading_x_coefficient_of_the_chain():
    mu = GCor2Elem([gcor_limit(T, F_RAT)])
    G = e_A(PHI, "1(2(34))", 4)
    c = sum(T.exponent(1, j)[0] for j in (2, 3, 4))
    cb = sum(T.exponent(1, j)[1] for j in (2, 3, 4))
    ex = coeff_extract(G, "x", c, cb)
    ren = rename(ex, Region.chain(("z1", "z2")), {"y": "z1", "z": "z2"}, "U")
    assert compare(ren, gcor2_expand(mu, "z1>z2", 4)) == []
