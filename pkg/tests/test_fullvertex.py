import itertools
import json
from fractions import Fraction as Q

import pytest

from artifact import mutations, verify
from artifact.expand import e_A, parse_paren
from artifact.fullvertex import (EvenLattice, FockState, LatticeError, TwistedGroupAlgebra,
                                 make_lattice_fva, narain_point)
from artifact.series import compare

A1 = [[2]]
A2 = [[2, -1], [-1, 2]]


@pytest.fixture(scope="module")
def narain():
    return narain_point()


@pytest.fixture(scope="module")
def a1():
    return make_lattice_fva(A1)


# ---------------------------------------------------------------------------
# lattices, cocycles and projections


@pytest.mark.parametrize("gram, message", [
    ([[1]], "odd"),
    ([[2, 1], [0, 2]], "symmetric"),
    ([[2, 2], [2, 2]], "degenerate"),
    ([], "square"),
])
def test_bad_gram_matrices(gram, message):
    with pytest.raises(LatticeError, match=message):
        EvenLattice(gram)


@pytest.mark.parametrize("gram", [A1, A2, [[0, -1], [-1, 0]], [[2, 1, 0], [1, 2, 1], [0, 1, 4]]])
def test_cocycle_commutator_is_the_pairing_sign(gram):
    L = EvenLattice(gram)
    T = TwistedGroupAlgebra(L)
    box = range(-1, 2)
    for a in itertools.product(box, repeat=L.rank):
        for b in itertools.product(box, repeat=L.rank):
            assert T.cocycle(a, b) * T.cocycle(b, a) == (-1) ** (L.pair(a, b) % 2)
            assert T.cocycle(a, b) == verify.lattice_cocycle(gram, a, b)


def test_cocycle_is_bimultiplicative():
    T = TwistedGroupAlgebra(EvenLattice(A2))
    a, b, c = (1, 0), (1, 1), (0, -1)
    ab = tuple(x + y for x, y in zip(a, b))
    assert T.cocycle(ab, c) == T.cocycle(a, c) * T.cocycle(b, c)


def test_cocycle_mutation_flattens_signs():
    T = TwistedGroupAlgebra(EvenLattice(A2))
    assert T.cocycle((0, 1), (1, 0)) == -1
    with mutations.active("cocycle_sign"):
        assert T.cocycle((0, 1), (1, 0)) == 1


@pytest.mark.parametrize("p, message", [
    ([[1, 0], [0, 1]], "not positive definite"),
    ([["1/2", "1/2"], ["1/2", "1/2"]], "not positive definite"),
    ([[1, 1], [0, 0]], "not a projection|not orthogonal"),
    ([[1]], "2x2"),
])
def test_bad_projections(p, message):
    with pytest.raises(LatticeError, match=message):
        make_lattice_fva([[0, -1], [-1, 0]], [[Q(x) for x in row] for row in p])


def test_indefinite_mode_skips_the_definiteness_check():
    F = make_lattice_fva([[0, -1], [-1, 0]], [[1, 0], [0, 1]], mode="P")
    assert not F.definite
    with pytest.raises(LatticeError):
        F.spectrum(1, 1)


def test_narain_point_weights(narain):
    assert narain.central_charge == (1, 1)
    assert narain.ground_weight((1, 0)) == (Q(1, 4), Q(1, 4))
    assert narain.ground_weight((1, 1)) == (0, 1)
    assert narain.ground_weight((1, -1)) == (1, 0)


# ---------------------------------------------------------------------------
# states


def test_fock_state_json_round_trip(narain):
    for v in verify.sample_states(narain, 10, seed=3):
        assert FockState.from_json(json.loads(json.dumps(v.to_json()))) == v


def test_state_validation(a1):
    with pytest.raises(ValueError):
        a1.state([(0, 1)], (0,))
    with pytest.raises(ValueError):
        a1.state([(3, -1)], (0,))
    with pytest.raises(ValueError):
        a1.ground((0, 0))
    with pytest.raises(ValueError):
        FockState.from_json([{"modes": [[0, 2]], "ground": [0]}])


def test_weights_and_homogeneity(narain):
    v = narain.state([(0, -2), (1, -1)], (1, 0))
    assert narain.weight(v) == (Q(9, 4), Q(5, 4))
    with pytest.raises(ValueError):
        narain.weight(v + narain.vacuum())


# ---------------------------------------------------------------------------
# Heisenberg and Virasoro


def test_heisenberg_zero_mode_reads_the_charge(a1):
    v = a1.ground((2,))
    out = a1.heisenberg_act((1,), 0, v)
    assert out == v * 4


@pytest.mark.parametrize("which", ["narain", "a1"])
def test_direct_virasoro_matches_the_conformal_vector_modes(which, request):
    F = request.getfixturevalue(which)
    for v in verify.sample_states(F, 4, seed=11):
        for n in (-2, -1, 0, 1, 2):
            for side in set(F.sides):
                assert F.virasoro(n, side, v) == F.virasoro_via_omega(n, side, v)


def test_L0_gives_the_weight(narain):
    for v in verify.sample_states(narain, 8, seed=2, terms=1):
        h, hb = narain.weight(v)
        assert narain.virasoro(0, 0, v) == v * h
        assert narain.virasoro(0, 1, v) == v * hb


def test_algebra_level_suites_pass(narain):
    assert verify.check_heisenberg(narain, 4).ok
    assert verify.check_virasoro(narain, 2).ok
    assert verify.check_invariant_form(narain, 3).ok


# ---------------------------------------------------------------------------
# spectrum and forms


def test_spectrum_counts_partitions(a1):
    rows = {(h, hb, a): d for h, hb, a, d in a1.spectrum(4, 0)}
    # the Heisenberg module: p(n) states at weight n
    assert [rows[(n, 0, (0,))] for n in range(5)] == [1, 1, 2, 3, 5]


def test_spectrum_agrees_with_the_basis(narain):
    rows = narain.spectrum(2, 1)
    keys = narain.basis(2, 1)
    assert sum(d for *_, d in rows) == len(keys)


def test_invariant_form_normalization(narain):
    assert narain.invariant_form(narain.vacuum(), narain.vacuum()) == 1
    e, f = narain.ground((1, 0)), narain.ground((-1, 0))
    assert narain.invariant_form(e, e) == 0
    assert narain.invariant_form(e, f) == narain.invariant_form(f, e) != 0


# ---------------------------------------------------------------------------
# correlators against the Wick oracle


def test_two_point_vacuum_term(narain):
    e, f = narain.ground((1, 0)), narain.ground((-1, 0))
    g = narain.correlator("12", [e, f], 2)
    assert dict(g.terms) == {(Q(-1, 2), Q(-1, 2)): 1}


@pytest.mark.parametrize("tree", ["1(2(3(4*)))", "(12)((34)*)"])
def test_four_point_correlator_matches_wick(narain, tree):
    states = [narain.ground(a) for a in ((1, 0), (0, 1), (-1, 0), (0, -1))]
    A = parse_paren(tree)
    got = narain.correlator(A, states, 2)
    want = e_A(verify.closed_form(narain, states), A, 2)
    assert got.terms and compare(got, want) == []


def test_descendant_correlator_matches_wick(a1):
    states = [a1.state([(0, -1)], (1,)), a1.ground((-1,)),
              a1.state([(0, -2)], (0,)), a1.vacuum()]
    A = parse_paren("1(2(3(4*)))")
    got = a1.correlator(A, states, 3)
    want = e_A(verify.closed_form(a1, states), A, 3)
    assert got.terms and compare(got, want) == []
