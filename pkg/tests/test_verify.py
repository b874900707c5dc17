import pytest

from artifact import mutations, verify
from artifact.fullvertex import make_lattice_fva, narain_point
from artifact.reports import FAIL, PASS, CheckReport


@pytest.fixture(scope="module")
def a2():
    return make_lattice_fva([[2, -1], [-1, 2]])


@pytest.fixture(scope="module")
def narain():
    return narain_point()


def test_failing_report_needs_a_witness():
    with pytest.raises(ValueError):
        CheckReport("x", FAIL)
    rep = CheckReport("x", FAIL, [("z^1", 1, 2)], 3)
    assert not rep and rep.line() == "FAIL x [window 3]: z^1: 1 != 2"
    assert CheckReport("y", PASS).ok


def test_sampled_states_are_reproducible(narain):
    assert verify.sample_states(narain, 5, seed=4) == verify.sample_states(narain, 5, seed=4)


def test_wick_terms_of_the_vacuum_and_a_charge_pair(a2):
    assert [(t.coeff, t.alpha) for t in verify.wick_terms(a2, [a2.vacuum(), a2.vacuum()])] \
        == [(1, {})]
    e, f = a2.ground((1, 0)), a2.ground((-1, 0))
    (t,) = verify.wick_terms(a2, [e, f])
    assert t.exponent(1, 2) == (-2, 0)
    assert verify.wick_terms(a2, [e, e]) == []


def test_lattice_commutator_and_locality(a2):
    v = verify.sample_states(a2, 1, seed=1)[0]
    assert verify.check_lattice_commutator(a2, (1, 0), (0, 1), v, 2).ok
    grounds = [a2.ground(a) for a in ((1, 0), (0, 1), (-1, -1))]
    assert verify.check_locality(a2, *grounds, 2).ok
    with mutations.active("cocycle_sign"):
        rep = verify.check_locality(a2, *grounds, 2)
    assert rep.status == FAIL and rep.witnesses


def test_quasi_primary_structure(narain):
    rep = verify.check_qp_structure(narain, 2)
    assert rep.ok, rep.line()


def test_invariant_form_suite_requires_definiteness():
    F = make_lattice_fva([[0, -1], [-1, 0]], [[1, 0], [0, 1]], mode="P")
    with pytest.raises(ValueError):
        verify.check_qp_structure(F)
