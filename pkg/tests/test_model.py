import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from insensitivity.distributions import Deterministic, Exponential
from insensitivity.model import (
    Discipline,
    LinearConstraint,
    LossRates,
    ModelError,
    NetworkSpec,
    SingleClassRates,
    TabulatedRates,
    WhittleRates,
    box_states,
    rate,
    transition,
    validate_spec,
)

TANDEM = [[0, 1, 0], [0, 0, 1], [1, 0, 0]]


def test_transition_examples():
    assert transition((1, 2), 1, 2) == (0, 3)
    assert transition((1, 2), 0, 1) == (2, 2)
    assert transition((1, 2), 2, 0) == (1, 1)
    with pytest.raises(ModelError):
        transition((0, 2), 1, 0)
    with pytest.raises(ModelError):
        transition((1, 2), 3, 0)


states2 = st.tuples(st.integers(0, 20), st.integers(0, 20))


@given(states2, st.integers(0, 2), st.integers(0, 2))
def test_transition_reverses(n, i, j):
    if i and n[i - 1] == 0:
        with pytest.raises(ModelError):
            transition(n, i, j)
        return
    t = transition(n, i, j)
    assert transition(t, j, i) == n
    delta = sum(t) - sum(n)
    assert delta == (1 if i == 0 and j else -1 if j == 0 and i else 0)


def test_box_states_lexicographic():
    s = box_states((1, 2))
    assert s == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]


def test_rate_examples():
    loss = LossRates([2.0], [1.0], [LinearConstraint((1,), 3)])
    assert rate(loss, (3,), 0, 1) == 0.0
    assert rate(loss, (2,), 0, 1) == 2.0
    assert rate(loss, (3,), 1, 0) == 3.0
    whittle = WhittleRates.constant([[0, 1, 0], [0.5, 0, 0.5], [1, 0, 0]], nu=1.0)
    assert rate(whittle, (2, 0), 1, 2) == pytest.approx(0.5)
    for model in (loss, whittle, SingleClassRates.erlang_loss(2.0, 3)):
        n = (1,) * model.num_classes
        assert rate(model, n, 0, 0) == 0.0


def test_jackson_service_rates():
    m = WhittleRates.jackson([0.5, 0.25], TANDEM, nu=1.0)
    assert rate(m, (3, 1), 1, 2) == pytest.approx(2.0)
    assert rate(m, (3, 1), 2, 0) == pytest.approx(4.0)
    assert rate(m, (0, 1), 1, 2) == 0.0
    assert rate(m, (0, 0), 0, 1) == 1.0


def test_single_class_rates():
    m = SingleClassRates.erlang_loss(2.0, 3)
    assert [m.alpha(n) for n in range(5)] == [2, 2, 2, 0, 0]
    assert [m.beta(n) for n in range(5)] == [0, 1, 2, 3, 4]
    q = SingleClassRates.ps_queue(0.5)
    assert [q.beta(n) for n in range(3)] == [0, 1, 1]


def test_validate_erlang_clean():
    assert validate_spec(SingleClassRates.erlang_loss(2.0, 3), [(n,) for n in range(8)]) == []


def test_validate_tabulated_rule():
    table = {(0, 1): [[0, 1, 0], [0, 0, 0.7], [0, 0, 0]]}
    # class 2 occupied but never served would add another violation; serve it
    table[(0, 1)][2][0] = 1.0
    v = validate_spec(TabulatedRates((1, 1), table), [(0, 1)])
    assert len(v) == 1
    assert v[0].rule == "phi_ij=0 when n_i=0"
    assert (v[0].state, v[0].i, v[0].j) == ((0, 1), 1, 2)


def test_validate_whittle_p00():
    m = WhittleRates.constant([[0.1, 0.9, 0], [0, 0, 1], [1, 0, 0]], nu=1.0)
    rules = [v.rule for v in validate_spec(m, [(0, 0), (1, 1)])]
    assert "p_00 must be 0" in rules


def test_validate_whittle_substochastic():
    m = WhittleRates.constant([[0, 1, 0], [0, 0, 0.5], [1, 0, 0]], nu=1.0)
    assert any(v.rule == "P must be stochastic" for v in validate_spec(m, [(0, 0)]))


def test_validate_loss_not_closed():
    m = LossRates([1.0, 1.0], [1.0, 1.0], states=[(0, 0), (1, 1)])
    assert any("closed under removals" in v.rule for v in validate_spec(m, [(1, 1)]))


def test_validate_beta_must_vanish_only_at_zero():
    m = SingleClassRates(lambda n: 1.0, lambda n: 1.0)
    assert any(v.rule == "beta(n)>0 iff n>0" for v in validate_spec(m, [(0,), (1,)]))


def test_tabulated_outside_box():
    m = TabulatedRates((1,), {(1,): [[0, 0], [1, 0]]})
    assert rate(m, (0,), 0, 1) == 0.0
    with pytest.raises(ModelError):
        m.matrix((2,))


def test_loss_states_enumeration():
    m = LossRates([1, 1], [1, 1], [LinearConstraint((1, 2), 4)])
    assert set(m.states()) == {(0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (0, 1), (1, 1), (2, 1), (0, 2)}


def test_spec_checks():
    erl = SingleClassRates.erlang_loss(2.0, 3)
    spec = NetworkSpec(1, erl, "ps", (Exponential(1.0),))
    assert spec.discipline is Discipline.PS
    assert spec.with_discipline("lifo").discipline is Discipline.LIFO_PR
    with pytest.raises(ModelError):
        NetworkSpec(1, erl, "ps", (Exponential(2.0),))
    with pytest.raises(ModelError):
        NetworkSpec(1, erl, "ps", ())
    tandem = WhittleRates.constant(TANDEM, 0.5)
    with pytest.raises(ModelError):
        NetworkSpec(2, tandem, "fifo", (Deterministic(1.0),) * 2)
    with pytest.raises(ModelError):
        Discipline.parse("random")


@given(st.lists(st.floats(0.1, 3.0), min_size=2, max_size=2), states2, st.integers(1, 2), st.integers(0, 2))
def test_whittle_rates_use_balance_ratio(lams, n, i, j):
    m = WhittleRates.jackson(lams, [[0, 0.5, 0.5], [0.2, 0.3, 0.5], [0.6, 0.4, 0]], nu=1.3)
    mat = m.matrix(n)
    if n[i - 1] == 0:
        assert not mat[i].any()
    else:
        assert mat[i, j] == pytest.approx(m.routing[i, j] / lams[i - 1])
    assert np.allclose(mat[0], 1.3 * m.routing[0])
