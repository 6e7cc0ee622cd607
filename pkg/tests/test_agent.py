import numpy as np
import pytest

from tscc import autodiff as ad
from tscc.agent import act, agent_act, build_surrogate_agent, coach_act
from tscc.autodiff import Parameter, Tape
from tscc.core import ActionVector, ImageTensor, LatentGaussian, StateVector
from tscc.jscc import compute_tscc_loss
from tscc.rng import Stream

STATE = np.array([[0.3, 0.5, 0.0, -0.2, 0.1, 1.0]])


def test_dense_agent_seeding():
    a = build_surrogate_agent((3, 4, 8), hidden_dims=(16,), seed=7)
    b = build_surrogate_agent((3, 4, 8), hidden_dims=(16,), seed=7)
    c = build_surrogate_agent((3, 4, 8), hidden_dims=(16,), seed=8)
    assert all(np.array_equal(p.value, q.value) for p, q in zip(a.parameters(), b.parameters()))
    assert not np.array_equal(a.parameters()[0].value, c.parameters()[0].value)
    assert a.checksum() == b.checksum() != c.checksum()
    assert all(p.frozen for p in a.parameters())


def test_default_agents_construct():
    dense = build_surrogate_agent((3, 32, 64))
    assert dense.hidden_dims == (256, 64) and dense.state_dim == 6
    structured = build_surrogate_agent((3, 32, 64), kind="structured")
    assert structured.describe()["gain"] == 4.0
    with pytest.raises(ValueError):
        build_surrogate_agent((3, 32, 64), kind="other")
    with pytest.raises(ValueError):
        build_surrogate_agent((1, 32, 64), kind="structured")


def test_regression_fixtures():
    dense = build_surrogate_agent((3, 32, 64), seed=7)
    zero = coach_act(dense, np.zeros((1, 6144)), np.zeros((1, 6)))[0]
    assert np.allclose(zero, [-0.6203533780826175, 0.5040218935222139, 0.543441788200491], rtol=0, atol=1e-12)
    structured = build_surrogate_agent((3, 32, 64), kind="structured")
    zero = coach_act(structured, np.zeros((1, 6144)), np.zeros((1, 6)))[0]
    assert np.allclose(zero, [0.0, 0.7310585786300049, 0.11920292202211755], rtol=0, atol=1e-12)
    gray = coach_act(structured, np.full((1, 6144), 0.5), STATE)[0]
    assert np.allclose(gray, [0.049958374957879935, 0.598687660112452, 0.11920292202211755], rtol=0, atol=1e-12)


@pytest.mark.parametrize("kind", ["structured", "dense"])
def test_actions_are_in_range_and_deterministic(kind):
    agent = build_surrogate_agent((3, 8, 16), kind=kind, **({"hidden_dims": (16,)} if kind == "dense" else {}))
    s = Stream(1, "agent", kind)
    y, m = s.uniform((50, 384)), s.normal((50, 6))
    a1, a2 = coach_act(agent, y, m), coach_act(agent, y, m)
    assert np.array_equal(a1, a2)
    assert np.all(np.abs(a1[:, 0]) <= 1) and np.all((a1[:, 1:] >= 0) & (a1[:, 1:] <= 1))


@pytest.mark.parametrize("kind", ["structured", "dense"])
def test_action_gradient_matches_finite_differences(kind):
    agent = build_surrogate_agent((3, 4, 8), kind=kind, **({"hidden_dims": (16,), "output_gain": 3.0}
                                                          if kind == "dense" else {}))
    s = Stream(2, "agent-fd", kind)
    y = Parameter(s.uniform((2, 96), 0.1, 0.9))
    m = s.normal((2, 6))
    w = s.normal((2, 3))
    err = ad.finite_difference_check(lambda: ad.sum(ad.mul(agent_act(agent, y, m), w)), [y], h=1e-5)
    assert err < 1e-5


def test_coach_matches_agent_and_is_off_tape():
    agent = build_surrogate_agent((3, 4, 8), kind="structured")
    x = ImageTensor(Stream(3, "x").uniform((3, 4, 8)))
    m = StateVector.from_array(STATE[0])
    y = Parameter(x.flat()[None, :])
    with Tape() as tape:
        on_tape = agent_act(agent, y, m)
        off_tape = coach_act(agent, y, m)
    assert np.array_equal(on_tape.value, off_tape)
    assert isinstance(off_tape, np.ndarray)
    assert len(tape) > 0
    loss = compute_tscc_loss(off_tape[0], [on_tape.value[0]], LatentGaussian(np.zeros(2), np.ones(2)))
    assert loss.total == 0.0


def test_act_returns_typed_action_and_checks_dims():
    agent = build_surrogate_agent((3, 4, 8), kind="structured")
    a = act(agent, ImageTensor(np.full((3, 4, 8), 0.5)), StateVector.from_array(STATE[0]))
    assert isinstance(a, ActionVector)
    with pytest.raises(ValueError):
        act(agent, ImageTensor(np.zeros((3, 4, 4))), StateVector.from_array(STATE[0]))
    with pytest.raises(ValueError):
        coach_act(agent, np.zeros((1, 96)), np.zeros((1, 5)))
