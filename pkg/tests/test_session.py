import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from datacollab import pipeline
from datacollab.collaboration import generate_anchor
from datacollab.learner import LabelMatrix
from datacollab.pipeline import LearnerSpec
from datacollab.protocol.codec import UNASSIGNED, Kind, Message
from datacollab.protocol.session import PHASES, CoordinatorConfig, coordinator_step, new_session

SESSION = 0xABCDEF


def make_state(parties=2, m=4, r=8, ell=2):
    cfg = CoordinatorConfig(parties, generate_anchor(m, r, 3), SESSION, ell=ell, learner=LearnerSpec(ridge=0.0))
    return new_session(cfg)


def uploads(pid, seed, dim=2, r=8, n=6):
    g = np.random.default_rng(seed)
    return [
        Message(Kind.INTERMEDIATE_TRAIN, pid, SESSION, g.standard_normal((dim, n))),
        Message(Kind.INTERMEDIATE_ANCHOR, pid, SESSION, g.standard_normal((dim, r))),
        Message(Kind.LABELS, pid, SESSION, LabelMatrix.from_names(["a", "b"] * (n // 2))),
    ]


def step_all(state, msgs):
    outs = []
    for m in msgs:
        state, out = coordinator_step(state, m)
        outs.extend(out)
    return state, outs


def is_error(outs):
    return len(outs) == 1 and outs[0].msg.kind is Kind.ERROR


def test_hello_gets_anchor():
    state = make_state()
    new, out = coordinator_step(state, Message(Kind.HELLO))
    assert len(out) == 1 and out[0].msg.kind is Kind.ANCHOR
    assert out[0].to == 0 and out[0].msg.party_id == 0 and out[0].msg.session == SESSION
    np.testing.assert_array_equal(out[0].msg.payload, state.config.anchor.x_anc)
    assert new.registered == (True, False) and state.registered == (False, False)


def test_requested_slot_is_honoured():
    state = make_state(3)
    state, out = coordinator_step(state, Message(Kind.HELLO, 2))
    assert out[0].to == 2
    state, out = coordinator_step(state, Message(Kind.HELLO, 2))
    assert out[0].to == 0


def test_session_full():
    state, _ = step_all(make_state(1), [Message(Kind.HELLO)])
    new, out = coordinator_step(state, Message(Kind.HELLO))
    assert is_error(out) and new is state


def test_test_before_training_is_phase_violation():
    state, _ = step_all(make_state(), [Message(Kind.HELLO), Message(Kind.HELLO)] + uploads(0, 1))
    new, out = coordinator_step(state, Message(Kind.TEST_INTERMEDIATE, 0, SESSION, np.ones((2, 3))))
    assert is_error(out) and "phase violation" in out[0].msg.payload
    assert new is state


def test_duplicate_upload_rejected():
    state, _ = step_all(make_state(), [Message(Kind.HELLO), Message(Kind.HELLO)] + uploads(0, 1)[:1])
    new, out = coordinator_step(state, uploads(0, 2)[0])
    assert is_error(out) and "duplicate" in out[0].msg.payload and new is state


def test_bad_shapes_rejected():
    state, _ = step_all(make_state(), [Message(Kind.HELLO), Message(Kind.HELLO)])
    bad = Message(Kind.INTERMEDIATE_ANCHOR, 0, SESSION, np.ones((2, 7)))
    new, out = coordinator_step(state, bad)
    assert is_error(out) and new is state
    state, _ = coordinator_step(state, uploads(0, 1)[0])
    bad_labels = Message(Kind.LABELS, 0, SESSION, LabelMatrix.from_names(["a"] * 5))
    new, out = coordinator_step(state, bad_labels)
    assert is_error(out) and new is state


def test_wrong_session_and_unregistered_party():
    state, _ = step_all(make_state(), [Message(Kind.HELLO)])
    _, out = coordinator_step(state, Message(Kind.BYE, 0, SESSION + 1))
    assert is_error(out)
    _, out = coordinator_step(state, Message(Kind.BYE, 1, SESSION))
    assert is_error(out)


def test_coordinator_only_kinds_rejected():
    state, _ = step_all(make_state(), [Message(Kind.HELLO)])
    new, out = coordinator_step(state, Message(Kind.READY, 0, SESSION))
    assert is_error(out) and new is state


def test_full_exchange():
    state, outs = step_all(make_state(), [Message(Kind.HELLO), Message(Kind.HELLO)] + uploads(0, 1) + uploads(1, 2))
    assert state.phase == "trained"
    ready = [o for o in outs if o.msg.kind is Kind.READY]
    assert sorted(o.to for o in ready) == [0, 1]
    assert state.transform.ell == 2
    # uploads are closed after training
    _, out = coordinator_step(state, uploads(0, 3)[0])
    assert is_error(out)
    state, out = coordinator_step(state, Message(Kind.TEST_INTERMEDIATE, 1, SESSION, np.ones((2, 3))))
    assert out[0].msg.kind is Kind.PREDICTIONS and out[0].to == 1 and out[0].msg.payload.n == 3
    assert state.phase == "predicting"
    _, out = coordinator_step(state, Message(Kind.TEST_INTERMEDIATE, 1, SESSION, np.ones((2, 3))))
    assert is_error(out)
    state, _ = step_all(state, [Message(Kind.BYE, 0, SESSION), Message(Kind.BYE, 1, SESSION)])
    assert state.phase == "done"


def test_rank_failure_ends_session():
    state = make_state(1, ell=2)
    msgs = [Message(Kind.HELLO)] + [
        Message(Kind.INTERMEDIATE_TRAIN, 0, SESSION, np.ones((2, 4))),
        Message(Kind.INTERMEDIATE_ANCHOR, 0, SESSION, np.ones((2, 8))),
        Message(Kind.LABELS, 0, SESSION, LabelMatrix.from_names("abab")),
    ]
    state, outs = step_all(state, msgs)
    assert state.phase == "done" and state.error and "rank" in state.error
    assert outs[-1].msg.kind is Kind.ERROR


# --- phase safety over random interleavings ---------------------------------

ACTIONS = st.lists(
    st.tuples(
        st.sampled_from(["hello", "train", "anchor", "labels", "test", "bye", "junk", "badsession"]),
        st.integers(0, 3),
        st.integers(0, 5),
    ),
    max_size=40,
)


def to_message(action, pid, seed):
    g = np.random.default_rng(seed)
    if action == "hello":
        return Message(Kind.HELLO, pid if seed % 2 else UNASSIGNED)
    if action in ("train", "anchor", "labels"):
        return uploads(pid, seed)[["train", "anchor", "labels"].index(action)]
    if action == "test":
        return Message(Kind.TEST_INTERMEDIATE, pid, SESSION, g.standard_normal((2, 2)))
    if action == "bye":
        return Message(Kind.BYE, pid, SESSION)
    if action == "badsession":
        return Message(Kind.LABELS, pid, SESSION + 1, LabelMatrix.from_names("ab"))
    return Message(Kind.PREDICTIONS, pid, SESSION, LabelMatrix.from_names("ab"))


@settings(max_examples=150, deadline=None)
@given(ACTIONS)
def test_phase_safety(actions):
    calls = []
    real = pipeline.collaborate

    def guarded(anchors, trains, labels, ell, learner):
        calls.append(len(anchors))
        return real(anchors, trains, labels, ell, learner)

    import datacollab.protocol.session as session_mod
    session_mod.collaborate = guarded
    try:
        state = make_state(3)
        order = list(PHASES)
        for action, pid, seed in actions:
            msg = to_message(action, pid, seed)
            before = state
            state, outs = coordinator_step(state, msg)
            if any(o.msg.kind is Kind.ERROR for o in outs) and state.error is None:
                assert state is before
            assert order.index(state.phase) >= order.index(before.phase)
            if state.collaboration is not None:
                assert all(state.registered)
                assert all(len(r) == 3 for r in state.received)
        assert all(n == 3 for n in calls)
        assert len(calls) <= 1
    finally:
        session_mod.collaborate = real



def full_script(d=3):
    msgs = [Message(Kind.HELLO, i) for i in range(d)]
    for i in range(d):
        msgs += uploads(i, 10 + i)
    return msgs


@settings(max_examples=100, deadline=None)
@given(st.permutations(range(12)), st.lists(st.tuples(st.integers(0, 12), st.sampled_from(["test", "junk", "train", "bye"]), st.integers(0, 2)), max_size=8))
def test_shuffled_complete_script_collaborates_once(perm, noise):
    script = full_script()
    hellos, data = script[:3], script[3:]
    # HELLOs first (a party cannot upload before it has an id), then data in any order
    msgs = list(hellos) + [data[i] for i in perm if i < len(data)]
    for pos, action, pid in sorted(noise, reverse=True):
        msgs.insert(3 + min(pos, len(data)), to_message(action, pid, pos))
    state = make_state(3)
    trained_at = None
    for k, msg in enumerate(msgs):
        had = state.collaboration is not None
        state, _ = coordinator_step(state, msg)
        if state.collaboration is not None and not had:
            trained_at = k
            assert all(len(r) == 3 for r in state.received)
    if state.phase != "done":  # noise BYEs can end a session early
        assert trained_at is not None or any(
            len(r) < 3 for r in state.received
        )
