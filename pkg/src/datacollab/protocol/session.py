"""Coordinator session as a pure transition function.

``coordinator_step(state, msg)`` never mutates ``state``; it returns the next
state and the messages to send.  Transport code applies steps one at a time
under a lock, so arrival order is the only serialization point.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from ..collaboration import AnchorSet
from ..errors import DataCollabError
from ..pipeline import Collaboration, LearnerSpec, collaborate, predict_party
from .codec import UNASSIGNED, Kind, Message

PHASES = ("awaiting-parties", "collecting", "collaborating", "trained", "predicting", "done")
DATA_KINDS = (Kind.INTERMEDIATE_TRAIN, Kind.INTERMEDIATE_ANCHOR, Kind.LABELS)


@dataclass(frozen=True)
class Outgoing:
    """A message to deliver; ``to=None`` means back to the sender."""

    to: Optional[int]
    msg: Message


@dataclass(frozen=True, eq=False)
class CoordinatorConfig:
    parties: int
    anchor: AnchorSet
    session: int
    ell: Optional[int] = None
    learner: LearnerSpec = LearnerSpec()


@dataclass(frozen=True, eq=False)
class SessionState:
    config: CoordinatorConfig
    phase: str = "awaiting-parties"
    registered: tuple = ()
    # per-slot dicts keyed by Kind for the three data uploads
    received: tuple = ()
    served: tuple = ()
    finished: tuple = ()
    collaboration: Optional[Collaboration] = None
    error: Optional[str] = field(default=None)

    @property
    def transform(self):
        return None if self.collaboration is None else self.collaboration.transform

    def has_all_data(self) -> bool:
        return all(self.registered) and all(len(r) == len(DATA_KINDS) for r in self.received)


def new_session(config: CoordinatorConfig) -> SessionState:
    d = config.parties
    return SessionState(
        config=config,
        registered=(False,) * d,
        received=tuple({} for _ in range(d)),
        served=(False,) * d,
        finished=(False,) * d,
    )


def _set(tup: tuple, i: int, value) -> tuple:
    return tup[:i] + (value,) + tup[i + 1:]


def _error(state: SessionState, text: str, to: Optional[int] = None):
    msg = Message(Kind.ERROR, UNASSIGNED if to is None else to, state.config.session, text)
    return state, [Outgoing(to, msg)]


def _hello(state: SessionState, msg: Message):
    if state.phase != "awaiting-parties":
        return _error(state, "phase violation: session is not accepting parties")
    free = [i for i, taken in enumerate(state.registered) if not taken]
    if not free:
        return _error(state, "session full")
    # a party may ask for a slot so repeated runs get a stable order
    slot = msg.party_id if msg.party_id in free else free[0]
    registered = _set(state.registered, slot, True)
    phase = "collecting" if all(registered) else state.phase
    new = replace(state, registered=registered, phase=phase)
    reply = Message(Kind.ANCHOR, slot, state.config.session, state.config.anchor.x_anc)
    return new, [Outgoing(slot, reply)]


def _check_upload(state: SessionState, pid: int, kind: Kind, payload, got: dict) -> Optional[str]:
    r = state.config.anchor.r
    if kind is Kind.INTERMEDIATE_ANCHOR and payload.shape[1] != r:
        return f"anchor image has {payload.shape[1]} columns, expected r={r}"
    if kind is Kind.INTERMEDIATE_ANCHOR and payload.shape[0] > r:
        return f"party dimension {payload.shape[0]} exceeds r={r}"
    train = payload if kind is Kind.INTERMEDIATE_TRAIN else got.get(Kind.INTERMEDIATE_TRAIN)
    anc = payload if kind is Kind.INTERMEDIATE_ANCHOR else got.get(Kind.INTERMEDIATE_ANCHOR)
    labels = payload if kind is Kind.LABELS else got.get(Kind.LABELS)
    if train is not None and anc is not None and train.shape[0] != anc.shape[0]:
        return f"training image has {train.shape[0]} rows, anchor image {anc.shape[0]}"
    if train is not None and labels is not None and train.shape[1] != labels.n:
        return f"{labels.n} labels for {train.shape[1]} training columns"
    return None


def _collaborate(state: SessionState):
    d = state.config.parties
    anchors = [state.received[i][Kind.INTERMEDIATE_ANCHOR] for i in range(d)]
    trains = [state.received[i][Kind.INTERMEDIATE_TRAIN] for i in range(d)]
    labels = [state.received[i][Kind.LABELS] for i in range(d)]
    try:
        collab = collaborate(anchors, trains, labels, state.config.ell, state.config.learner)
    except DataCollabError as exc:
        failed = replace(state, phase="done", error=str(exc))
        text = f"collaboration failed: {exc}"
        return failed, [Outgoing(i, Message(Kind.ERROR, i, state.config.session, text)) for i in range(d)]
    trained = replace(state, phase="trained", collaboration=collab)
    return trained, [Outgoing(i, Message(Kind.READY, i, state.config.session)) for i in range(d)]


def _upload(state: SessionState, msg: Message):
    pid = msg.party_id
    if state.phase not in ("awaiting-parties", "collecting"):
        return _error(state, "phase violation: uploads are closed", pid)
    got = state.received[pid]
    if msg.kind in got:
        return _error(state, f"duplicate {msg.kind.name} from party {pid}", pid)
    problem = _check_upload(state, pid, msg.kind, msg.payload, got)
    if problem:
        return _error(state, problem, pid)
    new = replace(state, received=_set(state.received, pid, {**got, msg.kind: msg.payload}))
    if not new.has_all_data():
        return new, []
    return _collaborate(replace(new, phase="collaborating"))


def _test(state: SessionState, msg: Message):
    pid = msg.party_id
    if state.phase not in ("trained", "predicting"):
        return _error(state, "phase violation: model is not trained yet", pid)
    if state.served[pid]:
        return _error(state, f"duplicate TEST_INTERMEDIATE from party {pid}", pid)
    try:
        preds = predict_party(state.collaboration, pid, msg.payload)
    except DataCollabError as exc:
        return _error(state, str(exc), pid)
    new = replace(state, phase="predicting", served=_set(state.served, pid, True))
    return new, [Outgoing(pid, Message(Kind.PREDICTIONS, pid, state.config.session, preds))]


def _bye(state: SessionState, msg: Message):
    pid = msg.party_id
    if state.finished[pid]:
        return _error(state, f"duplicate BYE from party {pid}", pid)
    finished = _set(state.finished, pid, True)
    phase = "done" if all(finished) else state.phase
    return replace(state, finished=finished, phase=phase), []


def coordinator_step(state: SessionState, msg: Message):
    """Apply one inbound message; returns ``(new_state, [Outgoing, ...])``.

    Invalid messages leave the state unchanged and produce an ERROR reply.
    """
    if msg.kind is Kind.HELLO:
        return _hello(state, msg)
    if state.phase == "done":
        return _error(state, "phase violation: session is finished")
    pid = msg.party_id
    if msg.session != state.config.session:
        return _error(state, f"unknown session {msg.session}")
    if not (0 <= pid < state.config.parties and state.registered[pid]):
        return _error(state, f"party {pid} is not registered")
    if msg.kind in DATA_KINDS:
        return _upload(state, msg)
    if msg.kind is Kind.TEST_INTERMEDIATE:
        return _test(state, msg)
    if msg.kind is Kind.BYE:
        return _bye(state, msg)
    return _error(state, f"coordinator does not accept {msg.kind.name}", pid)

