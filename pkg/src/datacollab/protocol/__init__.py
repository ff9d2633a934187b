"""Coordinator/party protocol realising the collaboration over a byte stream."""
from .codec import DEFAULT_MAX_FRAME, UNASSIGNED, Kind, Message, decode, encode, read_frame
from .net import Connection, Coordinator, PartyOutcome, RecordingConnection, connect, party_run, run_loopback
from .session import (
    PHASES,
    CoordinatorConfig,
    Outgoing,
    SessionState,
    coordinator_step,
    new_session,
)

__all__ = [
    "DEFAULT_MAX_FRAME", "UNASSIGNED", "Kind", "Message", "decode", "encode", "read_frame",
    "Connection", "Coordinator", "PartyOutcome", "RecordingConnection", "connect", "party_run", "run_loopback",
    "PHASES", "CoordinatorConfig", "Outgoing", "SessionState", "coordinator_step", "new_session",
]
