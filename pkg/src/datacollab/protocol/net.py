"""TCP transport: the coordinator server and the party client.

Topology is a star.  Parties upload only their intermediate
representations, anchor images, training labels and mapped test data; the
raw data and the fitted mapper never leave :func:`party_run`.  There is no
transport encryption.
"""
from __future__ import annotations

import logging
import socket
import threading
from dataclasses import dataclass
from typing import Optional

from ..errors import DataCollabError, DecodeError, ProtocolError
from ..mappers import apply
from ..pipeline import MapperSpec, PartyDataset, fit_party_mapper
from .codec import DEFAULT_MAX_FRAME, UNASSIGNED, Kind, Message, encode, read_frame
from .session import CoordinatorConfig, SessionState, coordinator_step, new_session

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.0


class Connection:
    """Length-prefixed message stream over a connected socket."""

    def __init__(self, sock: socket.socket, max_frame: int = DEFAULT_MAX_FRAME):
        self.sock = sock
        self.max_frame = max_frame
        self._send_lock = threading.Lock()

    def _recv_exact(self, n: int) -> bytes:
        chunks, got = [], 0
        while got < n:
            chunk = self.sock.recv(min(n - got, 1 << 20))
            if not chunk:
                break
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def _write(self, data: bytes) -> None:
        self.sock.sendall(data)

    def send(self, msg: Message) -> None:
        data = encode(msg)
        with self._send_lock:
            try:
                self._write(data)
            except OSError as exc:
                raise ProtocolError(f"connection lost while sending {msg.kind.name}: {exc}") from exc

    def recv(self) -> Optional[Message]:
        try:
            return read_frame(self._recv_exact, self.max_frame)
        except socket.timeout as exc:
            raise ProtocolError("timed out waiting for a message") from exc
        except OSError as exc:
            raise ProtocolError(f"connection lost: {exc}") from exc

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class RecordingConnection(Connection):
    """Connection that keeps a copy of every outbound frame in ``sent``."""

    def __init__(self, sock, max_frame: int = DEFAULT_MAX_FRAME):
        super().__init__(sock, max_frame)
        self.sent: list[bytes] = []

    def _write(self, data: bytes) -> None:
        self.sent.append(bytes(data))
        super()._write(data)


def connect(host: str, port: int, timeout: float = DEFAULT_TIMEOUT, recording: bool = False) -> Connection:
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise ProtocolError(f"cannot connect to {host}:{port}: {exc}") from exc
    sock.settimeout(timeout)
    cls = RecordingConnection if recording else Connection
    return cls(sock)


class Coordinator:
    """Accepts party connections and drives :func:`coordinator_step`.

    Steps are applied under a single lock in arrival order.  A registered
    party dropping its connection before BYE fails the whole session.
    """

    def __init__(self, config: CoordinatorConfig, host: str = "127.0.0.1", port: int = 0,
                 max_frame: int = DEFAULT_MAX_FRAME, timeout: float = DEFAULT_TIMEOUT):
        self.state: SessionState = new_session(config)
        self.max_frame = max_frame
        self.timeout = timeout
        self.failure: Optional[DataCollabError] = None
        self._lock = threading.Lock()
        self._done = threading.Event()
        self._conns: dict[int, Connection] = {}
        self._threads: list[threading.Thread] = []
        self._server = socket.create_server((host, port))
        self._server.settimeout(0.1)

    @property
    def address(self) -> tuple[str, int]:
        return self._server.getsockname()[:2]

    def _fail(self, exc: DataCollabError) -> None:
        if self.failure is None:
            self.failure = exc
        self._done.set()

    def _deliver(self, sender: Connection, outgoing) -> None:
        for out in outgoing:
            target = sender if out.to is None else self._conns.get(out.to, sender)
            try:
                target.send(out.msg)
            except ProtocolError as exc:
                log.warning("could not deliver %s: %s", out.msg.kind.name, exc)

    def _handle(self, conn: Connection) -> None:
        party = None
        try:
            while not self._done.is_set():
                try:
                    msg = conn.recv()
                except DecodeError as exc:
                    conn.send(Message(Kind.ERROR, UNASSIGNED, self.state.config.session, f"decode error: {exc}"))
                    raise
                if msg is None:
                    break
                with self._lock:
                    self.state, outgoing = coordinator_step(self.state, msg)
                    for out in outgoing:
                        if msg.kind is Kind.HELLO and out.msg.kind is Kind.ANCHOR:
                            party = out.to
                            self._conns[party] = conn
                    self._deliver(conn, outgoing)
                    if self.state.error is not None:
                        self._fail(ProtocolError(self.state.error))
                    if self.state.phase == "done":
                        self._done.set()
        except ProtocolError as exc:
            if party is not None:
                self._fail(exc)
        finally:
            if party is not None and not self.state.finished[party] and not self._done.is_set():
                self._fail(ProtocolError(f"party {party} disconnected before finishing"))
            conn.close()

    def serve(self) -> SessionState:
        """Run until every party said BYE or the session failed."""
        try:
            while not self._done.is_set():
                try:
                    sock, _ = self._server.accept()
                except socket.timeout:
                    continue
                sock.settimeout(self.timeout)
                conn = Connection(sock, self.max_frame)
                t = threading.Thread(target=self._handle, args=(conn,), daemon=True)
                t.start()
                self._threads.append(t)
        finally:
            self._server.close()
            if self.failure is not None:
                for c in list(self._conns.values()):
                    c.close()
            for t in self._threads:
                t.join(timeout=self.timeout)
        if self.failure is not None:
            raise self.failure
        return self.state

    def serve_in_thread(self) -> threading.Thread:
        def target():
            try:
                self.serve()
            except DataCollabError as exc:
                self._fail(exc)

        t = threading.Thread(target=target, daemon=True)
        t.start()
        return t


@dataclass(frozen=True, eq=False)
class PartyOutcome:
    party_id: int
    session: int
    predictions: object  # LabelMatrix


def _expect(conn: Connection, kind: Kind) -> Message:
    msg = conn.recv()
    if msg is None:
        raise ProtocolError(f"coordinator closed the connection while waiting for {kind.name}")
    if msg.kind is Kind.ERROR:
        raise ProtocolError(f"coordinator error: {msg.payload}")
    if msg.kind is not kind:
        raise ProtocolError(f"expected {kind.name}, got {msg.kind.name}")
    return msg


def party_run(data: PartyDataset, spec: MapperSpec, conn: Connection,
              requested_id: Optional[int] = None) -> PartyOutcome:
    """Play one party's side of the session over ``conn``.

    The mapper is fitted here and used only here; the frames sent carry the
    mapped training data, mapped anchor, training labels and mapped test data.
    """
    try:
        conn.send(Message(Kind.HELLO, UNASSIGNED if requested_id is None else requested_id, 0))
        anchor_msg = _expect(conn, Kind.ANCHOR)
        pid, session = anchor_msg.party_id, anchor_msg.session
        f = fit_party_mapper(data, spec)
        conn.send(Message(Kind.INTERMEDIATE_TRAIN, pid, session, apply(f, data.x_train)))
        conn.send(Message(Kind.INTERMEDIATE_ANCHOR, pid, session, apply(f, anchor_msg.payload)))
        conn.send(Message(Kind.LABELS, pid, session, data.y_train))
        _expect(conn, Kind.READY)
        conn.send(Message(Kind.TEST_INTERMEDIATE, pid, session, apply(f, data.x_test)))
        preds = _expect(conn, Kind.PREDICTIONS).payload
        conn.send(Message(Kind.BYE, pid, session))
        return PartyOutcome(pid, session, preds)
    finally:
        conn.close()


def run_loopback(parties, specs, config: CoordinatorConfig, recording: bool = False,
                 timeout: float = DEFAULT_TIMEOUT):
    """Run a full session over 127.0.0.1 with every party in its own thread.

    Returns ``(final_state, outcomes, connections)``; with ``recording`` the
    party connections keep their outbound frames for inspection.
    """
    coord = Coordinator(config, timeout=timeout)
    host, port = coord.address
    server = coord.serve_in_thread()
    conns = [connect(host, port, timeout=timeout, recording=recording) for _ in parties]
    outcomes: list = [None] * len(parties)
    errors: list = []

    def play(i):
        try:
            outcomes[i] = party_run(parties[i], specs[i], conns[i], requested_id=i)
        except DataCollabError as exc:
            errors.append(exc)

    threads = [threading.Thread(target=play, args=(i,), daemon=True) for i in range(len(parties))]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout)
    server.join(timeout)
    if coord.failure is not None:
        raise coord.failure
    if errors:
        raise errors[0]
    return coord.state, outcomes, conns
