"""Binary framing for coordinator/party messages.

Frame layout, all integers little-endian::

    u32 length      bytes that follow this field
    u8  kind
    u16 party_id
    u64 session
    payload

Matrix payload: ``u32 rows, u32 cols`` then ``rows*cols`` float64 in
row-major order.  Label payload: ``u32 n_classes``, each class as
``u32 nbytes`` + UTF-8, then ``u32 n`` and ``n`` u32 class indices.
Error payload: ``u32 nbytes`` + UTF-8 text.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..errors import DecodeError, ValidationError
from ..learner import LabelMatrix

DEFAULT_MAX_FRAME = 256 * 1024 * 1024
UNASSIGNED = 0xFFFF

_LEN = struct.Struct("<I")
_HEADER = struct.Struct("<BHQ")
_U32 = struct.Struct("<I")
_DIMS = struct.Struct("<II")


class Kind(enum.IntEnum):
    HELLO = 1
    ANCHOR = 2
    INTERMEDIATE_TRAIN = 3
    INTERMEDIATE_ANCHOR = 4
    LABELS = 5
    TEST_INTERMEDIATE = 6
    PREDICTIONS = 7
    ERROR = 8
    BYE = 9
    READY = 10


MATRIX_KINDS = frozenset({Kind.ANCHOR, Kind.INTERMEDIATE_TRAIN, Kind.INTERMEDIATE_ANCHOR, Kind.TEST_INTERMEDIATE})
LABEL_KINDS = frozenset({Kind.LABELS, Kind.PREDICTIONS})
EMPTY_KINDS = frozenset({Kind.HELLO, Kind.BYE, Kind.READY})

Payload = Union[None, np.ndarray, LabelMatrix, str]


@dataclass(frozen=True, eq=False)
class Message:
    kind: Kind
    party_id: int = UNASSIGNED
    session: int = 0
    payload: Payload = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not 0 <= self.party_id <= 0xFFFF:
            raise ValidationError(f"party_id {self.party_id} does not fit in 16 bits")
        if not 0 <= self.session < 2**64:
            raise ValidationError(f"session {self.session} does not fit in 64 bits")
        _check_payload(self.kind, self.payload)

    def __eq__(self, other):
        if not isinstance(other, Message):
            return NotImplemented
        if (self.kind, self.party_id, self.session) != (other.kind, other.party_id, other.session):
            return False
        if isinstance(self.payload, np.ndarray):
            return isinstance(other.payload, np.ndarray) and np.array_equal(self.payload, other.payload)
        return self.payload == other.payload

    def __repr__(self):
        p = self.payload
        desc = f"matrix{p.shape}" if isinstance(p, np.ndarray) else repr(p)
        return f"Message({self.kind.name}, party={self.party_id}, session={self.session}, {desc})"


def _check_payload(kind, payload):
    if kind in MATRIX_KINDS:
        ok = isinstance(payload, np.ndarray) and payload.ndim == 2 and min(payload.shape) >= 1
    elif kind in LABEL_KINDS:
        ok = isinstance(payload, LabelMatrix)
    elif kind is Kind.ERROR:
        ok = isinstance(payload, str)
    else:
        ok = payload is None
    if not ok:
        raise ValidationError(f"{kind.name} cannot carry payload {type(payload).__name__}")


def _encode_payload(kind, payload) -> bytes:
    if kind in MATRIX_KINDS:
        a = np.asarray(payload, dtype="<f8")
        return _DIMS.pack(*a.shape) + np.ascontiguousarray(a).tobytes()
    if kind in LABEL_KINDS:
        parts = [_U32.pack(len(payload.classes))]
        for c in payload.classes:
            raw = c.encode("utf-8")
            parts += [_U32.pack(len(raw)), raw]
        parts.append(_U32.pack(payload.n))
        parts.append(payload.indices.astype("<u4").tobytes())
        return b"".join(parts)
    if kind is Kind.ERROR:
        raw = payload.encode("utf-8")
        return _U32.pack(len(raw)) + raw
    return b""


def encode(msg: Message) -> bytes:
    body = _HEADER.pack(int(msg.kind), msg.party_id, msg.session) + _encode_payload(msg.kind, msg.payload)
    return _LEN.pack(len(body)) + body


class _Reader:
    def __init__(self, buf: memoryview, pos: int = 0):
        self.buf = buf
        self.pos = pos

    def take(self, n: int) -> memoryview:
        if n < 0 or self.pos + n > len(self.buf):
            raise DecodeError(f"truncated payload: need {n} bytes at offset {self.pos}, have {len(self.buf) - self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    @property
    def remaining(self) -> int:
        return len(self.buf) - self.pos


def _decode_matrix(rd: _Reader) -> np.ndarray:
    rows, cols = _DIMS.unpack(rd.take(8))
    if rows < 1 or cols < 1:
        raise DecodeError(f"matrix payload has empty shape {rows}x{cols}")
    if rows * cols * 8 != rd.remaining:
        raise DecodeError(f"matrix {rows}x{cols} needs {rows * cols * 8} bytes, frame has {rd.remaining}")
    a = np.frombuffer(rd.take(rows * cols * 8), dtype="<f8").astype(np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(a)):
        raise DecodeError("matrix payload contains non-finite entries")
    a.setflags(write=False)
    return a


def _decode_labels(rd: _Reader) -> LabelMatrix:
    ncls = rd.u32()
    # every class needs at least its 4-byte length prefix
    if ncls * 4 > rd.remaining:
        raise DecodeError(f"class table of {ncls} entries exceeds frame")
    classes = []
    for _ in range(ncls):
        nbytes = rd.u32()
        try:
            classes.append(bytes(rd.take(nbytes)).decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise DecodeError(f"class name is not UTF-8: {exc}") from None
    n = rd.u32()
    if n * 4 != rd.remaining:
        raise DecodeError(f"{n} label indices need {n * 4} bytes, frame has {rd.remaining}")
    idx = np.frombuffer(rd.take(n * 4), dtype="<u4").astype(np.int64)
    if n and idx.max() >= ncls:
        raise DecodeError(f"label index {int(idx.max())} outside class table of size {ncls}")
    try:
        return LabelMatrix(tuple(classes), idx)
    except ValidationError as exc:
        raise DecodeError(str(exc)) from None


def decode(data: bytes, max_frame: int = DEFAULT_MAX_FRAME) -> Message:
    """Decode one complete frame (including its length prefix)."""
    buf = memoryview(bytes(data))
    if len(buf) < _LEN.size:
        raise DecodeError("truncated frame: missing length prefix")
    (length,) = _LEN.unpack(buf[:4])
    if length > max_frame:
        raise DecodeError(f"frame length {length} exceeds cap {max_frame}")
    if length != len(buf) - 4:
        raise DecodeError(f"frame declares {length} bytes, got {len(buf) - 4}")
    return decode_body(buf[4:])


def decode_body(body) -> Message:
    body = memoryview(body)
    if len(body) < _HEADER.size:
        raise DecodeError("truncated frame: incomplete header")
    tag, party_id, session = _HEADER.unpack(body[:_HEADER.size])
    try:
        kind = Kind(tag)
    except ValueError:
        raise DecodeError(f"unknown message kind {tag}") from None
    rd = _Reader(body, _HEADER.size)
    payload: Payload = None
    if kind in MATRIX_KINDS:
        payload = _decode_matrix(rd)
    elif kind in LABEL_KINDS:
        payload = _decode_labels(rd)
    elif kind is Kind.ERROR:
        nbytes = rd.u32()
        try:
            payload = bytes(rd.take(nbytes)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"error text is not UTF-8: {exc}") from None
    if rd.remaining:
        raise DecodeError(f"{rd.remaining} trailing bytes after {kind.name} payload")
    return Message(kind, party_id, session, payload)


def read_frame(recv_exact, max_frame: int = DEFAULT_MAX_FRAME) -> Optional[Message]:
    """Read one message using ``recv_exact(n) -> bytes``.

    Returns None on a clean end of stream before any byte of a new frame.
    The declared length is checked against ``max_frame`` before the body
    is read.
    """
    head = recv_exact(4)
    if not head:
        return None
    if len(head) < 4:
        raise DecodeError("truncated frame: stream ended inside length prefix")
    (length,) = _LEN.unpack(head)
    if length > max_frame:
        raise DecodeError(f"frame length {length} exceeds cap {max_frame}")
    body = recv_exact(length)
    if len(body) < length:
        raise DecodeError(f"truncated frame: expected {length} bytes, stream ended after {len(body)}")
    return decode_body(body)
