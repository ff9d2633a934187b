import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from datacollab.errors import DecodeError, ValidationError
from datacollab.learner import LabelMatrix
from datacollab.protocol.codec import (
    LABEL_KINDS,
    MATRIX_KINDS,
    Kind,
    Message,
    decode,
    encode,
    read_frame,
)

FIXTURE = Path(__file__).parent / "fixtures" / "intermediate_train.hex"


def golden_message():
    return Message(Kind.INTERMEDIATE_TRAIN, 2, 0x0123456789ABCDEF,
                   np.array([[1.5, -2.0, 0.25], [3.0, 1e-3, -0.0]]))


def reader(data):
    buf = {"pos": 0}

    def recv_exact(n):
        out = data[buf["pos"]:buf["pos"] + n]
        buf["pos"] += len(out)
        return out

    return recv_exact


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
matrices = hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=6), elements=finite)
class_names = st.lists(st.text(min_size=0, max_size=8), min_size=1, max_size=5, unique=True)


@st.composite
def label_blocks(draw):
    classes = draw(class_names)
    idx = draw(st.lists(st.integers(0, len(classes) - 1), max_size=20))
    return LabelMatrix(tuple(classes), np.array(idx, dtype=np.int64))


@st.composite
def messages(draw):
    kind = draw(st.sampled_from(list(Kind)))
    if kind in MATRIX_KINDS:
        payload = draw(matrices)
    elif kind in LABEL_KINDS:
        payload = draw(label_blocks())
    elif kind is Kind.ERROR:
        payload = draw(st.text(max_size=40))
    else:
        payload = None
    return Message(kind, draw(st.integers(0, 0xFFFF)), draw(st.integers(0, 2**64 - 1)), payload)


@settings(max_examples=200, deadline=None)
@given(messages())
def test_roundtrip(msg):
    data = encode(msg)
    assert decode(data) == msg
    assert read_frame(reader(data)) == msg


@pytest.mark.parametrize("kind", list(Kind))
def test_roundtrip_every_kind(kind):
    payload = {
        **{k: np.arange(6.0).reshape(2, 3) for k in MATRIX_KINDS},
        **{k: LabelMatrix.from_names(["a", "b", "a"]) for k in LABEL_KINDS},
        Kind.ERROR: "phase violation",
    }.get(kind)
    msg = Message(kind, 7, 99, payload)
    assert decode(encode(msg)) == msg


def test_one_by_one_payload_bytes():
    frame = encode(Message(Kind.ANCHOR, 0, 0, np.array([[42.0]])))
    payload = frame[4 + 11:]
    assert payload == bytes.fromhex("0100000001000000") + struct.pack("<d", 42.0)


def test_header_layout():
    frame = encode(Message(Kind.BYE, 0x0102, 0x1122334455667788))
    assert frame == bytes.fromhex("0b000000" "09" "0201" "8877665544332211")


def test_golden_fixture():
    assert encode(golden_message()).hex() == FIXTURE.read_text().strip()
    assert decode(bytes.fromhex(FIXTURE.read_text().strip())) == golden_message()


def test_label_layout():
    frame = encode(Message(Kind.LABELS, 1, 5, LabelMatrix(("x", "yz"), [1, 0])))
    payload = frame[15:]
    expected = (
        struct.pack("<I", 2) + struct.pack("<I", 1) + b"x" + struct.pack("<I", 2) + b"yz"
        + struct.pack("<I", 2) + struct.pack("<II", 1, 0)
    )
    assert payload == expected


class TestDecodeErrors:
    def test_truncated(self):
        data = encode(golden_message())
        for cut in (0, 3, 10, 20, len(data) - 1):
            with pytest.raises(DecodeError):
                decode(data[:cut])

    def test_truncated_stream(self):
        data = encode(golden_message())
        with pytest.raises(DecodeError):
            read_frame(reader(data[:-5]))
        with pytest.raises(DecodeError):
            read_frame(reader(data[:2]))
        assert read_frame(reader(b"")) is None

    def test_unknown_kind(self):
        data = bytearray(encode(Message(Kind.BYE, 0, 0)))
        data[4] = 200
        with pytest.raises(DecodeError, match="unknown"):
            decode(bytes(data))

    def test_shape_mismatch(self):
        data = bytearray(encode(golden_message()))
        data[15:19] = struct.pack("<I", 3)  # claim 3 rows, only 2 present
        with pytest.raises(DecodeError):
            decode(bytes(data))

    def test_huge_dims_not_trusted(self):
        body = struct.pack("<BHQ", Kind.ANCHOR, 0, 0) + struct.pack("<II", 0xFFFFFFFF, 0xFFFFFFFF)
        with pytest.raises(DecodeError):
            decode(struct.pack("<I", len(body)) + body)

    def test_huge_class_table_not_trusted(self):
        body = struct.pack("<BHQ", Kind.LABELS, 0, 0) + struct.pack("<I", 0xFFFFFFFF)
        with pytest.raises(DecodeError):
            decode(struct.pack("<I", len(body)) + body)

    def test_label_index_out_of_table(self):
        body = struct.pack("<BHQ", Kind.LABELS, 0, 0) + struct.pack("<II", 1, 1) + b"a" + struct.pack("<II", 1, 5)
        with pytest.raises(DecodeError):
            decode(struct.pack("<I", len(body)) + body)

    def test_frame_cap(self):
        data = encode(golden_message())
        with pytest.raises(DecodeError, match="cap"):
            decode(data, max_frame=10)
        # the stream reader refuses before reading the body
        calls = []

        def recv_exact(n):
            calls.append(n)
            return struct.pack("<I", 1 << 30) if len(calls) == 1 else pytest.fail("read body")

        with pytest.raises(DecodeError, match="cap"):
            read_frame(recv_exact, max_frame=1 << 20)

    def test_trailing_bytes(self):
        body = struct.pack("<BHQ", Kind.BYE, 0, 0) + b"\x00"
        with pytest.raises(DecodeError, match="trailing"):
            decode(struct.pack("<I", len(body)) + body)

    def test_non_finite_matrix(self):
        body = struct.pack("<BHQ", Kind.ANCHOR, 0, 0) + struct.pack("<II", 1, 1) + struct.pack("<d", float("nan"))
        with pytest.raises(DecodeError, match="non-finite"):
            decode(struct.pack("<I", len(body)) + body)

    def test_length_disagrees(self):
        data = encode(golden_message()) + b"\x00"
        with pytest.raises(DecodeError):
            decode(data)


def test_payload_rules_enforced_at_construction():
    with pytest.raises(ValidationError):
        Message(Kind.ANCHOR, 0, 0, None)
    with pytest.raises(ValidationError):
        Message(Kind.HELLO, 0, 0, np.ones((1, 1)))
    with pytest.raises(ValidationError):
        Message(Kind.LABELS, 0, 0, np.ones((1, 1)))
    with pytest.raises(ValidationError):
        Message(Kind.BYE, 0x10000, 0)
