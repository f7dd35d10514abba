"""Wire format.

One frame on the wire, all integers big-endian::

    total_length u32 | kind u8 | task_id u64 | piece_index u32 | piece_count u32 | payload

``total_length`` counts everything after itself (17 header bytes plus the
payload). Payloads are capped at PIECE_CAP = 1,000,000 bytes (decimal MB);
larger application payloads travel as multiple pieces of one task.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable

from ..errors import ReqSentryError

PIECE_CAP = 1_000_000

_HEADER = struct.Struct(">BQII")  # kind, task_id, piece_index, piece_count
_LENGTH = struct.Struct(">I")
HEADER_SIZE = _HEADER.size  # 17
FRAME_OVERHEAD = _LENGTH.size + HEADER_SIZE  # 21 bytes for an empty payload


class FramingError(ReqSentryError):
    """The byte stream does not line up with the declared frame length."""


class ProtocolError(ReqSentryError):
    """A well-framed message violates the protocol (bad kind, bad pieces...)."""


class FrameKind(IntEnum):
    INFER_DATA = 1
    TRAIN_DATA = 2
    MODEL_CHUNK = 3
    RESULT = 4
    ERROR = 5


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    task_id: int
    piece_index: int
    piece_count: int
    payload: bytes = field(repr=False, default=b"")

    def __post_init__(self):
        if not isinstance(self.kind, FrameKind):
            try:
                object.__setattr__(self, "kind", FrameKind(self.kind))
            except ValueError:
                raise ProtocolError(f"unknown frame kind {self.kind}") from None
        if not 0 <= self.task_id < 2**64:
            raise ProtocolError(f"task_id {self.task_id} outside u64")
        if self.piece_count < 1:
            raise ProtocolError(f"piece_count {self.piece_count} must be at least 1")
        if not 0 <= self.piece_index < self.piece_count:
            raise ProtocolError(
                f"piece_index {self.piece_index} outside 0..{self.piece_count - 1}"
            )
        if len(self.payload) > PIECE_CAP:
            raise ProtocolError(f"payload of {len(self.payload)} bytes exceeds cap {PIECE_CAP}")


def encode_frame(frame: Frame) -> bytes:
    header = _HEADER.pack(frame.kind, frame.task_id, frame.piece_index, frame.piece_count)
    return _LENGTH.pack(len(header) + len(frame.payload)) + header + frame.payload


def decode_frame(data: bytes) -> Frame:
    """Decode exactly one frame; trailing or missing bytes are framing errors."""
    if len(data) < FRAME_OVERHEAD:
        raise FramingError(f"{len(data)} bytes is shorter than any frame")
    (length,) = _LENGTH.unpack_from(data, 0)
    if length < HEADER_SIZE:
        raise FramingError(f"declared length {length} smaller than header")
    if len(data) - _LENGTH.size != length:
        raise FramingError(
            f"declared length {length} but {len(data) - _LENGTH.size} bytes follow"
        )
    kind, task_id, piece_index, piece_count = _HEADER.unpack_from(data, _LENGTH.size)
    payload = data[FRAME_OVERHEAD:]
    try:
        kind = FrameKind(kind)
    except ValueError:
        raise ProtocolError(f"unknown frame kind {kind}") from None
    return Frame(kind=kind, task_id=task_id, piece_index=piece_index,
                 piece_count=piece_count, payload=payload)


def read_frame(read_exact: Callable[[int], bytes | None]) -> Frame | None:
    """Read one frame from a stream.

    `read_exact(n)` must return exactly n bytes, or None on clean EOF before
    any byte. Returns None on clean EOF between frames; raises FramingError
    if the stream ends mid-frame.
    """
    head = read_exact(_LENGTH.size)
    if head is None:
        return None
    (length,) = _LENGTH.unpack(head)
    if length < HEADER_SIZE:
        raise FramingError(f"declared length {length} smaller than header")
    body = read_exact(length)
    if body is None:
        raise FramingError("stream ended mid-frame")
    return decode_frame(head + body)


def chunk(task_id: int, kind: FrameKind, payload: bytes, cap: int = PIECE_CAP) -> list[Frame]:
    """Split a payload into ceil(len/cap) frames; empty payload -> one frame."""
    if cap < 1:
        raise ProtocolError(f"cap {cap} must be at least 1")
    if cap > PIECE_CAP:
        raise ProtocolError(f"cap {cap} exceeds the wire cap {PIECE_CAP}")
    if not payload:
        return [Frame(kind=kind, task_id=task_id, piece_index=0, piece_count=1, payload=b"")]
    count = -(-len(payload) // cap)
    return [
        Frame(
            kind=kind,
            task_id=task_id,
            piece_index=i,
            piece_count=count,
            payload=payload[i * cap : (i + 1) * cap],
        )
        for i in range(count)
    ]


# ---------------------------------------------------------------------------
# Application payloads
# ---------------------------------------------------------------------------

_U32 = struct.Struct(">I")
_F32 = struct.Struct(">f")


def encode_infer_payload(requests: list[bytes]) -> bytes:
    """count u32, then per request: length u32 + bytes."""
    out = bytearray(_U32.pack(len(requests)))
    for r in requests:
        out += _U32.pack(len(r))
        out += r
    return bytes(out)


def decode_infer_payload(data: bytes) -> list[bytes]:
    if len(data) < 4:
        raise ProtocolError("inference payload shorter than its count")
    (count,) = _U32.unpack_from(data, 0)
    pos = 4
    out: list[bytes] = []
    for i in range(count):
        if pos + 4 > len(data):
            raise ProtocolError(f"inference payload declares {count} strings but holds {i}")
        (n,) = _U32.unpack_from(data, pos)
        pos += 4
        if pos + n > len(data):
            raise ProtocolError(f"inference payload truncated inside string {i}")
        out.append(data[pos : pos + n])
        pos += n
    if pos != len(data):
        raise ProtocolError(f"{len(data) - pos} trailing bytes in inference payload")
    return out


def encode_result_payload(probabilities: list[float]) -> bytes:
    """count u32, then one big-endian float32 per probability."""
    out = bytearray(_U32.pack(len(probabilities)))
    for p in probabilities:
        if not 0.0 <= p <= 1.0:
            raise ProtocolError(f"probability {p} outside [0, 1]")
        out += _F32.pack(p)
    return bytes(out)


def decode_result_payload(data: bytes) -> list[float]:
    if len(data) < 4:
        raise ProtocolError("result payload shorter than its count")
    (count,) = _U32.unpack_from(data, 0)
    if len(data) != 4 + 4 * count:
        raise ProtocolError(f"result payload declares {count} floats but is {len(data)} bytes")
    return [_F32.unpack_from(data, 4 + 4 * i)[0] for i in range(count)]


def encode_train_payload(examples: list[tuple[bytes, int]]) -> bytes:
    """count u32, then per example: length u32 + bytes + label u8."""
    out = bytearray(_U32.pack(len(examples)))
    for text, label in examples:
        if label not in (0, 1):
            raise ProtocolError(f"label {label} must be 0 or 1")
        out += _U32.pack(len(text))
        out += text
        out += bytes([label])
    return bytes(out)


def decode_train_payload(data: bytes) -> list[tuple[bytes, int]]:
    if len(data) < 4:
        raise ProtocolError("training payload shorter than its count")
    (count,) = _U32.unpack_from(data, 0)
    pos = 4
    out: list[tuple[bytes, int]] = []
    for i in range(count):
        if pos + 4 > len(data):
            raise ProtocolError(f"training payload declares {count} examples but holds {i}")
        (n,) = _U32.unpack_from(data, pos)
        pos += 4
        if pos + n + 1 > len(data):
            raise ProtocolError(f"training payload truncated inside example {i}")
        text = data[pos : pos + n]
        label = data[pos + n]
        if label not in (0, 1):
            raise ProtocolError(f"label {label} must be 0 or 1")
        out.append((text, label))
        pos += n + 1
    if pos != len(data):
        raise ProtocolError(f"{len(data) - pos} trailing bytes in training payload")
    return out


def encode_error_payload(code: int, message: str) -> bytes:
    return _U32.pack(code) + message.encode("utf-8")


def decode_error_payload(data: bytes) -> tuple[int, str]:
    if len(data) < 4:
        raise ProtocolError("error payload shorter than its code")
    (code,) = _U32.unpack_from(data, 0)
    return code, data[4:].decode("utf-8", errors="replace")
