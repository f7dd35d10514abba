"""Client side of the framed protocol: one invocation, one task.

invoke() plays the stateless-function role: it chunks the payload, ships the
frames over a fresh TCP connection, and pools the RESULT (or ERROR) frames
carrying its task id back into one response. Each call owns its task id and
its connection, so any number of threads may invoke concurrently.
"""

from __future__ import annotations

import itertools
import random
import socket
import threading
import time

from ..errors import ReqSentryError
from .frames import (
    FrameKind,
    FramingError,
    PIECE_CAP,
    chunk,
    decode_error_payload,
    encode_frame,
    read_frame,
)
from .reassembly import Reassembler


class RemoteError(ReqSentryError):
    """The server answered with an ERROR frame."""

    def __init__(self, code: int, message: str):
        super().__init__(f"remote error {code}: {message}")
        self.code = code
        self.remote_message = message


class InvokeTimeoutError(ReqSentryError, TimeoutError):
    pass


_counter = itertools.count(1)
_counter_lock = threading.Lock()
_SALT = random.getrandbits(24)


def new_task_id() -> int:
    """Unique per invocation: random per-process high bits + monotonic counter."""
    with _counter_lock:
        n = next(_counter)
    return (_SALT << 40) | (n & 0xFF_FFFF_FFFF)


def invoke(
    address: tuple[str, int],
    kind: FrameKind,
    payload: bytes,
    timeout: float = 30.0,
    cap: int = PIECE_CAP,
) -> bytes:
    """Send one payload and wait for the matching response payload.

    Raises InvokeTimeoutError when the deadline passes, RemoteError when the
    server reports a failure, FramingError/ProtocolError on wire corruption.
    """
    task_id = new_task_id()
    deadline = time.monotonic() + timeout

    def remaining() -> float:
        left = deadline - time.monotonic()
        if left <= 0:
            raise InvokeTimeoutError(f"task {task_id}: no response within {timeout}s")
        return left

    sock = socket.create_connection(address, timeout=max(timeout, 0.01))
    try:
        remaining()
        sock.sendall(b"".join(encode_frame(f) for f in chunk(task_id, kind, payload, cap)))

        def read_exact(n: int) -> bytes | None:
            buf = bytearray()
            while len(buf) < n:
                sock.settimeout(remaining())
                try:
                    piece = sock.recv(n - len(buf))
                except socket.timeout:
                    raise InvokeTimeoutError(
                        f"task {task_id}: no response within {timeout}s"
                    ) from None
                if not piece:
                    if buf:
                        raise FramingError("connection closed mid-frame")
                    return None
                buf += piece
            return bytes(buf)

        assembler = Reassembler(deadline_seconds=max(timeout, 1.0))
        while True:
            frame = read_frame(read_exact)
            if frame is None:
                raise FramingError(f"task {task_id}: connection closed before the response")
            if frame.task_id != task_id:
                continue  # stray response for someone else's task; not ours to consume
            if frame.kind not in (FrameKind.RESULT, FrameKind.ERROR):
                continue
            complete = assembler.add(frame)
            if complete is None:
                continue
            if frame.kind == FrameKind.ERROR:
                code, message = decode_error_payload(complete)
                raise RemoteError(code, message)
            return complete
    finally:
        sock.close()
