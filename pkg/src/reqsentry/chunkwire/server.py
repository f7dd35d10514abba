"""The long-running external process that hosts the classifier over TCP.

The server loads its model before accepting any connection, then dispatches
completed payloads by frame kind:

- INFER_DATA: decode request strings, score each with the served model
  (honoring the batch policy), reply with RESULT frames for the same task.
- TRAIN_DATA: append examples to an in-memory training buffer, reply with an
  empty RESULT acknowledgement.
- MODEL_CHUNK: reassemble a serialized model and atomically swap it in; the
  previous model keeps serving if deserialization fails.

Any number of connections is accepted; pieces of one task may arrive over
different connections (the reassembler is shared). The reply travels over
the connection that delivered the completing piece.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from dataclasses import dataclass

from ..errors import ReqSentryError
from ..neuralnet import Parameters, deserialize_model, predict
from ..tokenizer import Vocabulary, encode, pad
from .frames import (
    Frame,
    FrameKind,
    FramingError,
    PIECE_CAP,
    ProtocolError,
    chunk,
    decode_infer_payload,
    decode_train_payload,
    encode_error_payload,
    encode_frame,
    encode_result_payload,
    read_frame,
)
from .reassembly import DEFAULT_DEADLINE_SECONDS, Reassembler

log = logging.getLogger(__name__)


class ErrorCode:
    MALFORMED_PAYLOAD = 1
    NO_MODEL = 2
    BAD_MODEL = 3
    UNSUPPORTED_KIND = 4
    INTERNAL = 5


@dataclass(frozen=True)
class BatchPolicy:
    """size=1 scores work as it arrives; larger sizes pool requests until
    `size` strings are pending or the oldest has waited `max_wait` seconds."""

    size: int = 1
    max_wait: float = 0.05

    def __post_init__(self):
        if self.size < 1:
            raise ReqSentryError(f"batch size {self.size} must be at least 1")
        if self.max_wait < 0:
            raise ReqSentryError("max_wait must be non-negative")


@dataclass
class _PendingTask:
    task_id: int
    requests: list[bytes]
    conn: "_Connection"
    enqueued: float


class _Connection:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.send_lock = threading.Lock()

    def send_frames(self, frames: list[Frame]) -> None:
        data = b"".join(encode_frame(f) for f in frames)
        with self.send_lock:
            self.sock.sendall(data)


class ExternalProcess:
    """TCP model server; use as a context manager or call start()/stop()."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        model_bytes: bytes | None = None,
        model_path: str | None = None,
        batch_policy: BatchPolicy | None = None,
        reassembly_deadline: float = DEFAULT_DEADLINE_SECONDS,
        piece_cap: int = PIECE_CAP,
    ):
        if model_bytes is not None and model_path is not None:
            raise ReqSentryError("pass model_bytes or model_path, not both")
        self._host = host
        self._requested_port = port
        self._initial_model = model_bytes
        self._model_path = model_path
        self.batch_policy = batch_policy or BatchPolicy()
        self.piece_cap = piece_cap

        self._model_lock = threading.Lock()
        self._model: tuple[Vocabulary, Parameters] | None = None
        self._reassembler = Reassembler(deadline_seconds=reassembly_deadline)
        self._reassembler_lock = threading.Lock()
        self._training_buffer: list[tuple[bytes, int]] = []
        self._training_lock = threading.Lock()

        self._pending: list[_PendingTask] = []
        self._pending_cv = threading.Condition()
        self._stopping = threading.Event()
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> "ExternalProcess":
        # model first, connections after: no cold-start stall on first request
        if self._model_path is not None:
            with open(self._model_path, "rb") as fh:
                self._swap_model(fh.read())
        elif self._initial_model is not None:
            self._swap_model(self._initial_model)

        listener = socket.create_server((self._host, self._requested_port))
        listener.settimeout(0.2)
        self._listener = listener
        accept = threading.Thread(target=self._accept_loop, name="chunkwire-accept", daemon=True)
        scorer = threading.Thread(target=self._scoring_loop, name="chunkwire-score", daemon=True)
        self._threads = [accept, scorer]
        accept.start()
        scorer.start()
        return self

    def stop(self) -> None:
        self._stopping.set()
        with self._pending_cv:
            self._pending_cv.notify_all()
        if self._listener is not None:
            self._listener.close()
        for t in self._threads:
            t.join(timeout=5)

    def __enter__(self) -> "ExternalProcess":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    @property
    def address(self) -> tuple[str, int]:
        if self._listener is None:
            raise ReqSentryError("server not started")
        return self._listener.getsockname()[:2]

    # -- model --------------------------------------------------------------

    def model(self) -> tuple[Vocabulary, Parameters] | None:
        with self._model_lock:
            return self._model

    def _swap_model(self, data: bytes) -> None:
        vocab, params = deserialize_model(data)  # raises ModelFormatError
        with self._model_lock:
            self._model = (vocab, params)
        log.info("serving model swapped: vocab %d, %d-token input", vocab.size,
                 params.config.seq_len)

    def training_buffer(self) -> list[tuple[bytes, int]]:
        with self._training_lock:
            return list(self._training_buffer)

    # -- connection handling --------------------------------------------------

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while not self._stopping.is_set():
            try:
                sock, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            t = threading.Thread(target=self._serve_connection, args=(sock,), daemon=True)
            t.start()

    def _serve_connection(self, sock: socket.socket) -> None:
        conn = _Connection(sock)
        sock.settimeout(0.2)

        def read_exact(n: int) -> bytes | None:
            buf = bytearray()
            while len(buf) < n:
                if self._stopping.is_set():
                    return None
                try:
                    piece = sock.recv(n - len(buf))
                except socket.timeout:
                    continue
                except OSError:
                    return None
                if not piece:
                    if buf:
                        raise FramingError("connection closed mid-frame")
                    return None
                buf += piece
            return bytes(buf)

        try:
            while not self._stopping.is_set():
                try:
                    frame = read_frame(read_exact)
                except (FramingError, ProtocolError) as exc:
                    # stream sync is lost; report and drop the connection
                    self._send_error(conn, 0, ErrorCode.MALFORMED_PAYLOAD, str(exc))
                    break
                if frame is None:
                    break
                self._handle_frame(conn, frame)
        except OSError:
            pass
        finally:
            sock.close()

    def _handle_frame(self, conn: _Connection, frame: Frame) -> None:
        try:
            with self._reassembler_lock:
                payload = self._reassembler.add(frame)
        except ProtocolError as exc:
            self._send_error(conn, frame.task_id, ErrorCode.MALFORMED_PAYLOAD, str(exc))
            return
        if payload is None:
            return

        if frame.kind == FrameKind.INFER_DATA:
            self._enqueue_inference(conn, frame.task_id, payload)
        elif frame.kind == FrameKind.TRAIN_DATA:
            self._handle_training(conn, frame.task_id, payload)
        elif frame.kind == FrameKind.MODEL_CHUNK:
            self._handle_model_swap(conn, frame.task_id, payload)
        else:
            self._send_error(
                conn, frame.task_id, ErrorCode.UNSUPPORTED_KIND,
                f"server does not accept {frame.kind.name} frames",
            )

    # -- dispatch -------------------------------------------------------------

    def _enqueue_inference(self, conn: _Connection, task_id: int, payload: bytes) -> None:
        try:
            requests = decode_infer_payload(payload)
        except ProtocolError as exc:
            self._send_error(conn, task_id, ErrorCode.MALFORMED_PAYLOAD, str(exc))
            return
        task = _PendingTask(task_id=task_id, requests=requests, conn=conn, enqueued=time.monotonic())
        with self._pending_cv:
            self._pending.append(task)
            self._pending_cv.notify()

    def _handle_training(self, conn: _Connection, task_id: int, payload: bytes) -> None:
        try:
            examples = decode_train_payload(payload)
        except ProtocolError as exc:
            self._send_error(conn, task_id, ErrorCode.MALFORMED_PAYLOAD, str(exc))
            return
        with self._training_lock:
            self._training_buffer.extend(examples)
        self._reply(conn, task_id, b"\x00\x00\x00\x00")  # empty result ack

    def _handle_model_swap(self, conn: _Connection, task_id: int, payload: bytes) -> None:
        try:
            self._swap_model(payload)
        except ReqSentryError as exc:
            self._send_error(conn, task_id, ErrorCode.BAD_MODEL, str(exc))
            return
        self._reply(conn, task_id, b"\x00\x00\x00\x00")

    # -- scoring --------------------------------------------------------------

    def _scoring_loop(self) -> None:
        policy = self.batch_policy
        poll = max(policy.max_wait / 2, 0.01) if policy.size > 1 else None
        while True:
            with self._pending_cv:
                while not self._stopping.is_set() and not self._batch_ready():
                    self._pending_cv.wait(timeout=poll)
                if self._stopping.is_set():
                    return
                batch = self._pending
                self._pending = []
            model = self.model()  # one snapshot for the whole flush
            for task in batch:
                self._score_task(model, task)

    def _batch_ready(self) -> bool:
        if not self._pending:
            return False
        policy = self.batch_policy
        if policy.size <= 1:
            return True
        pending_strings = sum(len(t.requests) for t in self._pending)
        if pending_strings >= policy.size:
            return True
        oldest = min(t.enqueued for t in self._pending)
        return time.monotonic() - oldest >= policy.max_wait

    def _score_task(self, model, task: _PendingTask) -> None:
        if model is None:
            self._send_error(task.conn, task.task_id, ErrorCode.NO_MODEL, "no model is loaded")
            return
        vocab, params = model
        length = params.config.seq_len
        try:
            probs = []
            for text in task.requests:
                seq = pad(encode(vocab, text, max_len=length), length)
                probs.append(predict(params, seq))
            self._reply(task.conn, task.task_id, encode_result_payload(probs))
        except ReqSentryError as exc:
            self._send_error(task.conn, task.task_id, ErrorCode.INTERNAL, str(exc))
        except OSError:
            log.warning("task %d: connection dropped before the result was sent", task.task_id)

    # -- replies ----------------------------------------------------------------

    def _reply(self, conn: _Connection, task_id: int, payload: bytes) -> None:
        try:
            conn.send_frames(chunk(task_id, FrameKind.RESULT, payload, self.piece_cap))
        except OSError:
            log.warning("task %d: could not deliver result", task_id)

    def _send_error(self, conn: _Connection, task_id: int, code: int, message: str) -> None:
        payload = encode_error_payload(code, message)
        try:
            conn.send_frames(chunk(task_id, FrameKind.ERROR, payload, self.piece_cap))
        except OSError:
            pass
