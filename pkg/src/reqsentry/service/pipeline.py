"""Ingest-score-store pipeline: codec -> tokenizer -> model -> log store.

Scoring goes through a backend that is either in-process (model loaded here)
or remote (the external process over the framed TCP protocol). When remote
scoring fails, the entry is still ingested -- unscored -- and a background
worker retries with exponential backoff before giving up and leaving it
unscored. Both backends produce identical float32 probabilities for the same
model, so switching modes never changes stored scores.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass

from ..chunkwire import (
    FrameKind,
    decode_result_payload,
    encode_infer_payload,
    invoke,
)
from ..errors import ReqSentryError
from ..logstore import LogStore
from ..neuralnet import Parameters, deserialize_model, predict
from ..request_codec import RequestRecord, flatten
from ..tokenizer import Vocabulary, encode, pad

log = logging.getLogger(__name__)


class ScoringError(ReqSentryError):
    """The backend could not produce scores (model missing, endpoint down...)."""


class LocalScorer:
    """Runs the model in this process. Thread-safe; swap replaces the whole
    immutable (vocab, params) pair at once."""

    def __init__(self, model_bytes: bytes | None = None):
        self._lock = threading.Lock()
        self._model: tuple[Vocabulary, Parameters] | None = None
        if model_bytes is not None:
            self.swap_model(model_bytes)

    def swap_model(self, model_bytes: bytes) -> None:
        vocab, params = deserialize_model(model_bytes)
        with self._lock:
            self._model = (vocab, params)

    def score(self, texts: list[bytes]) -> list[float]:
        with self._lock:
            model = self._model
        if model is None:
            raise ScoringError("no model is loaded")
        vocab, params = model
        length = params.config.seq_len
        return [
            predict(params, pad(encode(vocab, t, max_len=length), length)) for t in texts
        ]

    def metadata(self) -> dict:
        with self._lock:
            model = self._model
        if model is None:
            return {"mode": "local", "loaded": False}
        vocab, params = model
        cfg = params.config
        return {
            "mode": "local",
            "loaded": True,
            "vocab_size": vocab.size,
            "embed_dim": cfg.embed_dim,
            "seq_len": cfg.seq_len,
            "kernel_widths": list(cfg.kernel_widths),
            "filters_per_width": cfg.filters_per_width,
        }


class RemoteScorer:
    """Scores via the external process; the model lives over there."""

    def __init__(self, address: tuple[str, int], timeout: float = 30.0):
        self.address = address
        self.timeout = timeout

    def score(self, texts: list[bytes]) -> list[float]:
        try:
            reply = invoke(
                self.address, FrameKind.INFER_DATA, encode_infer_payload(texts), self.timeout
            )
        except (ReqSentryError, OSError) as exc:
            raise ScoringError(f"remote scoring failed: {exc}") from exc
        probs = decode_result_payload(reply)
        if len(probs) != len(texts):
            raise ScoringError(f"{len(probs)} scores for {len(texts)} requests")
        return probs

    def swap_model(self, model_bytes: bytes) -> None:
        try:
            invoke(self.address, FrameKind.MODEL_CHUNK, model_bytes, self.timeout)
        except (ReqSentryError, OSError) as exc:
            raise ScoringError(f"remote model swap failed: {exc}") from exc

    def metadata(self) -> dict:
        return {"mode": "remote", "endpoint": f"{self.address[0]}:{self.address[1]}"}


@dataclass
class _Retry:
    entry_id: int
    text: bytes
    attempt: int


class Pipeline:
    """Single logical writer into the store; scoring may be concurrent."""

    def __init__(
        self,
        store: LogStore,
        scorer: LocalScorer | RemoteScorer,
        max_retries: int = 3,
        backoff_seconds: float = 0.1,
    ):
        self.store = store
        self.scorer = scorer
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        self._queue: list[_Retry] = []
        self._cv = threading.Condition()
        self._pending = 0
        self._stopping = False
        self._worker: threading.Thread | None = None

    def score_record(self, record: RequestRecord) -> tuple[int, float | None]:
        """Parse-side record in, (entry_id, score) out.

        On scoring failure the entry is ingested unscored and queued for
        retries; the returned score is None until a retry lands.
        """
        text = flatten(record)
        try:
            label = self.scorer.score([text])[0]
        except ScoringError as exc:
            log.warning("scoring failed, ingesting unscored: %s", exc)
            entry_id = self.store.ingest(record, None, record.truth_label)
            self._enqueue(_Retry(entry_id=entry_id, text=text, attempt=1))
            return entry_id, None
        entry_id = self.store.ingest(record, label, record.truth_label)
        return entry_id, label

    # -- retries ---------------------------------------------------------------

    def _enqueue(self, item: _Retry) -> None:
        with self._cv:
            self._queue.append(item)
            self._pending += 1
            if self._worker is None:
                self._worker = threading.Thread(
                    target=self._retry_loop, name="pipeline-retry", daemon=True
                )
                self._worker.start()
            self._cv.notify()

    def _retry_loop(self) -> None:
        while True:
            with self._cv:
                while not self._queue and not self._stopping:
                    self._cv.wait()
                if self._stopping and not self._queue:
                    return
                item = self._queue.pop(0)
            time.sleep(self.backoff_seconds * (2 ** (item.attempt - 1)))
            try:
                label = self.scorer.score([item.text])[0]
            except ScoringError as exc:
                if item.attempt >= self.max_retries:
                    log.warning(
                        "entry %d stays unscored after %d attempts: %s",
                        item.entry_id, item.attempt, exc,
                    )
                    with self._cv:
                        self._pending -= 1
                        self._cv.notify_all()
                else:
                    with self._cv:
                        self._queue.append(
                            _Retry(item.entry_id, item.text, item.attempt + 1)
                        )
                        self._cv.notify()
                continue
            self.store.set_score(item.entry_id, label)
            with self._cv:
                self._pending -= 1
                self._cv.notify_all()

    def flush_retries(self, timeout: float = 10.0) -> bool:
        """Wait until the retry queue drains; True if it did in time."""
        deadline = time.monotonic() + timeout
        with self._cv:
            while self._pending > 0:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._cv.wait(timeout=remaining)
        return True

    def close(self) -> None:
        with self._cv:
            self._stopping = True
            self._cv.notify_all()
