"""Pooling of frame pieces back into whole payloads.

Pieces of one logical payload share (task_id, kind) and may arrive in any
order, interleaved with other tasks, over any number of connections. An
entry completes when pieces 0..count-1 are all present. Entries that sit
incomplete past the deadline are dropped with a warning.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

from .frames import Frame, FrameKind, ProtocolError

log = logging.getLogger(__name__)

DEFAULT_DEADLINE_SECONDS = 30.0


@dataclass
class _Entry:
    piece_count: int
    deadline: float
    pieces: dict[int, bytes] = field(default_factory=dict)


class Reassembler:
    """Not thread-safe; callers that share one instance must lock around add()."""

    def __init__(
        self,
        deadline_seconds: float = DEFAULT_DEADLINE_SECONDS,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.deadline_seconds = deadline_seconds
        self._clock = clock
        self._entries: dict[tuple[int, FrameKind], _Entry] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def purge_expired(self) -> list[tuple[int, FrameKind]]:
        now = self._clock()
        expired = [key for key, entry in self._entries.items() if entry.deadline <= now]
        for key in expired:
            del self._entries[key]
            log.warning("dropping expired task %d (%s): pieces never completed", key[0], key[1].name)
        return expired

    def add(self, frame: Frame) -> bytes | None:
        """Store one piece; returns the whole payload once the last arrives."""
        self.purge_expired()
        key = (frame.task_id, frame.kind)
        entry = self._entries.get(key)
        if entry is None:
            entry = _Entry(
                piece_count=frame.piece_count,
                deadline=self._clock() + self.deadline_seconds,
            )
            self._entries[key] = entry
        elif entry.piece_count != frame.piece_count:
            del self._entries[key]
            raise ProtocolError(
                f"task {frame.task_id}: piece_count changed from "
                f"{entry.piece_count} to {frame.piece_count}"
            )

        existing = entry.pieces.get(frame.piece_index)
        if existing is not None:
            if existing != frame.payload:
                del self._entries[key]
                raise ProtocolError(
                    f"task {frame.task_id}: piece {frame.piece_index} arrived twice "
                    f"with different bytes"
                )
            return None  # idempotent duplicate
        entry.pieces[frame.piece_index] = frame.payload

        if len(entry.pieces) == entry.piece_count:
            del self._entries[key]
            return b"".join(entry.pieces[i] for i in range(entry.piece_count))
        return None
