"""Append-only store of scored request log entries.

Durability is a line-delimited file: a version header, then one JSON object
per line. Nothing is ever rewritten; a late score for an entry ingested
unscored is appended as its own line and folded in at load. Entry ids are
unique microsecond timestamps, strictly increasing in ingest order (a tie
bumps forward by one microsecond).

Reads take a snapshot of the entry list under the writer lock, so queries
are consistent and the single writer never blocks readers for long.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from ..errors import InvalidInputError, ParseError, ReqSentryError
from ..request_codec import RequestRecord, flatten, render_raw
from .sql import (
    COLUMNS,
    QueryResult,
    TABLE_NAME,
    execute_query,
    like_match,
    sort_entries,
)

STORE_HEADER = "HTTPLOG v1"

UNIT_MICROSECONDS = {
    "day": 86_400_000_000,
    "hour": 3_600_000_000,
    "minute": 60_000_000,
}


class EntryNotFoundError(ReqSentryError):
    pass


class StoreFormatError(ParseError):
    pass


@dataclass
class LogEntry:
    """One scored request. `model_label` is None while scoring is pending."""

    entry_id: int
    record: RequestRecord
    raw: str                     # key/value text, what LIKE patterns see
    canonical: bytes             # flattened model input
    model_label: float | None
    truth_label: int | None


@dataclass(frozen=True)
class FilterSpec:
    """Overview-page filter: threshold plus field predicates.

    A predicate (field, pattern) matches entries whose raw text contains
    `field" : "pattern` with % in the pattern as a zero-or-more wildcard.
    """

    threshold: float = 0.0
    predicates: tuple[tuple[str, str], ...] = ()
    connective: str = "AND"
    sort_column: str = "MODEL_LABEL"
    descending: bool = False

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidInputError(f"threshold {self.threshold} outside [0, 1]")
        if self.connective not in ("AND", "OR"):
            raise InvalidInputError(f"connective must be AND or OR, got {self.connective!r}")
        if self.sort_column not in COLUMNS:
            raise InvalidInputError(f"unknown sort column {self.sort_column!r}")


def _format_threshold(value: float) -> str:
    # two decimals when exact (the displayed-query convention), full otherwise
    return f"{value:.2f}" if round(value, 2) == value else repr(value)


def predicate_like_pattern(field: str, pattern: str) -> str:
    return f'%{field}" : "{pattern}"%'


def compile_filter(spec: FilterSpec) -> str:
    """Render a FilterSpec as the SQL text shown to the analyst.

    raw_query(compile_filter(spec)) returns exactly filter(spec).
    """
    clauses = [f"MODEL_LABEL > {_format_threshold(spec.threshold)}"]
    likes = [
        "RAW_REQUEST LIKE '{}'".format(predicate_like_pattern(f, p).replace("'", "''"))
        for f, p in spec.predicates
    ]
    if likes:
        if spec.connective == "AND":
            clauses.extend(likes)
        elif len(likes) == 1:
            clauses.append(likes[0])
        else:
            clauses.append("(" + " OR ".join(likes) + ")")
    where = " AND ".join(clauses)
    order = f"ORDER BY {spec.sort_column}" + (" DESC" if spec.descending else "")
    return (
        f"SELECT {', '.join(COLUMNS)} FROM {TABLE_NAME} WHERE {where} {order}"
    )


def _now_us() -> int:
    return time.time_ns() // 1_000


@dataclass(frozen=True)
class TimeBucket:
    unit: str
    start_us: int
    count: int


class LogStore:
    """Single-writer durable store with an in-memory index."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: list[LogEntry] = []
        self._by_id: dict[int, LogEntry] = {}
        if self.path.exists():
            self._load()
            self._fh = open(self.path, "a", encoding="utf-8")
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8")
            self._fh.write(STORE_HEADER + "\n")
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "LogStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    # -- loading ---------------------------------------------------------------

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if header != STORE_HEADER:
                raise StoreFormatError(f"bad store header {header!r}", position=1)
            for lineno, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise StoreFormatError(f"corrupt store line: {exc.msg}", position=lineno) from None
                kind = obj.get("kind")
                if kind == "entry":
                    self._load_entry(obj, lineno)
                elif kind == "score":
                    self._load_score(obj, lineno)
                else:
                    raise StoreFormatError(f"unknown line kind {kind!r}", position=lineno)

    def _load_entry(self, obj: dict, lineno: int) -> None:
        try:
            entry_id = int(obj["id"])
            fields = obj["fields"]
            model = obj["model"]
            truth = obj["truth"]
            record_ts = obj.get("record_ts")
        except (KeyError, TypeError, ValueError) as exc:
            raise StoreFormatError(f"bad entry line: {exc}", position=lineno) from None
        if self._entries and entry_id <= self._entries[-1].entry_id:
            raise StoreFormatError(
                f"entry id {entry_id} not increasing", position=lineno
            )
        record = RequestRecord(fields=dict(fields), timestamp_us=record_ts)
        entry = LogEntry(
            entry_id=entry_id,
            record=record,
            raw=render_raw(record),
            canonical=flatten(record),
            model_label=model,
            truth_label=truth,
        )
        self._entries.append(entry)
        self._by_id[entry_id] = entry

    def _load_score(self, obj: dict, lineno: int) -> None:
        entry = self._by_id.get(obj.get("id"))
        if entry is None:
            raise StoreFormatError(f"score for unknown entry {obj.get('id')}", position=lineno)
        entry.model_label = obj.get("model")

    # -- writes ------------------------------------------------------------------

    def ingest(
        self,
        record: RequestRecord,
        model_label: float | None,
        truth_label: int | None = None,
        timestamp_us: int | None = None,
    ) -> int:
        """Append one entry durably; returns its id. model_label None means
        "not scored yet" (see set_score)."""
        if model_label is not None and not 0.0 <= model_label <= 1.0:
            raise InvalidInputError(f"model_label {model_label} outside [0, 1]")
        if truth_label not in (None, 0, 1):
            raise InvalidInputError(f"truth_label must be 0, 1 or absent, got {truth_label}")

        with self._lock:
            base = timestamp_us if timestamp_us is not None else (
                record.timestamp_us if record.timestamp_us is not None else _now_us()
            )
            last = self._entries[-1].entry_id if self._entries else -1
            entry_id = max(base, last + 1)
            entry = LogEntry(
                entry_id=entry_id,
                record=record,
                raw=render_raw(record),
                canonical=flatten(record),
                model_label=model_label,
                truth_label=truth_label,
            )
            line = json.dumps(
                {
                    "kind": "entry",
                    "id": entry_id,
                    "fields": record.fields,
                    "record_ts": record.timestamp_us,
                    "model": model_label,
                    "truth": truth_label,
                },
                ensure_ascii=False,
            )
            self._fh.write(line + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._entries.append(entry)
            self._by_id[entry_id] = entry
            return entry_id

    def set_score(self, entry_id: int, model_label: float) -> None:
        """Record the score of an entry ingested unscored (append, not rewrite)."""
        if not 0.0 <= model_label <= 1.0:
            raise InvalidInputError(f"model_label {model_label} outside [0, 1]")
        with self._lock:
            entry = self._by_id.get(entry_id)
            if entry is None:
                raise EntryNotFoundError(f"no entry {entry_id}")
            if entry.model_label is not None:
                raise InvalidInputError(f"entry {entry_id} is already scored")
            line = json.dumps({"kind": "score", "id": entry_id, "model": model_label})
            self._fh.write(line + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
            entry.model_label = model_label

    # -- reads ---------------------------------------------------------------------

    def snapshot(self) -> list[LogEntry]:
        with self._lock:
            return list(self._entries)

    def entry(self, entry_id: int) -> LogEntry:
        with self._lock:
            entry = self._by_id.get(entry_id)
        if entry is None:
            raise EntryNotFoundError(f"no entry {entry_id}")
        return entry

    def filter(self, spec: FilterSpec) -> list[LogEntry]:
        """Entries above the threshold matching the predicate tree, sorted."""
        def predicate_hit(entry: LogEntry, field: str, pattern: str) -> bool:
            return like_match(entry.raw, predicate_like_pattern(field, pattern))

        combine = all if spec.connective == "AND" else any
        out = []
        for entry in self.snapshot():
            if entry.model_label is None or not entry.model_label > spec.threshold:
                continue
            if spec.predicates and not combine(
                predicate_hit(entry, f, p) for f, p in spec.predicates
            ):
                continue
            out.append(entry)
        return sort_entries(out, spec.sort_column, spec.descending)

    def raw_query(self, text: str) -> QueryResult:
        """Run SQL text; failures come back as the error table, never a raise."""
        return execute_query(text, self.snapshot())

    def aggregate(
        self, threshold: float, unit: str, start_us: int, end_us: int
    ) -> list[TimeBucket]:
        """Count above-threshold entries per UTC-aligned bucket in [start, end).

        Empty buckets inside the range are emitted with count 0, so the series
        plots as a continuous line.
        """
        if unit not in UNIT_MICROSECONDS:
            raise InvalidInputError(f"unit must be one of {sorted(UNIT_MICROSECONDS)}, got {unit!r}")
        if end_us < start_us:
            raise InvalidInputError(f"inverted range: {start_us} .. {end_us}")
        if end_us == start_us:
            return []
        step = UNIT_MICROSECONDS[unit]
        first = (start_us // step) * step
        last = ((end_us - 1) // step) * step
        counts: dict[int, int] = {b: 0 for b in range(first, last + step, step)}
        for entry in self.snapshot():
            if entry.model_label is None or not entry.model_label > threshold:
                continue
            if not start_us <= entry.entry_id < end_us:
                continue
            counts[(entry.entry_id // step) * step] += 1
        return [TimeBucket(unit=unit, start_us=b, count=c) for b, c in sorted(counts.items())]
