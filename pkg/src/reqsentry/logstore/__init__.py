"""Append-only provenance-style store of scored requests, with filter
semantics, a SQL-subset query engine, and time-bucketed aggregation."""

from .sql import (
    COLUMNS,
    ERROR_COLUMNS,
    QueryResult,
    TABLE_NAME,
    execute_query,
    like_match,
    parse_query,
)
from .store import (
    EntryNotFoundError,
    FilterSpec,
    LogEntry,
    LogStore,
    StoreFormatError,
    TimeBucket,
    UNIT_MICROSECONDS,
    compile_filter,
)

__all__ = [
    "COLUMNS",
    "ERROR_COLUMNS",
    "QueryResult",
    "TABLE_NAME",
    "execute_query",
    "like_match",
    "parse_query",
    "EntryNotFoundError",
    "FilterSpec",
    "LogEntry",
    "LogStore",
    "StoreFormatError",
    "TimeBucket",
    "UNIT_MICROSECONDS",
    "compile_filter",
]
