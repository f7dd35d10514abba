"""SQL-subset query engine for the scored-request table.

Supported shape::

    SELECT col[, col...] | *
    FROM HTTPLOG_REQUEST_LABELED
    [WHERE predicate]           -- comparisons >, <, =, LIKE with AND/OR/parens
    [ORDER BY col [ASC|DESC]]
    [LIMIT n]

Semantics, shared with the filter engine and the reference interpreter:

- columns: LOG_TIMESTAMP (int), RAW_REQUEST (text), MODEL_LABEL (float or
  null), SNORT_LABEL (int or null)
- any comparison against a null value is false
- ``>``/``<`` apply to numeric columns with numeric literals; ``=`` works on
  numerics and text; LIKE applies to text columns with ``%`` as the only
  wildcard (underscore is literal)
- ORDER BY is a stable sort over store order; nulls sort after everything
  ascending (and so come first descending)

Failures never raise out of :func:`execute_query`; they surface as a
two-row error table (problematic fragment, then the original query).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Iterable

from ..errors import ReqSentryError

if TYPE_CHECKING:  # pragma: no cover
    from .store import LogEntry

TABLE_NAME = "HTTPLOG_REQUEST_LABELED"
COLUMNS = ("LOG_TIMESTAMP", "RAW_REQUEST", "MODEL_LABEL", "SNORT_LABEL")
_NUMERIC_COLUMNS = {"LOG_TIMESTAMP", "MODEL_LABEL", "SNORT_LABEL"}
_TEXT_COLUMNS = {"RAW_REQUEST"}
ERROR_COLUMNS = ("ERROR",)


class QueryError(ReqSentryError):
    """Internal: carries the problematic fragment for the error table."""

    def __init__(self, message: str, fragment: str):
        super().__init__(message)
        self.fragment = fragment


@dataclass(frozen=True)
class Comparison:
    column: str
    op: str  # > < = LIKE
    value: float | str


@dataclass(frozen=True)
class BoolExpr:
    op: str  # AND | OR
    parts: tuple  # of Comparison | BoolExpr


@dataclass(frozen=True)
class Query:
    columns: tuple[str, ...] | None  # None means *
    table: str
    where: Comparison | BoolExpr | None
    order_by: tuple[str, bool] | None  # (column, descending)
    limit: int | None


@dataclass(frozen=True)
class QueryResult:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    error: bool = False


def error_table(fragment: str, original: str) -> QueryResult:
    return QueryResult(columns=ERROR_COLUMNS, rows=((fragment,), (original,)), error=True)


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d+)?)
  | (?P<string>'(?:[^']|'')*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<symbol>[(),*><=])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"SELECT", "FROM", "WHERE", "AND", "OR", "ORDER", "BY", "LIMIT", "ASC", "DESC", "LIKE"}


@dataclass(frozen=True)
class _Token:
    kind: str  # keyword | ident | number | string | symbol | end
    text: str


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QueryError("unrecognized syntax", fragment=text[pos : pos + 20])
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        value = m.group()
        if m.lastgroup == "ident":
            upper = value.upper()
            if upper in _KEYWORDS:
                tokens.append(_Token("keyword", upper))
            else:
                tokens.append(_Token("ident", value))
        elif m.lastgroup == "string":
            tokens.append(_Token("string", value[1:-1].replace("''", "'")))
        else:
            tokens.append(_Token(m.lastgroup, value))
    tokens.append(_Token("end", ""))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "end":
            self.pos += 1
        return tok

    def expect_keyword(self, word: str) -> None:
        tok = self.take()
        if tok.kind != "keyword" or tok.text != word:
            raise QueryError(f"expected {word}", fragment=tok.text or "end of query")

    def parse(self) -> Query:
        self.expect_keyword("SELECT")
        columns = self._columns()
        self.expect_keyword("FROM")
        table_tok = self.take()
        if table_tok.kind != "ident":
            raise QueryError("expected a table name", fragment=table_tok.text or "end of query")
        if table_tok.text.upper() != TABLE_NAME:
            raise QueryError("unknown table", fragment=table_tok.text)

        where = None
        if self.peek() == _Token("keyword", "WHERE"):
            self.take()
            where = self._or_expr()

        order_by = None
        if self.peek() == _Token("keyword", "ORDER"):
            self.take()
            self.expect_keyword("BY")
            col = self._column_name()
            descending = False
            if self.peek().kind == "keyword" and self.peek().text in ("ASC", "DESC"):
                descending = self.take().text == "DESC"
            order_by = (col, descending)

        limit = None
        if self.peek() == _Token("keyword", "LIMIT"):
            self.take()
            tok = self.take()
            if tok.kind != "number" or "." in tok.text:
                raise QueryError("LIMIT needs an integer", fragment=tok.text or "end of query")
            limit = int(tok.text)

        trailing = self.take()
        if trailing.kind != "end":
            raise QueryError("unexpected trailing syntax", fragment=trailing.text)
        return Query(columns=columns, table=TABLE_NAME, where=where, order_by=order_by, limit=limit)

    def _columns(self) -> tuple[str, ...] | None:
        if self.peek() == _Token("symbol", "*"):
            self.take()
            return None
        cols = [self._column_name()]
        while self.peek() == _Token("symbol", ","):
            self.take()
            cols.append(self._column_name())
        return tuple(cols)

    def _column_name(self) -> str:
        tok = self.take()
        if tok.kind != "ident":
            raise QueryError("expected a column name", fragment=tok.text or "end of query")
        upper = tok.text.upper()
        if upper not in COLUMNS:
            raise QueryError("unknown column", fragment=tok.text)
        return upper

    def _or_expr(self):
        parts = [self._and_expr()]
        while self.peek() == _Token("keyword", "OR"):
            self.take()
            parts.append(self._and_expr())
        return parts[0] if len(parts) == 1 else BoolExpr(op="OR", parts=tuple(parts))

    def _and_expr(self):
        parts = [self._primary()]
        while self.peek() == _Token("keyword", "AND"):
            self.take()
            parts.append(self._primary())
        return parts[0] if len(parts) == 1 else BoolExpr(op="AND", parts=tuple(parts))

    def _primary(self):
        if self.peek() == _Token("symbol", "("):
            self.take()
            inner = self._or_expr()
            closing = self.take()
            if closing != _Token("symbol", ")"):
                raise QueryError("unbalanced parenthesis", fragment=closing.text or "end of query")
            return inner
        return self._comparison()

    def _comparison(self) -> Comparison:
        column = self._column_name()
        op_tok = self.take()
        if op_tok.kind == "keyword" and op_tok.text == "LIKE":
            op = "LIKE"
        elif op_tok.kind == "symbol" and op_tok.text in (">", "<", "="):
            op = op_tok.text
        else:
            raise QueryError("expected >, <, = or LIKE", fragment=op_tok.text or "end of query")

        lit_tok = self.take()
        if lit_tok.kind == "number":
            value: float | str = float(lit_tok.text)
        elif lit_tok.kind == "string":
            value = lit_tok.text
        else:
            raise QueryError("expected a literal", fragment=lit_tok.text or "end of query")

        if op == "LIKE":
            if column not in _TEXT_COLUMNS:
                raise QueryError("LIKE applies to text columns", fragment=column)
            if not isinstance(value, str):
                raise QueryError("LIKE needs a string pattern", fragment=lit_tok.text)
        elif op in (">", "<"):
            if column not in _NUMERIC_COLUMNS:
                raise QueryError(f"{op} applies to numeric columns", fragment=column)
            if not isinstance(value, float):
                raise QueryError(f"{op} needs a numeric literal", fragment=str(lit_tok.text))
        else:  # "="
            if column in _NUMERIC_COLUMNS and not isinstance(value, float):
                raise QueryError("= on a numeric column needs a number", fragment=lit_tok.text)
            if column in _TEXT_COLUMNS and not isinstance(value, str):
                raise QueryError("= on a text column needs a string", fragment=lit_tok.text)
        return Comparison(column=column, op=op, value=value)


def parse_query(text: str) -> Query:
    if not text.strip():
        raise QueryError("empty query", fragment="empty query")
    return _Parser(_lex(text)).parse()


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@lru_cache(maxsize=256)
def _like_regex(pattern: str) -> re.Pattern:
    parts = (re.escape(chunk) for chunk in pattern.split("%"))
    return re.compile("(?s)" + ".*".join(parts) + r"\Z")


def like_match(text: str, pattern: str) -> bool:
    return _like_regex(pattern).match(text) is not None


def column_value(entry: "LogEntry", column: str):
    if column == "LOG_TIMESTAMP":
        return entry.entry_id
    if column == "RAW_REQUEST":
        return entry.raw
    if column == "MODEL_LABEL":
        return entry.model_label
    if column == "SNORT_LABEL":
        return entry.truth_label
    raise QueryError("unknown column", fragment=column)


def _eval_expr(expr, entry: "LogEntry") -> bool:
    if isinstance(expr, BoolExpr):
        if expr.op == "AND":
            return all(_eval_expr(p, entry) for p in expr.parts)
        return any(_eval_expr(p, entry) for p in expr.parts)
    value = column_value(entry, expr.column)
    if value is None:
        return False
    if expr.op == ">":
        return float(value) > expr.value
    if expr.op == "<":
        return float(value) < expr.value
    if expr.op == "=":
        if isinstance(expr.value, float):
            return float(value) == expr.value
        return str(value) == expr.value
    return like_match(str(value), expr.value)  # LIKE


def sort_entries(entries: Iterable["LogEntry"], column: str, descending: bool) -> list["LogEntry"]:
    """Stable sort; null values order after real ones ascending."""
    def key(entry):
        value = column_value(entry, column)
        return (value is None, value)

    return sorted(entries, key=key, reverse=descending)


def run_query(query: Query, entries: list["LogEntry"]) -> QueryResult:
    matched = [e for e in entries if query.where is None or _eval_expr(query.where, e)]
    if query.order_by is not None:
        matched = sort_entries(matched, *query.order_by)
    if query.limit is not None:
        matched = matched[: query.limit]
    columns = query.columns or COLUMNS
    rows = tuple(tuple(column_value(e, c) for c in columns) for e in matched)
    return QueryResult(columns=columns, rows=rows, error=False)


def execute_query(text: str, entries: list["LogEntry"]) -> QueryResult:
    """Parse and run; any failure becomes the two-row error table."""
    try:
        return run_query(parse_query(text), entries)
    except QueryError as exc:
        return error_table(exc.fragment, text)
    except Exception as exc:  # defensive: the caller never sees a raise
        return error_table(str(exc), text)
