"""Parsing and flattening of HTTP-request log records.

A record line is a single JSON-style object mapping field names to string
values or null, e.g.::

    { "getMethod" : "GET", "getAuthType" : null, "header: host" : "example.org" }

The parser is hand-rolled rather than ``json.loads`` because real capture
files carry trailing commas, duplicate keys must be rejected rather than
silently collapsed, and errors should point at a byte offset.

Two derived forms of a record exist and serve different purposes:

- :func:`flatten` produces the canonical space-separated value string the
  classifier consumes ("GET http://url.com/path HTTP/1.1 ...").
- :func:`render_raw` produces the key/value text stored alongside each log
  entry, which field predicates and SQL LIKE patterns match against
  (it contains fragments such as ``getRemoteAddr" : "171.66.11.171``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParseError

# Envelope keys: ingestion metadata, not HTTP fields. "@timestamp" is the
# capture time (microseconds since epoch, UTC, as a digit string); "@label"
# is an externally supplied ground-truth label ("0" benign, "1" anomalous).
TIMESTAMP_KEY = "@timestamp"
LABEL_KEY = "@label"

PROTOCOL_PLACEHOLDER = "HTTP/1.1"


class DuplicateFieldError(ParseError):
    """The same field name appears twice in one record."""


@dataclass
class RequestRecord:
    """One logged HTTP request: ordered field map plus optional metadata.

    `truth_label` never reaches the flattened model input; it only rides
    along for evaluation and for the stored entry's ground-truth column.
    """

    fields: dict[str, str | None] = field(default_factory=dict)
    timestamp_us: int | None = None
    truth_label: int | None = None


_ESCAPES = {'"': '"', "\\": "\\", "/": "/", "b": "\b", "f": "\f", "n": "\n", "r": "\r", "t": "\t"}


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str) -> ParseError:
        byte_offset = len(self.text[: self.pos].encode("utf-8"))
        return ParseError(message, position=byte_offset)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            got = repr(self.peek()) if self.peek() else "end of input"
            raise self.error(f"expected {ch!r}, got {got}")
        self.pos += 1

    def string(self) -> str:
        self.expect('"')
        out: list[str] = []
        while True:
            if self.pos >= len(self.text):
                raise self.error("unterminated string")
            ch = self.text[self.pos]
            if ch == '"':
                self.pos += 1
                return "".join(out)
            if ch == "\\":
                self.pos += 1
                if self.pos >= len(self.text):
                    raise self.error("unterminated escape")
                esc = self.text[self.pos]
                if esc == "u":
                    hexdigits = self.text[self.pos + 1 : self.pos + 5]
                    if len(hexdigits) != 4:
                        raise self.error("truncated \\u escape")
                    try:
                        out.append(chr(int(hexdigits, 16)))
                    except ValueError:
                        raise self.error(f"bad \\u escape {hexdigits!r}") from None
                    self.pos += 5
                elif esc in _ESCAPES:
                    out.append(_ESCAPES[esc])
                    self.pos += 1
                else:
                    raise self.error(f"bad escape \\{esc}")
            else:
                out.append(ch)
                self.pos += 1

    def null_or_string(self) -> str | None:
        if self.peek() == '"':
            return self.string()
        if self.text.startswith("null", self.pos):
            self.pos += 4
            return None
        raise self.error("expected string or null value")


def parse_log(line: str) -> RequestRecord:
    """Parse one record line, preserving field order.

    Tolerates a trailing comma before the closing brace. Raises
    :class:`ParseError` with a byte offset on malformed input and
    :class:`DuplicateFieldError` on repeated field names.
    """
    s = _Scanner(line)
    s.skip_ws()
    s.expect("{")
    fields: dict[str, str | None] = {}
    timestamp_us: int | None = None
    truth_label: int | None = None
    s.skip_ws()
    if s.peek() != "}":
        while True:
            key = s.string()
            s.skip_ws()
            s.expect(":")
            s.skip_ws()
            value = s.null_or_string()
            if key == TIMESTAMP_KEY:
                if value is None or not value.isdigit():
                    raise s.error(f"{TIMESTAMP_KEY} must be a digit string of microseconds")
                timestamp_us = int(value)
            elif key == LABEL_KEY:
                if value not in ("0", "1"):
                    raise s.error(f'{LABEL_KEY} must be "0" or "1"')
                truth_label = int(value)
            else:
                if key in fields:
                    raise DuplicateFieldError(f"duplicate field {key!r}", position=s.pos)
                fields[key] = value
            s.skip_ws()
            if s.peek() == ",":
                s.pos += 1
                s.skip_ws()
                if s.peek() == "}":  # trailing comma, as seen in capture files
                    break
                continue
            break
    s.expect("}")
    s.skip_ws()
    if s.pos != len(s.text):
        raise s.error("trailing data after record")
    return RequestRecord(fields=fields, timestamp_us=timestamp_us, truth_label=truth_label)


def _value_token(value: str | None) -> str:
    return "null" if value is None else value


def flatten(record: RequestRecord) -> bytes:
    """Flatten a record into the single string the model consumes.

    Order: getMethod, getRequestURL, the protocol placeholder, then the
    remaining fields' values in alphabetical field-name order. Absent leading
    fields and null values both emit the literal token "null". Deterministic:
    records equal as maps flatten identically regardless of insertion order.
    """
    fields = record.fields
    parts = [
        _value_token(fields.get("getMethod")),
        _value_token(fields.get("getRequestURL")),
        PROTOCOL_PLACEHOLDER,
    ]
    for name in sorted(k for k in fields if k not in ("getMethod", "getRequestURL")):
        parts.append(_value_token(fields[name]))
    return " ".join(parts).encode("utf-8")


def _quote(value: str) -> str:
    out = value.replace("\\", "\\\\").replace('"', '\\"')
    out = "".join(c if c >= " " or c in "\t" else f"\\u{ord(c):04x}" for c in out)
    return f'"{out}"'


def render_raw(record: RequestRecord) -> str:
    """Render the key/value text form, in field order.

    This is the RAW_REQUEST representation predicates match against; its
    ``key" : "value`` shape is what generated LIKE patterns expect.
    """
    pairs = []
    for name, value in record.fields.items():
        rendered = "null" if value is None else _quote(value)
        pairs.append(f"{_quote(name)} : {rendered}")
    return "{ " + ", ".join(pairs) + " }" if pairs else "{ }"


def render_line(record: RequestRecord) -> str:
    """Render a record back to a parseable single line (inverse of parse_log)."""
    pairs = []
    if record.timestamp_us is not None:
        pairs.append(f"{_quote(TIMESTAMP_KEY)} : {_quote(str(record.timestamp_us))}")
    if record.truth_label is not None:
        pairs.append(f"{_quote(LABEL_KEY)} : {_quote(str(record.truth_label))}")
    for name, value in record.fields.items():
        rendered = "null" if value is None else _quote(value)
        pairs.append(f"{_quote(name)} : {rendered}")
    return "{ " + ", ".join(pairs) + " }" if pairs else "{ }"
