"""Line-delimited corpus files: one record object per line."""

from __future__ import annotations

from pathlib import Path

from ..errors import ParseError
from ..request_codec import RequestRecord, parse_log, render_line


def read_corpus(path: str | Path) -> list[RequestRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(parse_log(line))
            except ParseError as exc:
                raise ParseError(f"{path} line {lineno}: {exc}") from None
    return records


def write_corpus(path: str | Path, records: list[RequestRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(render_line(record) + "\n")
