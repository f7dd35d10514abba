"""HTTP API behind the analyst UI.

One endpoint per view plus ingest and model management. Read endpoints are
pure functions of the store snapshot and the query parameters. /api/query
answers 200 even for malformed SQL: the two-row error table IS the result.
"""

from __future__ import annotations

import base64
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..errors import InvalidInputError, ParseError, ReqSentryError
from ..logstore import (
    EntryNotFoundError,
    FilterSpec,
    LogStore,
    UNIT_MICROSECONDS,
    compile_filter,
)
from ..request_codec import RequestRecord, parse_log
from .pipeline import Pipeline, ScoringError

DEFAULT_THRESHOLD = 0.7


class PredicateBody(BaseModel):
    field: str
    pattern: str


class LogsBody(BaseModel):
    threshold: float = DEFAULT_THRESHOLD
    predicates: list[PredicateBody] = Field(default_factory=list)
    connective: str = "AND"
    sort: str = "MODEL_LABEL"
    dir: str = "asc"


class QueryBody(BaseModel):
    text: str


class IngestBody(BaseModel):
    record: dict[str, str | None] | None = None
    line: str | None = None
    timestamp_us: int | None = None
    truth_label: int | None = None


class ModelBody(BaseModel):
    path: str | None = None
    data_b64: str | None = None


def _entry_json(entry) -> dict:
    return {
        "entry_id": entry.entry_id,
        "model_label": entry.model_label,
        "truth_label": entry.truth_label,
    }


def _filter_response(store: LogStore, spec: FilterSpec) -> dict:
    return {
        "query": compile_filter(spec),
        "entries": [_entry_json(e) for e in store.filter(spec)],
    }


def _bad_request(message: str) -> HTTPException:
    return HTTPException(status_code=400, detail=message)


def create_app(
    store: LogStore,
    pipeline: Pipeline,
    default_threshold: float = DEFAULT_THRESHOLD,
    asset_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="reqsentry", docs_url=None, redoc_url=None)

    @app.exception_handler(ReqSentryError)
    async def _domain_error(request, exc: ReqSentryError):
        status = 400 if isinstance(exc, (InvalidInputError, ParseError)) else 500
        return JSONResponse(status_code=status, content={"error": str(exc)})

    def build_spec(threshold, predicates, connective, sort, direction) -> FilterSpec:
        if direction not in ("asc", "desc"):
            raise _bad_request(f"dir must be asc or desc, got {direction!r}")
        try:
            return FilterSpec(
                threshold=threshold,
                predicates=tuple((p.field, p.pattern) for p in predicates),
                connective=connective,
                sort_column=sort,
                descending=(direction == "desc"),
            )
        except InvalidInputError as exc:
            raise _bad_request(str(exc)) from None

    @app.get("/api/logs")
    def get_logs(
        threshold: float = default_threshold,
        sort: str = "MODEL_LABEL",
        dir: str = "asc",
    ):
        return _filter_response(store, build_spec(threshold, [], "AND", sort, dir))

    @app.post("/api/logs")
    def post_logs(body: LogsBody):
        spec = build_spec(body.threshold, body.predicates, body.connective, body.sort, body.dir)
        return _filter_response(store, spec)

    @app.get("/api/entry/{entry_id}")
    def get_entry(entry_id: int):
        try:
            entry = store.entry(entry_id)
        except EntryNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return {
            "entry_id": entry.entry_id,
            "fields": entry.record.fields,
            "model_label": entry.model_label,
            "truth_label": entry.truth_label,
        }

    @app.post("/api/query")
    def post_query(body: QueryBody):
        result = store.raw_query(body.text)  # errors come back as the error table
        return {
            "columns": list(result.columns),
            "rows": [list(r) for r in result.rows],
            "error": result.error,
        }

    @app.get("/api/stats")
    def get_stats(
        threshold: float = default_threshold,
        unit: str = "hour",
        start: int | None = None,
        end: int | None = None,
    ):
        if unit not in UNIT_MICROSECONDS:
            raise _bad_request(f"unit must be one of {sorted(UNIT_MICROSECONDS)}")
        entries = store.snapshot()
        if start is None:
            start = entries[0].entry_id if entries else 0
        if end is None:
            end = entries[-1].entry_id + 1 if entries else 0
        try:
            buckets = store.aggregate(threshold, unit, start, end)
        except InvalidInputError as exc:
            raise _bad_request(str(exc)) from None
        return {
            "unit": unit,
            "threshold": threshold,
            "buckets": [{"start_us": b.start_us, "count": b.count} for b in buckets],
        }

    @app.post("/api/ingest")
    def post_ingest(body: IngestBody):
        if (body.record is None) == (body.line is None):
            raise _bad_request("pass exactly one of record or line")
        if body.line is not None:
            try:
                record = parse_log(body.line)
            except ParseError as exc:
                raise _bad_request(f"malformed record: {exc}") from None
        else:
            record = RequestRecord(fields=dict(body.record))
        if body.timestamp_us is not None:
            record.timestamp_us = body.timestamp_us
        if body.truth_label is not None:
            if body.truth_label not in (0, 1):
                raise _bad_request("truth_label must be 0 or 1")
            record.truth_label = body.truth_label
        entry_id, label = pipeline.score_record(record)
        return {"entry_id": entry_id, "model_label": label}

    @app.get("/api/model")
    def get_model():
        return pipeline.scorer.metadata()

    @app.post("/api/model")
    def post_model(body: ModelBody):
        if (body.path is None) == (body.data_b64 is None):
            raise _bad_request("pass exactly one of path or data_b64")
        if body.path is not None:
            try:
                blob = Path(body.path).read_bytes()
            except OSError as exc:
                raise _bad_request(f"cannot read model file: {exc}") from None
        else:
            try:
                blob = base64.b64decode(body.data_b64, validate=True)
            except Exception:
                raise _bad_request("data_b64 is not valid base64") from None
        try:
            pipeline.scorer.swap_model(blob)
        except (ParseError, ScoringError) as exc:
            raise _bad_request(f"model rejected: {exc}") from None
        return {"ok": True, "model": pipeline.scorer.metadata()}

    if asset_dir is not None and Path(asset_dir).is_dir():
        app.mount("/", StaticFiles(directory=asset_dir, html=True), name="ui")

    return app
