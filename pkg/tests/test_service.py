import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from reqsentry.chunkwire import ExternalProcess
from reqsentry.evalkit import synth_corpus
from reqsentry.logstore import LogStore
from reqsentry.neuralnet import ModelConfig, init_params, serialize_model
from reqsentry.request_codec import RequestRecord
from reqsentry.service import LocalScorer, Pipeline, RemoteScorer, create_app
from reqsentry.service.cli import main as cli_main
from reqsentry.service.datafiles import read_corpus, write_corpus
from reqsentry.tokenizer import train_bbpe

HOUR_US = 3_600_000_000
BASE_TS = 1_654_048_800_000_000


def model_blob(seed=0):
    corpus = [b"GET /home HTTP/1.1", b"' UNION SELECT--", b"<script>alert(1)</script>"]
    vocab = train_bbpe(corpus, 280)
    cfg = ModelConfig(vocab_size=vocab.size, embed_dim=8, seq_len=32,
                      filters_per_width=4, pad_id=256, seed=seed)
    return serialize_model(vocab, init_params(cfg, seed=seed))


@pytest.fixture()
def client(tmp_path):
    store = LogStore(tmp_path / "api.store")
    pipeline = Pipeline(store, LocalScorer(model_blob()))
    app = create_app(store, pipeline)
    with TestClient(app) as tc:
        tc.store = store
        yield tc
    store.close()


def ingest_fixture_entries(store: LogStore):
    for i, label in enumerate([0.95, 0.9, 0.3, 0.75]):
        record = RequestRecord(
            fields={"getMethod": "GET", "getRemoteAddr": f"10.0.0.{i}", "getRequestURI": "/x"},
            timestamp_us=BASE_TS + i * HOUR_US // 2,
        )
        store.ingest(record, label, truth_label=int(label > 0.5))


# --- /api/logs ------------------------------------------------------------------


def test_logs_default_sorted_ascending_by_label(client):
    ingest_fixture_entries(client.store)
    got = client.get("/api/logs", params={"threshold": 0.0}).json()
    labels = [e["model_label"] for e in got["entries"]]
    assert labels == sorted(labels)
    assert "ORDER BY MODEL_LABEL" in got["query"]


def test_logs_threshold_strictness_and_query_text(client):
    ingest_fixture_entries(client.store)
    got = client.get("/api/logs", params={"threshold": 0.75}).json()
    assert all(e["model_label"] > 0.75 for e in got["entries"])
    assert len(got["entries"]) == 2
    assert "WHERE MODEL_LABEL > 0.75" in got["query"]


def test_logs_post_with_predicates(client):
    ingest_fixture_entries(client.store)
    body = {
        "threshold": 0.0,
        "predicates": [{"field": "getRemoteAddr", "pattern": "10.0.0.1"}],
        "connective": "AND",
        "sort": "MODEL_LABEL",
        "dir": "desc",
    }
    got = client.post("/api/logs", json=body).json()
    assert len(got["entries"]) == 1
    assert 'getRemoteAddr" : "10.0.0.1' in got["query"]


def test_logs_validation_errors_are_400(client):
    assert client.get("/api/logs", params={"threshold": 1.5}).status_code == 400
    assert client.get("/api/logs", params={"sort": "NOPE"}).status_code == 400
    assert client.get("/api/logs", params={"dir": "sideways"}).status_code == 400


# --- /api/entry -----------------------------------------------------------------


def test_entry_popup_fields(client):
    ingest_fixture_entries(client.store)
    first = client.get("/api/logs", params={"threshold": 0.0}).json()["entries"][0]
    got = client.get(f"/api/entry/{first['entry_id']}").json()
    assert got["fields"]["getMethod"] == "GET"
    assert got["model_label"] == first["model_label"]
    assert client.get("/api/entry/424242").status_code == 404


# --- /api/query -----------------------------------------------------------------


def test_query_endpoint_runs_sql(client):
    ingest_fixture_entries(client.store)
    resp = client.post("/api/query", json={
        "text": "SELECT MODEL_LABEL FROM HTTPLOG_REQUEST_LABELED WHERE MODEL_LABEL > 0.70"
    })
    assert resp.status_code == 200
    got = resp.json()
    assert not got["error"]
    assert all(row[0] > 0.70 for row in got["rows"])


def test_query_endpoint_malformed_sql_is_200_error_table(client):
    resp = client.post("/api/query", json={"text": "SELECT * FROM nowhere"})
    assert resp.status_code == 200
    got = resp.json()
    assert got["error"]
    assert got["columns"] == ["ERROR"]
    assert got["rows"][0] == ["nowhere"]
    assert got["rows"][1] == ["SELECT * FROM nowhere"]


# --- /api/stats -----------------------------------------------------------------


def test_stats_three_anomalies_two_buckets(client):
    store = client.store
    minute = 60_000_000
    for offset in (1 * minute, 59 * minute, 60 * minute):
        store.ingest(RequestRecord(fields={"getMethod": "GET"}), 0.9,
                     timestamp_us=BASE_TS + offset)
    got = client.get("/api/stats", params={
        "threshold": 0.5, "unit": "hour", "start": BASE_TS, "end": BASE_TS + 2 * HOUR_US,
    }).json()
    assert [b["count"] for b in got["buckets"]] == [2, 1]
    assert got["buckets"][0]["start_us"] == BASE_TS


def test_stats_defaults_to_store_range(client):
    ingest_fixture_entries(client.store)
    got = client.get("/api/stats", params={"threshold": 0.0, "unit": "hour"}).json()
    assert sum(b["count"] for b in got["buckets"]) == 4


def test_stats_validates_unit(client):
    assert client.get("/api/stats", params={"unit": "eon"}).status_code == 400


# --- /api/ingest ----------------------------------------------------------------


def test_ingest_endpoint_scores_and_stores(client):
    resp = client.post("/api/ingest", json={
        "record": {"getMethod": "GET", "getRequestURL": "http://x/home"},
        "timestamp_us": BASE_TS,
    })
    assert resp.status_code == 200
    got = resp.json()
    assert 0.0 <= got["model_label"] <= 1.0
    entry = client.get(f"/api/entry/{got['entry_id']}").json()
    assert entry["fields"]["getMethod"] == "GET"


def test_ingest_endpoint_accepts_raw_line(client):
    line = '{ "@label" : "1", "getMethod" : "POST", "getRequestURI" : "/login" }'
    got = client.post("/api/ingest", json={"line": line}).json()
    entry = client.get(f"/api/entry/{got['entry_id']}").json()
    assert entry["truth_label"] == 1


def test_ingest_endpoint_rejects_malformed(client):
    assert client.post("/api/ingest", json={"line": "{ truncated"}).status_code == 400
    assert client.post("/api/ingest", json={}).status_code == 400
    before = len(client.store)
    client.post("/api/ingest", json={"line": "{ broken"})
    assert len(client.store) == before  # nothing ingested on parse failure


# --- /api/model -----------------------------------------------------------------


def test_model_metadata_and_swap(client):
    meta = client.get("/api/model").json()
    assert meta["mode"] == "local" and meta["loaded"]
    blob = model_blob(seed=9)
    resp = client.post("/api/model", json={"data_b64": base64.b64encode(blob).decode()})
    assert resp.status_code == 200
    assert client.post("/api/model", json={"data_b64": "!!!"}).status_code == 400
    assert client.post("/api/model", json={}).status_code == 400
    bad = base64.b64encode(b"junk").decode()
    assert client.post("/api/model", json={"data_b64": bad}).status_code == 400


# --- pipeline remote/local parity and retry ----------------------------------------


def test_remote_and_local_scoring_agree_bitwise(tmp_path):
    blob = model_blob()
    local = LocalScorer(blob)
    record, _ = synth_corpus(1, 1, seed=3)[0]
    with ExternalProcess(model_bytes=blob) as server:
        remote = RemoteScorer(server.address)
        store_l = LogStore(tmp_path / "l.store")
        store_r = LogStore(tmp_path / "r.store")
        id_l, score_l = Pipeline(store_l, local).score_record(record)
        id_r, score_r = Pipeline(store_r, remote).score_record(record)
        assert np.float32(score_l).tobytes() == np.float32(score_r).tobytes()


def test_pipeline_retry_scores_after_backend_recovers(tmp_path):
    blob = model_blob()

    class FlakyScorer(LocalScorer):
        def __init__(self):
            super().__init__(blob)
            self.failures_left = 2

        def score(self, texts):
            if self.failures_left > 0:
                self.failures_left -= 1
                from reqsentry.service.pipeline import ScoringError
                raise ScoringError("backend down")
            return super().score(texts)

    store = LogStore(tmp_path / "retry.store")
    pipeline = Pipeline(store, FlakyScorer(), max_retries=3, backoff_seconds=0.01)
    record = RequestRecord(fields={"getMethod": "GET"}, timestamp_us=BASE_TS)
    entry_id, label = pipeline.score_record(record)
    assert label is None
    assert store.entry(entry_id).model_label is None
    assert pipeline.flush_retries(timeout=10.0)
    assert store.entry(entry_id).model_label is not None
    pipeline.close()


def test_pipeline_gives_up_after_max_retries(tmp_path):
    class DeadScorer(LocalScorer):
        def score(self, texts):
            from reqsentry.service.pipeline import ScoringError
            raise ScoringError("permanently down")

    store = LogStore(tmp_path / "dead.store")
    pipeline = Pipeline(store, DeadScorer(), max_retries=2, backoff_seconds=0.01)
    entry_id, label = pipeline.score_record(RequestRecord(fields={"a": "b"}))
    assert pipeline.flush_retries(timeout=10.0)
    assert store.entry(entry_id).model_label is None
    pipeline.close()


# --- CLI ---------------------------------------------------------------------------


def test_cli_synth_train_eval_round_trip(tmp_path, capsys):
    corpus_path = tmp_path / "corpus.txt"
    model_path = tmp_path / "model.bin"
    assert cli_main(["synth", "--benign", "30", "--attack", "30", "--seed", "1",
                     "--out", str(corpus_path)]) == 0
    assert cli_main([
        "train", "--corpus", str(corpus_path), "--out", str(model_path),
        "--vocab-size", "300", "--embed-dim", "8", "--seq-len", "64",
        "--epochs", "2", "--batch-size", "8", "--lr", "0.01",
    ]) == 0
    assert model_path.exists()
    assert cli_main(["eval", "--model-file", str(model_path),
                     "--corpus", str(corpus_path)]) == 0
    out = capsys.readouterr().out
    assert "accuracy" in out


def test_cli_tokenize_byte_vocab(capsys):
    assert cli_main(["tokenize", "GET /"]) == 0
    assert capsys.readouterr().out.strip() == "[71, 69, 84, 32, 47]"


def test_cli_ingest_with_local_model(tmp_path, capsys):
    corpus_path = tmp_path / "corpus.txt"
    model_path = tmp_path / "model.bin"
    model_path.write_bytes(model_blob())
    corpus = synth_corpus(5, 5, seed=2)
    write_corpus(corpus_path, [r for r, _ in corpus])
    store_path = tmp_path / "cli.store"
    assert cli_main(["ingest", "--store", str(store_path), "--corpus", str(corpus_path),
                     "--model-file", str(model_path)]) == 0
    assert "10 records" in capsys.readouterr().out
    with LogStore(store_path) as store:
        assert len(store) == 10
        assert all(e.model_label is not None for e in store.snapshot())


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    assert cli_main(["eval", "--model-file", str(tmp_path / "missing.bin"),
                     "--corpus", str(tmp_path / "nope.txt")]) == 1
    assert "error:" in capsys.readouterr().err


def test_corpus_file_round_trip(tmp_path):
    corpus = synth_corpus(4, 4, seed=7)
    path = tmp_path / "c.txt"
    write_corpus(path, [r for r, _ in corpus])
    loaded = read_corpus(path)
    assert [r.fields for r, _ in corpus] == [r.fields for r in loaded]
    assert [r.truth_label for r, _ in corpus] == [r.truth_label for r in loaded]
    assert [r.timestamp_us for r, _ in corpus] == [r.timestamp_us for r in loaded]
