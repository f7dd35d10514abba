"""Command line. Subcommands:

  synth        emit a labeled synthetic corpus file
  train        train tokenizer+classifier from a labeled corpus, write a model
  eval         score a labeled corpus with a model, print metrics
  serve-model  run the external model process (framed TCP)
  serve-api    run the HTTP API (and the UI bundle, if built)
  ingest       replay a corpus file through the scoring pipeline into a store
  tokenize     show token ids for one request string

Every flag with an environment-variable equivalent reads REQSENTRY_<NAME>
(dashes to underscores, uppercase), e.g. REQSENTRY_STORE for --store.
Commands exit nonzero with a one-line reason on error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time
from pathlib import Path

from ..chunkwire import BatchPolicy, ExternalProcess
from ..errors import ReqSentryError
from ..evalkit import (
    confusion,
    cross_validate,
    format_metrics_table,
    metrics,
    synth_corpus,
    train_fraction_sweep,
    write_metrics_csv,
)
from ..logstore import LogStore
from ..neuralnet import ModelConfig, predict_many, serialize_model, train
from ..tokenizer import Vocabulary, encode, load_vocab, train_bbpe
from ..request_codec import flatten
from . import datafiles
from .api import create_app
from .pipeline import LocalScorer, Pipeline, RemoteScorer


def _env(name: str, default=None):
    return os.environ.get(f"REQSENTRY_{name.upper().replace('-', '_')}", default)


def _parse_address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ReqSentryError(f"address must be host:port, got {text!r}")
    return host, int(port)


def _labeled_texts(records) -> list[tuple[bytes, int]]:
    pairs = []
    for record in records:
        if record.truth_label is None:
            raise ReqSentryError("corpus record is missing the @label ground-truth key")
        pairs.append((flatten(record), record.truth_label))
    return pairs


def _model_config(args, vocab_size: int) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size,
        embed_dim=args.embed_dim,
        seq_len=args.seq_len,
        dropout_p=args.dropout,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
    )


# -- subcommands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    corpus = synth_corpus(args.benign, args.attack, seed=args.seed)
    datafiles.write_corpus(args.out, [record for record, _ in corpus])
    print(f"wrote {len(corpus)} records ({args.benign} benign, {args.attack} attack) to {args.out}")
    return 0


def cmd_train(args) -> int:
    records = datafiles.read_corpus(args.corpus)
    pairs = _labeled_texts(records)
    print(f"training on {len(pairs)} records from {args.corpus}")

    started = time.monotonic()
    vocab = train_bbpe([t for t, _ in pairs], target_vocab_size=args.vocab_size)
    print(f"tokenizer: {vocab.size} tokens ({len(vocab.merges)} merges) "
          f"in {time.monotonic() - started:.1f}s")

    config = _model_config(args, vocab.size)
    sequences = [
        (encode(vocab, t, max_len=config.seq_len), y) for t, y in pairs
    ]
    params, history = train(sequences, config)
    if history:
        print(f"classifier: final epoch mean loss {history[-1]:.4f}")

    blob = serialize_model(vocab, params)
    Path(args.out).write_bytes(blob)
    print(f"model written to {args.out} ({len(blob)} bytes)")

    if args.cv:
        result = cross_validate(pairs, k=args.cv, config=config, threshold=args.threshold,
                                seed=args.seed)
        rows = [
            {
                "accuracy": result.mean.accuracy,
                "precision": result.mean.precision,
                "recall": result.mean.recall,
                "f1": result.mean.f1,
                "f1_std": result.f1_std,
            }
        ]
        cols = ["accuracy", "precision", "recall", "f1", "f1_std"]
        print(f"\n{args.cv}-fold cross-validation")
        print(format_metrics_table(rows, cols))
        if args.report:
            write_metrics_csv(f"{args.report}.cv.csv", rows, cols)

    if args.fractions:
        fractions = [float(f) for f in args.fractions.split(",")]
        rows = train_fraction_sweep(pairs, fractions, config, threshold=args.threshold,
                                    seed=args.seed)
        cols = ["fraction", "accuracy", "precision", "recall", "f1"]
        print("\ntrain-fraction sweep")
        print(format_metrics_table(rows, cols))
        if args.report:
            write_metrics_csv(f"{args.report}.sweep.csv", rows, cols)
    return 0


def cmd_eval(args) -> int:
    from ..neuralnet import deserialize_model

    vocab, params = deserialize_model(Path(args.model_file).read_bytes())
    records = datafiles.read_corpus(args.corpus)
    pairs = _labeled_texts(records)
    length = params.config.seq_len
    sequences = [encode(vocab, t, max_len=length) for t, _ in pairs]
    probs = predict_many(params, sequences)
    m = metrics(confusion(list(probs), [y for _, y in pairs], args.threshold))
    rows = [dataclasses.asdict(m)]
    cols = ["accuracy", "precision", "recall", "f1"]
    print(format_metrics_table(rows, cols))
    if args.report:
        write_metrics_csv(args.report, rows, cols)
    return 0


def cmd_serve_model(args) -> int:
    host, port = _parse_address(args.listen)
    policy = BatchPolicy(size=args.batch_size, max_wait=args.batch_wait)
    server = ExternalProcess(
        host=host,
        port=port,
        model_path=args.model_file,
        batch_policy=policy,
        reassembly_deadline=args.deadline,
    )
    server.start()
    actual = server.address
    print(f"model server listening on {actual[0]}:{actual[1]}")
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        print("shutting down")
        server.stop()
    return 0


def cmd_serve_api(args) -> int:
    import uvicorn

    store = LogStore(args.store)
    if args.model_endpoint:
        scorer = RemoteScorer(_parse_address(args.model_endpoint))
    elif args.model_file:
        scorer = LocalScorer(Path(args.model_file).read_bytes())
    else:
        scorer = LocalScorer()
    pipeline = Pipeline(store, scorer)
    app = create_app(store, pipeline, default_threshold=args.threshold, asset_dir=args.assets)
    host, port = _parse_address(args.listen)
    print(f"API listening on {host}:{port} (store: {args.store})")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def cmd_ingest(args) -> int:
    store = LogStore(args.store)
    if args.model_endpoint:
        scorer = RemoteScorer(_parse_address(args.model_endpoint))
    elif args.model_file:
        scorer = LocalScorer(Path(args.model_file).read_bytes())
    else:
        raise ReqSentryError("ingest needs --model-endpoint or --model-file")
    pipeline = Pipeline(store, scorer)
    records = datafiles.read_corpus(args.corpus)
    scored = 0
    for record in records:
        _, label = pipeline.score_record(record)
        scored += label is not None
    pipeline.flush_retries(timeout=30.0)
    unscored = sum(1 for e in store.snapshot() if e.model_label is None)
    print(f"ingested {len(records)} records into {args.store}; "
          f"{len(records) - unscored} scored, {unscored} unscored")
    store.close()
    return 0


def cmd_tokenize(args) -> int:
    if args.vocab_file:
        with open(args.vocab_file, encoding="utf-8") as fh:
            vocab = load_vocab(fh)
    elif args.model_file:
        from ..neuralnet import deserialize_model

        vocab, _ = deserialize_model(Path(args.model_file).read_bytes())
    else:
        vocab = Vocabulary(merges=())  # raw bytes plus PAD
    seq = encode(vocab, args.text.encode("utf-8"))
    print(list(seq.tokens))
    return 0


# -- wiring ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reqsentry", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="emit a labeled synthetic corpus")
    synth.add_argument("--benign", type=int, default=500)
    synth.add_argument("--attack", type=int, default=500)
    synth.add_argument("--seed", type=int, default=int(_env("seed", 0)))
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=cmd_synth)

    def add_model_hyperparams(p):
        p.add_argument("--vocab-size", type=int, default=int(_env("vocab-size", 5000)))
        p.add_argument("--embed-dim", type=int, default=64)
        p.add_argument("--seq-len", type=int, default=512)
        p.add_argument("--dropout", type=float, default=0.2)
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--batch-size", type=int, default=int(_env("batch-size", 32)))
        p.add_argument("--epochs", type=int, default=10)
        p.add_argument("--seed", type=int, default=int(_env("seed", 0)))

    trainp = sub.add_parser("train", help="train tokenizer and classifier")
    trainp.add_argument("--corpus", required=True)
    trainp.add_argument("--out", required=True)
    trainp.add_argument("--threshold", type=float, default=float(_env("threshold", 0.5)))
    trainp.add_argument("--cv", type=int, default=0, help="k for a k-fold CV report (0 = skip)")
    trainp.add_argument("--fractions", default="", help="comma list for a sweep report")
    trainp.add_argument("--report", default="", help="CSV report path prefix")
    add_model_hyperparams(trainp)
    trainp.set_defaults(func=cmd_train)

    evalp = sub.add_parser("eval", help="evaluate a model on a labeled corpus")
    evalp.add_argument("--model-file", required=True, default=_env("model-file"))
    evalp.add_argument("--corpus", required=True)
    evalp.add_argument("--threshold", type=float, default=float(_env("threshold", 0.5)))
    evalp.add_argument("--report", default="")
    evalp.set_defaults(func=cmd_eval)

    servem = sub.add_parser("serve-model", help="run the external model process")
    servem.add_argument("--listen", default=_env("listen", "127.0.0.1:7171"))
    servem.add_argument("--model-file", default=_env("model-file"), required=_env("model-file") is None)
    servem.add_argument("--batch-size", type=int, default=int(_env("batch-size", 1)))
    servem.add_argument("--batch-wait", type=float, default=float(_env("batch-wait", 0.05)))
    servem.add_argument("--deadline", type=float, default=30.0)
    servem.set_defaults(func=cmd_serve_model)

    servea = sub.add_parser("serve-api", help="run the HTTP API")
    servea.add_argument("--listen", default=_env("listen", "127.0.0.1:8080"))
    servea.add_argument("--store", default=_env("store"), required=_env("store") is None)
    servea.add_argument("--model-endpoint", default=_env("model-endpoint"))
    servea.add_argument("--model-file", default=_env("model-file"))
    servea.add_argument("--threshold", type=float, default=float(_env("threshold", 0.7)))
    servea.add_argument("--assets", default=_env("assets"))
    servea.set_defaults(func=cmd_serve_api)

    ingest = sub.add_parser("ingest", help="replay a corpus through the pipeline")
    ingest.add_argument("--store", default=_env("store"), required=_env("store") is None)
    ingest.add_argument("--corpus", required=True)
    ingest.add_argument("--model-endpoint", default=_env("model-endpoint"))
    ingest.add_argument("--model-file", default=_env("model-file"))
    ingest.set_defaults(func=cmd_ingest)

    tok = sub.add_parser("tokenize", help="show token ids for a request string")
    tok.add_argument("text")
    tok.add_argument("--vocab-file")
    tok.add_argument("--model-file")
    tok.set_defaults(func=cmd_tokenize)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ReqSentryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
