"""Evaluation harness: confusion/metrics, stratified k-fold cross-validation,
train-fraction sweeps, and a deterministic synthetic request corpus.

The cross-validation and sweep protocols train the byte-level tokenizer once
on the full dataset and reuse it for every fold/fraction; only the classifier
is refit. That mirrors how the original measurements were produced and is a
deliberate, documented leakage trade-off.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidConfigError, InvalidInputError
from .neuralnet import ModelConfig, predict_many, train
from .request_codec import RequestRecord, flatten
from .tokenizer import TokenSequence, encode, train_bbpe

# fit(train_pairs) -> score(test_pairs) -> anomaly probabilities
FitFunction = Callable[
    [list[tuple[TokenSequence, int]]],
    Callable[[list[tuple[TokenSequence, int]]], np.ndarray],
]


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class FoldSpec:
    k: int
    assignment: tuple[int, ...]  # example index -> fold index
    seed: int

    def fold_indices(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f == fold]


@dataclass(frozen=True)
class CVResult:
    mean: Metrics
    f1_std: float
    per_fold: tuple[Metrics, ...]


def confusion(
    predictions: Sequence[float], labels: Sequence[int], threshold: float
) -> ConfusionMatrix:
    """Count outcomes; a prediction is positive iff probability > threshold."""
    if len(predictions) != len(labels):
        raise InvalidInputError(
            f"{len(predictions)} predictions for {len(labels)} labels"
        )
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInputError(f"threshold {threshold} outside [0, 1]")
    tp = fp = tn = fn = 0
    for p, y in zip(predictions, labels):
        positive = p > threshold
        if positive and y == 1:
            tp += 1
        elif positive and y == 0:
            fp += 1
        elif not positive and y == 0:
            tn += 1
        else:
            fn += 1
    return ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Accuracy/precision/recall/F1 with zero-denominator conventions -> 0."""
    if cm.total == 0:
        raise InvalidInputError("empty confusion matrix")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(accuracy=accuracy, precision=precision, recall=recall, f1=f1)


def kfold_split(n: int, labels: Sequence[int], k: int, seed: int = 0) -> FoldSpec:
    """Stratified, seeded partition into k folds of near-equal size.

    Examples are dealt per class (shuffled) into the currently smallest fold,
    so fold sizes differ by at most one and each class spreads as evenly as
    the counts allow.
    """
    if k < 2:
        raise InvalidInputError(f"k must be at least 2, got {k}")
    if k > n:
        raise InvalidInputError(f"cannot split {n} examples into {k} folds")
    if len(labels) != n:
        raise InvalidInputError(f"{len(labels)} labels for n={n}")

    rng = random.Random(seed)
    assignment = [0] * n
    fold_sizes = [0] * k
    for cls in sorted(set(labels)):
        idxs = [i for i, y in enumerate(labels) if y == cls]
        rng.shuffle(idxs)
        for i in idxs:
            fold = min(range(k), key=lambda f: (fold_sizes[f], f))
            assignment[i] = fold
            fold_sizes[fold] += 1
    return FoldSpec(k=k, assignment=tuple(assignment), seed=seed)


def _prepare_sequences(
    texts: Sequence[tuple[bytes, int]], config: ModelConfig
) -> tuple[list[tuple[TokenSequence, int]], ModelConfig]:
    """Train the tokenizer once on every text, encode, and fix up vocab size."""
    vocab = train_bbpe([t for t, _ in texts], target_vocab_size=config.vocab_size)
    actual = replace(config, vocab_size=vocab.size)
    pairs = [(encode(vocab, t, max_len=actual.seq_len), y) for t, y in texts]
    return pairs, actual


def _cnn_fit(config: ModelConfig) -> FitFunction:
    def fit(train_pairs: list[tuple[TokenSequence, int]]):
        params, _ = train(train_pairs, config)

        def score(test_pairs: list[tuple[TokenSequence, int]]) -> np.ndarray:
            return predict_many(params, [s for s, _ in test_pairs])

        return score

    return fit


def cross_validate(
    dataset: Sequence[tuple[bytes, int]],
    k: int,
    config: ModelConfig,
    threshold: float = 0.5,
    seed: int = 0,
    fit: FitFunction | None = None,
) -> CVResult:
    """k-fold CV: train on k-1 folds, score the held-out fold, average.

    Returns the unweighted mean of the per-fold metrics and the population
    standard deviation of the per-fold F1 scores. `fit` defaults to training
    the CNN with `config`; tests may inject an oracle.
    """
    if k < 2:
        raise InvalidInputError(f"k must be at least 2, got {k}")
    pairs, actual_config = _prepare_sequences(dataset, config)
    if fit is None:
        fit = _cnn_fit(actual_config)
    labels = [y for _, y in pairs]
    folds = kfold_split(len(pairs), labels, k, seed)

    per_fold: list[Metrics] = []
    for fold in range(k):
        held = folds.fold_indices(fold)
        rest = [i for i in range(len(pairs)) if folds.assignment[i] != fold]
        score = fit([pairs[i] for i in rest])
        test_pairs = [pairs[i] for i in held]
        probs = score(test_pairs)
        per_fold.append(metrics(confusion(probs, [y for _, y in test_pairs], threshold)))

    mean = Metrics(
        accuracy=float(np.mean([m.accuracy for m in per_fold])),
        precision=float(np.mean([m.precision for m in per_fold])),
        recall=float(np.mean([m.recall for m in per_fold])),
        f1=float(np.mean([m.f1 for m in per_fold])),
    )
    f1_std = float(np.std([m.f1 for m in per_fold]))  # population std over folds
    return CVResult(mean=mean, f1_std=f1_std, per_fold=tuple(per_fold))


def _stratified_train_indices(
    labels: Sequence[int], fraction: float, rng: random.Random
) -> tuple[list[int], list[int]]:
    train_idx: list[int] = []
    test_idx: list[int] = []
    for cls in sorted(set(labels)):
        idxs = [i for i, y in enumerate(labels) if y == cls]
        rng.shuffle(idxs)
        n_train = round(fraction * len(idxs))
        if n_train == 0 or n_train == len(idxs):
            raise InvalidInputError(
                f"fraction {fraction} leaves class {cls} with an empty train or test set"
            )
        train_idx.extend(idxs[:n_train])
        test_idx.extend(idxs[n_train:])
    return sorted(train_idx), sorted(test_idx)


def train_fraction_sweep(
    dataset: Sequence[tuple[bytes, int]],
    fractions: Sequence[float],
    config: ModelConfig,
    threshold: float = 0.5,
    seed: int = 0,
    fit: FitFunction | None = None,
) -> list[dict]:
    """Evaluate with decreasing training-set fractions.

    Each fraction gets a fresh stratified train/test split and a freshly fit
    classifier; the tokenizer (inside `_prepare_sequences`) is shared. Returns
    one row per fraction with all four metrics.
    """
    for f in fractions:
        if not 0.0 < f < 1.0:
            raise InvalidConfigError(f"fraction {f} outside (0, 1)")
    pairs, actual_config = _prepare_sequences(dataset, config)
    if fit is None:
        fit = _cnn_fit(actual_config)
    labels = [y for _, y in pairs]

    rows: list[dict] = []
    for fraction in fractions:
        rng = random.Random(f"{seed}:{fraction!r}")
        train_idx, test_idx = _stratified_train_indices(labels, fraction, rng)
        score = fit([pairs[i] for i in train_idx])
        test_pairs = [pairs[i] for i in test_idx]
        probs = score(test_pairs)
        m = metrics(confusion(probs, [y for _, y in test_pairs], threshold))
        rows.append(
            {
                "fraction": fraction,
                "accuracy": m.accuracy,
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

_HOSTS = ("shop.example.org", "blog.example.net", "intranet.example.com")
_PATHS = (
    "/home", "/index.php", "/login", "/products", "/products/item",
    "/search", "/about", "/news", "/cart", "/api/items", "/static/app.js",
)
_USER_AGENTS = (
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/537.36",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) Gecko/20100101 Firefox/101.0",
    "Mozilla/5.0 (X11; Linux x86_64) Chrome/102.0.5005.63 Safari/537.36",
    "curl/7.79.1",
)
_QUERY_WORDS = ("shoes", "news", "summer", "gift", "blue", "report")

SQLI_FRAGMENTS = (
    "' UNION SELECT username, password FROM users--",
    "1' OR '1'='1",
    "'; DROP TABLE accounts;--",
    "admin'--",
    "1 UNION SELECT NULL,NULL,NULL--",
)
XSS_FRAGMENTS = (
    "<script>alert(1)</script>",
    "<img src=x onerror=alert(document.cookie)>",
    "\"><script>document.location='http://evil.example/c'</script>",
)
ESCAPED_FRAGMENTS = (
    "%27%20UNION%20SELECT%20passwd%20FROM%20users--",
    "%3Cscript%3Ealert(1)%3C%2Fscript%3E",
    "%2527%2520OR%25201%253D1",  # %25-obfuscated: %25 decodes to %
)
ATTACK_FRAGMENTS = SQLI_FRAGMENTS + XSS_FRAGMENTS + ESCAPED_FRAGMENTS

_CORPUS_EPOCH_US = 1_654_041_600_000_000  # 2022-06-01T00:00:00Z


def _benign_record(rng: random.Random, ts: int) -> RequestRecord:
    host = rng.choice(_HOSTS)
    path = rng.choice(_PATHS)
    query = ""
    if rng.random() < 0.5:
        query = rng.choice(
            (f"?id={rng.randrange(1, 500)}", f"?q={rng.choice(_QUERY_WORDS)}", f"?page={rng.randrange(1, 20)}")
        )
    fields: dict[str, str | None] = {
        "getAuthType": None,
        "cookie: JSESSIONID": f"{rng.getrandbits(64):016X}",
        "getRemoteAddr": f"{rng.randrange(11, 223)}.{rng.randrange(256)}.{rng.randrange(256)}.{rng.randrange(1, 255)}",
        "getServletPath": path,
        "getMethod": "POST" if rng.random() < 0.15 else "GET",
        "getContextPath": "",
        "getServerName": host,
        "getRequestURI": path + query,
        "getRequestURL": f"http://{host}{path}{query}",
        "header: user-agent": rng.choice(_USER_AGENTS),
        "header: host": host,
    }
    return RequestRecord(fields=fields, timestamp_us=ts)


def _attack_record(rng: random.Random, ts: int) -> RequestRecord:
    record = _benign_record(rng, ts)
    n_fragments = 1 if rng.random() < 0.7 else 2
    for _ in range(n_fragments):
        fragment = rng.choice(ATTACK_FRAGMENTS)
        target = rng.choice(("query", "cookie", "user-agent", "path"))
        host = record.fields["getServerName"]
        if target == "query":
            uri = record.fields["getRequestURI"]
            sep = "&" if "?" in uri else "?"
            uri = f"{uri}{sep}input={fragment}"
            record.fields["getRequestURI"] = uri
            record.fields["getRequestURL"] = f"http://{host}{uri}"
        elif target == "cookie":
            record.fields["cookie: JSESSIONID"] = fragment
        elif target == "user-agent":
            record.fields["header: user-agent"] = fragment
        else:
            path = record.fields["getServletPath"] + "/" + fragment
            record.fields["getServletPath"] = path
            record.fields["getRequestURI"] = path
            record.fields["getRequestURL"] = f"http://{host}{path}"
    return record


def synth_corpus(
    n_benign: int, n_attack: int, seed: int = 0
) -> list[tuple[RequestRecord, int]]:
    """Deterministic labeled corpus: plausible browsing plus injected attacks.

    Attack records embed SQL-injection fragments, script-tag payloads, or
    URL-escaped variants into a randomly chosen field. Class skew is set by
    the two counts (e.g. 70/930 mirrors a mostly-malicious capture).
    Timestamps increase from a fixed epoch with randomized spacing.
    """
    if n_benign < 1 or n_attack < 1:
        raise InvalidInputError("both classes need at least one record")
    rng = random.Random(seed)
    labels = [0] * n_benign + [1] * n_attack
    rng.shuffle(labels)
    corpus: list[tuple[RequestRecord, int]] = []
    ts = _CORPUS_EPOCH_US
    for label in labels:
        ts += rng.randrange(1_000_000, 120_000_000)  # 1s .. 2min apart
        record = _attack_record(rng, ts) if label else _benign_record(rng, ts)
        record.truth_label = label
        corpus.append((record, label))
    return corpus


def corpus_texts(corpus: Sequence[tuple[RequestRecord, int]]) -> list[tuple[bytes, int]]:
    """Flatten a labeled record corpus into (canonical string, label) pairs."""
    return [(flatten(record), label) for record, label in corpus]


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def format_metrics_table(rows: Sequence[dict], columns: Sequence[str]) -> str:
    """Fixed-width text table; floats rendered with four decimals."""
    def fmt(value) -> str:
        return f"{value:.4f}" if isinstance(value, float) else str(value)

    rendered = [[fmt(row.get(c, "")) for c in columns] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in rendered)) if rendered else len(c)
              for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rendered:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(lines)


def write_metrics_csv(path: str, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in columns})
