import random
from collections import Counter

import numpy as np
import pytest

from reqsentry.errors import InvalidConfigError, InvalidInputError
from reqsentry.evalkit import (
    ATTACK_FRAGMENTS,
    ConfusionMatrix,
    Metrics,
    confusion,
    corpus_texts,
    cross_validate,
    format_metrics_table,
    kfold_split,
    metrics,
    synth_corpus,
    train_fraction_sweep,
    write_metrics_csv,
)
from reqsentry.neuralnet import ModelConfig
from reqsentry.request_codec import flatten


def oracle_fit(train_pairs):
    # "perfect classifier": returns the true label as the probability
    return lambda test_pairs: np.asarray([float(y) for _, y in test_pairs])


def constant_fit(value):
    return lambda train_pairs: (lambda test_pairs: np.full(len(test_pairs), value))


def small_config(**kw):
    defaults = dict(vocab_size=300, embed_dim=8, seq_len=64, filters_per_width=4,
                    epochs=2, batch_size=8, learning_rate=0.01)
    defaults.update(kw)
    return ModelConfig(**defaults)


# --- confusion / metrics -----------------------------------------------------


def test_confusion_basic():
    cm = confusion([0.9, 0.1], [1, 0], 0.5)
    assert (cm.tp, cm.tn, cm.fp, cm.fn) == (1, 1, 0, 0)


def test_confusion_all_negative_predictions():
    cm = confusion([0.0, 0.0, 0.0], [1, 0, 0], 0.5)
    assert cm.tp == 0 and cm.fp == 0
    assert cm.fn == 1 and cm.tn == 2


def test_confusion_matches_loop_oracle():
    rng = random.Random(5)
    preds = [rng.random() for _ in range(100)]
    labels = [rng.randrange(2) for _ in range(100)]
    threshold = 0.4
    cm = confusion(preds, labels, threshold)
    tp = sum(1 for p, y in zip(preds, labels) if p > threshold and y == 1)
    fp = sum(1 for p, y in zip(preds, labels) if p > threshold and y == 0)
    tn = sum(1 for p, y in zip(preds, labels) if p <= threshold and y == 0)
    fn = sum(1 for p, y in zip(preds, labels) if p <= threshold and y == 1)
    assert (cm.tp, cm.fp, cm.tn, cm.fn) == (tp, fp, tn, fn)
    assert cm.total == 100


def test_confusion_validates_inputs():
    with pytest.raises(InvalidInputError):
        confusion([0.5], [1, 0], 0.5)
    with pytest.raises(InvalidInputError):
        confusion([0.5], [1], 1.5)


def test_metrics_zero_denominator_conventions():
    m = metrics(ConfusionMatrix(tp=0, fp=0, tn=10, fn=0))
    assert m == Metrics(accuracy=1.0, precision=0.0, recall=0.0, f1=0.0)
    with pytest.raises(InvalidInputError):
        metrics(ConfusionMatrix(0, 0, 0, 0))


def test_metrics_known_values():
    m = metrics(ConfusionMatrix(tp=2, fp=1, tn=6, fn=1))
    assert m.precision == pytest.approx(2 / 3)
    assert m.recall == pytest.approx(2 / 3)
    assert m.f1 == pytest.approx(2 / 3)
    assert m.accuracy == pytest.approx(0.8)


def test_f1_harmonic_identity_random_matrices():
    rng = random.Random(2)
    for _ in range(50):
        cm = ConfusionMatrix(*(rng.randrange(0, 30) for _ in range(4)))
        if cm.total == 0:
            continue
        m = metrics(cm)
        if m.precision + m.recall:
            expected = 2 * m.precision * m.recall / (m.precision + m.recall)
            assert abs(m.f1 - expected) < 1e-12
            assert min(m.precision, m.recall) - 1e-12 <= m.f1 <= max(m.precision, m.recall) + 1e-12
        for v in (m.accuracy, m.precision, m.recall, m.f1):
            assert 0.0 <= v <= 1.0


# --- k-fold ------------------------------------------------------------------


def test_kfold_even_sizes():
    spec = kfold_split(10, [0, 1] * 5, k=5, seed=0)
    sizes = Counter(spec.assignment)
    assert sorted(sizes.values()) == [2, 2, 2, 2, 2]


def test_kfold_pigeonhole_sizes():
    spec = kfold_split(11, [0, 1] * 5 + [0], k=5, seed=1)
    sizes = sorted(Counter(spec.assignment).values())
    assert sizes == [2, 2, 2, 2, 3]


def test_kfold_partition_and_stratification():
    rng = random.Random(9)
    labels = [rng.randrange(2) for _ in range(137)]
    spec = kfold_split(len(labels), labels, k=5, seed=3)
    assert len(spec.assignment) == len(labels)
    assert set(spec.assignment) == set(range(5))
    global_ratio = sum(labels) / len(labels)
    for fold in range(5):
        idxs = spec.fold_indices(fold)
        positives = sum(labels[i] for i in idxs)
        assert abs(positives - len(idxs) * global_ratio) <= 1.0


def test_kfold_balanced_labels_balanced_folds():
    labels = [0] * 25 + [1] * 25
    spec = kfold_split(50, labels, k=5, seed=4)
    for fold in range(5):
        idxs = spec.fold_indices(fold)
        assert abs(sum(labels[i] for i in idxs) - len(idxs) / 2) <= 1.0


def test_kfold_deterministic_and_validated():
    labels = [0, 1] * 10
    assert kfold_split(20, labels, 4, seed=7) == kfold_split(20, labels, 4, seed=7)
    with pytest.raises(InvalidInputError):
        kfold_split(3, [0, 1, 0], k=4)
    with pytest.raises(InvalidInputError):
        kfold_split(3, [0, 1, 0], k=1)


# --- cross-validation --------------------------------------------------------


def tiny_corpus_texts(n=60, seed=1):
    return corpus_texts(synth_corpus(n // 2, n // 2, seed=seed))


def test_cross_validate_perfect_oracle():
    result = cross_validate(tiny_corpus_texts(), k=5, config=small_config(), fit=oracle_fit)
    assert result.mean.f1 == 1.0
    assert result.f1_std == 0.0
    assert len(result.per_fold) == 5


def test_cross_validate_constant_positive_on_skewed_data():
    # 93% positive: always-anomalous predictor has precision == base rate
    texts = corpus_texts(synth_corpus(70, 930, seed=4))
    result = cross_validate(texts, k=5, config=small_config(), fit=constant_fit(1.0))
    assert abs(result.mean.precision - 0.93) < 1e-12
    assert result.mean.recall == 1.0
    assert result.mean.accuracy == pytest.approx(0.93, abs=1e-12)


def test_cross_validate_trains_real_model_small():
    texts = tiny_corpus_texts(n=80, seed=2)
    result = cross_validate(texts, k=2, config=small_config(), threshold=0.5, seed=0)
    assert 0.0 <= result.mean.f1 <= 1.0
    assert result.f1_std >= 0.0


# --- sweep -------------------------------------------------------------------


def test_sweep_rows_and_determinism():
    texts = tiny_corpus_texts(n=60, seed=3)
    rows1 = train_fraction_sweep(texts, [0.8, 0.5], small_config(), fit=oracle_fit, seed=5)
    rows2 = train_fraction_sweep(texts, [0.8, 0.5], small_config(), fit=oracle_fit, seed=5)
    assert rows1 == rows2
    assert [r["fraction"] for r in rows1] == [0.8, 0.5]
    assert all(r["f1"] == 1.0 for r in rows1)


def test_sweep_validates_fractions():
    texts = tiny_corpus_texts(n=20)
    with pytest.raises(InvalidConfigError):
        train_fraction_sweep(texts, [1.5], small_config())
    with pytest.raises(InvalidInputError):
        train_fraction_sweep(texts, [0.01], small_config(), fit=oracle_fit)


# --- synthetic corpus --------------------------------------------------------


def test_synth_corpus_deterministic():
    a = synth_corpus(20, 20, seed=9)
    b = synth_corpus(20, 20, seed=9)
    assert a == b
    c = synth_corpus(20, 20, seed=10)
    assert a != c


def test_synth_corpus_attack_records_contain_fragments():
    corpus = synth_corpus(50, 50, seed=0)
    assert sum(label for _, label in corpus) == 50
    for record, label in corpus:
        text = flatten(record).decode()
        has_fragment = any(f in text for f in ATTACK_FRAGMENTS)
        if label == 1:
            assert has_fragment
        else:
            assert not has_fragment


def test_synth_corpus_skewed_ratio():
    corpus = synth_corpus(7, 93, seed=0)
    assert sum(1 for _, y in corpus if y == 0) == 7


def test_synth_corpus_timestamps_increase():
    corpus = synth_corpus(30, 30, seed=1)
    stamps = [record.timestamp_us for record, _ in corpus]
    assert all(a < b for a, b in zip(stamps, stamps[1:]))


def test_synth_corpus_validates_counts():
    with pytest.raises(InvalidInputError):
        synth_corpus(0, 5)


# --- reports -----------------------------------------------------------------


def test_format_and_write_report(tmp_path):
    rows = [
        {"fraction": 0.8, "accuracy": 0.99, "precision": 1.0, "recall": 0.98, "f1": 0.99},
        {"fraction": 0.05, "accuracy": 0.9, "precision": 0.91, "recall": 0.9, "f1": 0.905},
    ]
    cols = ["fraction", "accuracy", "precision", "recall", "f1"]
    text = format_metrics_table(rows, cols)
    assert "fraction" in text and "0.9900" in text
    path = tmp_path / "report.csv"
    write_metrics_csv(str(path), rows, cols)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "fraction,accuracy,precision,recall,f1"
    assert len(lines) == 3
