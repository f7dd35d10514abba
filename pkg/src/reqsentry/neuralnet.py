"""Token-level 1D CNN for two-way request classification.

Architecture: learned token embedding, parallel valid convolutions of widths
2/3/4 (100 filters each by default), ReLU, a global max over each feature
map, concatenation to one 300-wide vector, inverted dropout (train only),
one dense layer, softmax over the two classes.

Forward/backward passes are written out against numpy arrays; there is no
autodiff. Arrays are float32 for training and inference; tests that check
gradients run the same code at float64 via :meth:`Parameters.astype`.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, ParseError, ReqSentryError
from .tokenizer import MergeRule, TokenSequence, Vocabulary

PROB_FLOOR = 1e-12


class InternalError(ReqSentryError):
    """Shapes out of sync between a cache and the parameters it came from."""


class ModelFormatError(ParseError):
    """Serialized model bytes are malformed; the message names the section."""


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters; defaults follow the published architecture."""

    vocab_size: int
    embed_dim: int = 64
    seq_len: int = 512
    kernel_widths: tuple[int, ...] = (2, 3, 4)
    filters_per_width: int = 100
    dropout_p: float = 0.2
    classes: int = 2
    pad_id: int | None = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 1:
            raise InvalidConfigError("vocab_size must be positive")
        if self.classes != 2:
            raise InvalidConfigError("classifier is two-way")
        if not self.kernel_widths or min(self.kernel_widths) < 1:
            raise InvalidConfigError("kernel widths must be positive")
        if self.seq_len < max(self.kernel_widths):
            raise InvalidConfigError(
                f"seq_len {self.seq_len} shorter than widest kernel {max(self.kernel_widths)}"
            )
        if not 0.0 <= self.dropout_p < 1.0:
            raise InvalidConfigError("dropout_p must be in [0, 1)")
        if self.pad_id is not None and not 0 <= self.pad_id < self.vocab_size:
            raise InvalidConfigError(f"pad_id {self.pad_id} outside vocabulary")

    @property
    def total_filters(self) -> int:
        return self.filters_per_width * len(self.kernel_widths)

    def architecture(self) -> tuple:
        """The fields that determine parameter shapes and inference behavior
        (training hyperparameters are not part of a serialized model)."""
        return (
            self.vocab_size,
            self.embed_dim,
            self.seq_len,
            self.kernel_widths,
            self.filters_per_width,
            self.dropout_p,
            self.classes,
            self.pad_id,
        )


@dataclass
class Parameters:
    """All trainable tensors. Immutable by convention once training ends."""

    config: ModelConfig
    embedding: np.ndarray                 # (V, d)
    conv_w: tuple[np.ndarray, ...]        # per width: (F, k, d)
    conv_b: tuple[np.ndarray, ...]        # per width: (F,)
    dense_w: np.ndarray                   # (2, total_filters)
    dense_b: np.ndarray                   # (2,)

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        yield "embedding", self.embedding
        for w, b in zip(self.conv_w, self.conv_b):
            k = w.shape[1]
            yield f"conv{k}_w", w
            yield f"conv{k}_b", b
        yield "dense_w", self.dense_w
        yield "dense_b", self.dense_b

    @property
    def dtype(self) -> np.dtype:
        return self.embedding.dtype

    def astype(self, dtype) -> "Parameters":
        return Parameters(
            config=self.config,
            embedding=self.embedding.astype(dtype),
            conv_w=tuple(w.astype(dtype) for w in self.conv_w),
            conv_b=tuple(b.astype(dtype) for b in self.conv_b),
            dense_w=self.dense_w.astype(dtype),
            dense_b=self.dense_b.astype(dtype),
        )

    def copy(self) -> "Parameters":
        return self.astype(self.dtype)


@dataclass
class Gradients:
    """Same shapes as Parameters; see :func:`backward`."""

    embedding: np.ndarray
    conv_w: tuple[np.ndarray, ...]
    conv_b: tuple[np.ndarray, ...]
    dense_w: np.ndarray
    dense_b: np.ndarray

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        yield "embedding", self.embedding
        for w, b in zip(self.conv_w, self.conv_b):
            k = w.shape[1]
            yield f"conv{k}_w", w
            yield f"conv{k}_b", b
        yield "dense_w", self.dense_w
        yield "dense_b", self.dense_b


@dataclass
class ForwardCache:
    """Activations retained for backward; only produced by forward()."""

    tokens: np.ndarray                    # (B, L) int64
    embedded: np.ndarray                  # (B, L, d)
    pre_relu: list[np.ndarray]            # per width: (B, P_k, F)
    argmax: list[np.ndarray]              # per width: (B, F) positions in 0..P_k-1
    dropped: np.ndarray                   # (B, total) input to the dense layer
    dropout_mask: np.ndarray | None       # scaled mask, None in eval mode
    logits: np.ndarray                    # (B, 2)
    probs: np.ndarray                     # (B, 2)


def params_equal(a: Parameters, b: Parameters) -> bool:
    return a.config.architecture() == b.config.architecture() and all(
        x.dtype == y.dtype and np.array_equal(x, y)
        for (_, x), (_, y) in zip(a.named_arrays(), b.named_arrays())
    )


def init_params(config: ModelConfig, seed: int, dtype=np.float32) -> Parameters:
    """Deterministic uniform Glorot init; biases zero; PAD embedding row zero."""
    rng = np.random.default_rng(seed)

    def glorot(shape, fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape).astype(dtype)

    v, d, f = config.vocab_size, config.embed_dim, config.filters_per_width
    embedding = glorot((v, d), v, d)
    if config.pad_id is not None:
        embedding[config.pad_id] = 0.0
    conv_w = tuple(glorot((f, k, d), k * d, f) for k in config.kernel_widths)
    conv_b = tuple(np.zeros(f, dtype=dtype) for _ in config.kernel_widths)
    dense_w = glorot((config.classes, config.total_filters), config.total_filters, config.classes)
    dense_b = np.zeros(config.classes, dtype=dtype)
    return Parameters(config, embedding, conv_w, conv_b, dense_w, dense_b)


def _softmax(logits: np.ndarray) -> np.ndarray:
    # float64 regardless of parameter dtype, so probabilities sum to 1 within
    # 1e-9 even for float32 models
    shifted = logits.astype(np.float64) - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _windows(x: np.ndarray, k: int) -> np.ndarray:
    """(B, L, d) -> (B, L-k+1, k*d), window-position-major within each row."""
    b, length, d = x.shape
    win = np.lib.stride_tricks.sliding_window_view(x, k, axis=1)  # (B, P, d, k)
    return win.transpose(0, 1, 3, 2).reshape(b, length - k + 1, k * d)


def _forward_batch(
    params: Parameters,
    tokens: np.ndarray,
    train: bool,
    rng: np.random.Generator | None,
) -> tuple[np.ndarray, ForwardCache]:
    cfg = params.config
    if tokens.ndim != 2 or tokens.shape[1] != cfg.seq_len:
        raise InvalidInputError(f"expected token matrix (*, {cfg.seq_len}), got {tokens.shape}")
    if tokens.min(initial=0) < 0 or tokens.max(initial=0) >= cfg.vocab_size:
        bad = int(tokens.max()) if tokens.max(initial=0) >= cfg.vocab_size else int(tokens.min())
        raise InvalidInputError(f"token id {bad} outside model vocabulary of {cfg.vocab_size}")

    x = params.embedding[tokens]  # (B, L, d)
    pooled_parts: list[np.ndarray] = []
    pre_relu: list[np.ndarray] = []
    argmax: list[np.ndarray] = []
    for wi, k in enumerate(cfg.kernel_widths):
        w, b = params.conv_w[wi], params.conv_b[wi]
        flat_w = w.reshape(w.shape[0], -1).T  # (k*d, F)
        z = _windows(x, k) @ flat_w + b       # (B, P, F)
        a = np.maximum(z, 0)
        idx = a.argmax(axis=1)                # first max wins on ties
        pooled_parts.append(np.take_along_axis(a, idx[:, None, :], axis=1)[:, 0, :])
        pre_relu.append(z)
        argmax.append(idx)
    pooled = np.concatenate(pooled_parts, axis=1)  # (B, total)

    mask: np.ndarray | None = None
    dropped = pooled
    if train and cfg.dropout_p > 0.0:
        if rng is None:
            raise InvalidInputError("train-mode forward needs an rng for the dropout mask")
        keep = rng.random(pooled.shape) >= cfg.dropout_p
        mask = keep.astype(pooled.dtype) / (1.0 - cfg.dropout_p)
        dropped = pooled * mask

    logits = dropped @ params.dense_w.T + params.dense_b
    probs = _softmax(logits)
    cache = ForwardCache(
        tokens=tokens,
        embedded=x,
        pre_relu=pre_relu,
        argmax=argmax,
        dropped=dropped,
        dropout_mask=mask,
        logits=logits,
        probs=probs,
    )
    return probs, cache


def forward(
    params: Parameters,
    tokens: TokenSequence | Sequence[int],
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Run one sequence through the network.

    Returns (probs, cache) where probs is the two-class distribution
    [p_benign, p_anomalous]. `mode` is "eval" (dropout is the identity) or
    "train" (inverted dropout using `rng`).
    """
    if mode not in ("train", "eval"):
        raise InvalidInputError(f"unknown mode {mode!r}")
    ids = tokens.tokens if isinstance(tokens, TokenSequence) else tuple(tokens)
    matrix = np.asarray([ids], dtype=np.int64)
    probs, cache = _forward_batch(params, matrix, train=(mode == "train"), rng=rng)
    return probs[0], cache


def loss(probs: np.ndarray, label: int) -> float:
    """Cross-entropy of the true class, clamped away from log(0)."""
    if label not in (0, 1):
        raise InvalidInputError(f"label must be 0 or 1, got {label}")
    return float(-np.log(max(float(probs[label]), PROB_FLOOR)))


def _backward_batch(params: Parameters, cache: ForwardCache, labels: np.ndarray) -> Gradients:
    cfg = params.config
    batch, total = cache.dropped.shape
    if cache.embedded.shape[2] != cfg.embed_dim or total != cfg.total_filters:
        raise InternalError("cache does not match parameter shapes")
    if labels.shape != (batch,):
        raise InternalError(f"labels shape {labels.shape} does not match batch {batch}")

    dtype = params.dtype
    dlogits = cache.probs.astype(dtype, copy=True)
    dlogits[np.arange(batch), labels] -= 1.0  # d(sum CE)/dlogits

    d_dense_w = dlogits.T @ cache.dropped
    d_dense_b = dlogits.sum(axis=0)
    d_dropped = dlogits @ params.dense_w
    d_pooled = d_dropped if cache.dropout_mask is None else d_dropped * cache.dropout_mask

    d_embedded = np.zeros_like(cache.embedded)
    d_conv_w: list[np.ndarray] = []
    d_conv_b: list[np.ndarray] = []
    f = cfg.filters_per_width
    for wi, k in enumerate(cfg.kernel_widths):
        z = cache.pre_relu[wi]
        d_pool_k = d_pooled[:, wi * f : (wi + 1) * f]  # (B, F)
        d_act = np.zeros_like(z)
        np.put_along_axis(d_act, cache.argmax[wi][:, None, :], d_pool_k[:, None, :], axis=1)
        d_z = d_act * (z > 0)

        win = _windows(cache.embedded, k)  # (B, P, k*d)
        positions = win.shape[1]
        d_wk_flat = win.reshape(-1, k * cfg.embed_dim).T @ d_z.reshape(-1, f)  # (k*d, F)
        d_conv_w.append(d_wk_flat.T.reshape(f, k, cfg.embed_dim))
        d_conv_b.append(d_z.sum(axis=(0, 1)))

        d_win = (d_z @ params.conv_w[wi].reshape(f, -1)).reshape(batch, positions, k, cfg.embed_dim)
        for j in range(k):
            d_embedded[:, j : j + positions, :] += d_win[:, :, j, :]

    d_embedding = np.zeros_like(params.embedding)
    np.add.at(d_embedding, cache.tokens.ravel(), d_embedded.reshape(-1, cfg.embed_dim))
    if cfg.pad_id is not None:
        d_embedding[cfg.pad_id] = 0.0

    return Gradients(
        embedding=d_embedding,
        conv_w=tuple(d_conv_w),
        conv_b=tuple(d_conv_b),
        dense_w=d_dense_w,
        dense_b=d_dense_b,
    )


def backward(params: Parameters, cache: ForwardCache, label: int) -> Gradients:
    """Exact gradient of loss() w.r.t. every parameter, for one sequence.

    Max-pool gradient routes to the stored argmax positions; the stored
    dropout mask (if any) is applied; the PAD embedding row's gradient is
    forced to zero.
    """
    if label not in (0, 1):
        raise InvalidInputError(f"label must be 0 or 1, got {label}")
    return _backward_batch(params, cache, np.asarray([label]))


def _token_matrix(dataset: Sequence[tuple[TokenSequence, int]], config: ModelConfig) -> np.ndarray:
    rows = []
    for seq, _ in dataset:
        ids = list(seq.tokens)
        if len(ids) > config.seq_len:
            ids = ids[: config.seq_len]
        elif len(ids) < config.seq_len:
            if config.pad_id is None:
                raise InvalidInputError(
                    f"sequence of {len(ids)} tokens needs padding but config has no pad_id"
                )
            ids = ids + [config.pad_id] * (config.seq_len - len(ids))
        rows.append(ids)
    return np.asarray(rows, dtype=np.int64)


class _Adam:
    """First-order adaptive-moment updates over a Parameters object."""

    def __init__(self, params: Parameters):
        cfg = params.config
        self.lr, self.b1, self.b2, self.eps = (
            cfg.learning_rate,
            cfg.beta1,
            cfg.beta2,
            cfg.epsilon,
        )
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in params.named_arrays()}
        self.v = {name: np.zeros_like(arr) for name, arr in params.named_arrays()}

    def step(self, params: Parameters, grads: Gradients) -> None:
        self.t += 1
        correction1 = 1.0 - self.b1**self.t
        correction2 = 1.0 - self.b2**self.t
        for (name, arr), (_, g) in zip(params.named_arrays(), grads.named_arrays()):
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * np.square(g)
            arr -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def train(
    dataset: Sequence[tuple[TokenSequence, int]],
    config: ModelConfig,
) -> tuple[Parameters, list[float]]:
    """Mini-batch Adam over shuffled epochs; deterministic given config.seed.

    Returns the final parameters and the mean training loss per epoch.
    """
    if not dataset:
        raise InvalidInputError("dataset is empty")
    labels = np.asarray([label for _, label in dataset], dtype=np.int64)
    if len(set(labels.tolist())) < 2:
        warnings.warn("training dataset contains a single class", stacklevel=2)

    params = init_params(config, config.seed)
    if config.epochs == 0:
        return params, []

    tokens = _token_matrix(dataset, config)
    rng = np.random.default_rng([config.seed, 1])
    optimizer = _Adam(params)
    history: list[float] = []
    n = len(dataset)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            batch_tokens = tokens[batch_idx]
            batch_labels = labels[batch_idx]
            probs, cache = _forward_batch(params, batch_tokens, train=True, rng=rng)
            picked = np.clip(probs[np.arange(len(batch_idx)), batch_labels], PROB_FLOOR, None)
            loss_sum += float(-np.log(picked).sum())
            grads = _backward_batch(params, cache, batch_labels)
            scale = np.asarray(1.0 / len(batch_idx), dtype=params.dtype)
            for _, g in grads.named_arrays():
                g *= scale
            optimizer.step(params, grads)
        history.append(loss_sum / n)
    return params, history


def predict(params: Parameters, tokens: TokenSequence | Sequence[int]) -> float:
    """Anomaly probability in eval mode (no dropout, fully deterministic)."""
    probs, _ = forward(params, tokens, mode="eval")
    return float(probs[1])


def predict_many(
    params: Parameters,
    sequences: Iterable[TokenSequence],
    batch_size: int = 256,
) -> np.ndarray:
    """Batched eval-mode anomaly probabilities (for offline evaluation)."""
    seqs = [(s, 0) for s in sequences]
    out = np.empty(len(seqs), dtype=np.float64)
    for start in range(0, len(seqs), batch_size):
        chunk = seqs[start : start + batch_size]
        matrix = _token_matrix(chunk, params.config)
        probs, _ = _forward_batch(params, matrix, train=False, rng=None)
        out[start : start + len(chunk)] = probs[:, 1]
    return out


# ---------------------------------------------------------------------------
# Serialization
#
# Little-endian throughout. Layout:
#   magic "RQSM" | version u16
#   vocab:  merge_count u32, then per merge: left u32, right u32
#   config: vocab_size u32, embed_dim u32, seq_len u32, filters u32,
#           n_widths u8, widths u8 each, dropout f32, pad_id i64 (-1 = none),
#           classes u8
#   params: raw float32 arrays, C order, in named_arrays() order
# ---------------------------------------------------------------------------

MODEL_MAGIC = b"RQSM"
MODEL_VERSION = 1


def serialized_size(config: ModelConfig, merge_count: int) -> int:
    """Exact byte length serialize_model() will produce for this shape."""
    header = 4 + 2
    vocab = 4 + 8 * merge_count
    cfg = 4 * 4 + 1 + len(config.kernel_widths) + 4 + 8 + 1
    n_floats = config.vocab_size * config.embed_dim
    for k in config.kernel_widths:
        n_floats += config.filters_per_width * k * config.embed_dim + config.filters_per_width
    n_floats += config.classes * config.total_filters + config.classes
    return header + vocab + cfg + 4 * n_floats


def serialize_model(vocab: Vocabulary, params: Parameters) -> bytes:
    """Pack vocabulary, config, and float32 parameters into one byte string."""
    cfg = params.config
    out = bytearray()
    out += MODEL_MAGIC
    out += struct.pack("<H", MODEL_VERSION)
    out += struct.pack("<I", len(vocab.merges))
    for rule in vocab.merges:
        out += struct.pack("<II", rule.left, rule.right)
    out += struct.pack(
        "<IIII", cfg.vocab_size, cfg.embed_dim, cfg.seq_len, cfg.filters_per_width
    )
    out += struct.pack("<B", len(cfg.kernel_widths))
    out += bytes(cfg.kernel_widths)
    out += struct.pack("<f", cfg.dropout_p)
    out += struct.pack("<q", -1 if cfg.pad_id is None else cfg.pad_id)
    out += struct.pack("<B", cfg.classes)
    for _, arr in params.named_arrays():
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, section: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(f"model bytes truncated in {section} section")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, section: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), section))


def deserialize_model(data: bytes) -> tuple[Vocabulary, Parameters]:
    """Inverse of serialize_model; round trip is bit-exact for float32 models."""
    r = _Reader(data)
    if r.take(4, "header") != MODEL_MAGIC:
        raise ModelFormatError("bad magic in header section")
    (version,) = r.unpack("<H", "header")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version} in header section")

    (merge_count,) = r.unpack("<I", "vocab")
    merges = []
    for rank in range(merge_count):
        left, right = r.unpack("<II", "vocab")
        merges.append(MergeRule(left=left, right=right, rank=rank))
    try:
        vocab = Vocabulary(merges=tuple(merges))
    except InvalidInputError as exc:
        raise ModelFormatError(f"invalid merge table in vocab section: {exc}") from None

    vocab_size, embed_dim, seq_len, filters = r.unpack("<IIII", "config")
    (n_widths,) = r.unpack("<B", "config")
    widths = tuple(r.take(n_widths, "config"))
    (dropout_p,) = r.unpack("<f", "config")
    (pad_id,) = r.unpack("<q", "config")
    (classes,) = r.unpack("<B", "config")
    try:
        cfg = ModelConfig(
            vocab_size=vocab_size,
            embed_dim=embed_dim,
            seq_len=seq_len,
            kernel_widths=widths,
            filters_per_width=filters,
            dropout_p=round(float(dropout_p), 6),
            classes=classes,
            pad_id=None if pad_id == -1 else int(pad_id),
        )
    except InvalidConfigError as exc:
        raise ModelFormatError(f"invalid config section: {exc}") from None

    def read_array(shape: tuple[int, ...]) -> np.ndarray:
        n = int(np.prod(shape))
        raw = r.take(4 * n, "params")
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

    embedding = read_array((cfg.vocab_size, cfg.embed_dim))
    conv_w = []
    conv_b = []
    for k in cfg.kernel_widths:  # interleaved W then b, matching named_arrays()
        conv_w.append(read_array((cfg.filters_per_width, k, cfg.embed_dim)))
        conv_b.append(read_array((cfg.filters_per_width,)))
    dense_w = read_array((cfg.classes, cfg.total_filters))
    dense_b = read_array((cfg.classes,))
    if r.pos != len(data):
        raise ModelFormatError(f"{len(data) - r.pos} trailing bytes after params section")
    params = Parameters(cfg, embedding, tuple(conv_w), tuple(conv_b), dense_w, dense_b)
    return vocab, params
