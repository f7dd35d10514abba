"""Byte-level byte pair encoding (BBPE).

Token ids 0..255 are the raw bytes, id 256 is PAD, and ids 257 and up are
merged tokens in the order their merge rules were learned. Because the base
alphabet is every byte value, any byte string encodes without unknown tokens
and decodes back exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, ParseError

PAD_ID = 256
BASE_VOCAB_SIZE = 257  # 256 byte tokens + PAD
DEFAULT_VOCAB_SIZE = 5000

VOCAB_FORMAT_HEADER = "BBPE v1"


@dataclass(frozen=True)
class MergeRule:
    """One learned merge: adjacent pair (left, right) becomes token `result`."""

    left: int
    right: int
    rank: int

    @property
    def result(self) -> int:
        return BASE_VOCAB_SIZE + self.rank


@dataclass(frozen=True)
class Vocabulary:
    """Immutable merge table; the tokenizer's entire learned state."""

    merges: tuple[MergeRule, ...]
    # pair -> rank, rebuilt on construction; not part of equality
    _ranks: dict[tuple[int, int], int] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self):
        ranks: dict[tuple[int, int], int] = {}
        for i, rule in enumerate(self.merges):
            if rule.rank != i:
                raise InvalidInputError(f"merge rank {rule.rank} at index {i} is out of order")
            if rule.left >= rule.result or rule.right >= rule.result:
                raise InvalidInputError(
                    f"merge {rule.rank} combines tokens ({rule.left}, {rule.right}) "
                    f"not yet defined at that point"
                )
            if rule.left == PAD_ID or rule.right == PAD_ID:
                raise InvalidInputError(f"merge {rule.rank} uses the reserved PAD token")
            ranks[(rule.left, rule.right)] = i
        object.__setattr__(self, "_ranks", ranks)

    @property
    def size(self) -> int:
        return BASE_VOCAB_SIZE + len(self.merges)

    def token_bytes(self, token_id: int) -> bytes:
        """Expand one token to the byte string it stands for (PAD is empty)."""
        if token_id < 0 or token_id >= self.size:
            raise InvalidInputError(f"token id {token_id} outside vocabulary of size {self.size}")
        if token_id < 256:
            return bytes([token_id])
        if token_id == PAD_ID:
            return b""
        out = bytearray()
        stack = [token_id]
        while stack:
            t = stack.pop()
            if t < 256:
                out.append(t)
            elif t == PAD_ID:
                continue
            else:
                rule = self.merges[t - BASE_VOCAB_SIZE]
                stack.append(rule.right)
                stack.append(rule.left)
        return bytes(out)


@dataclass(frozen=True)
class TokenSequence:
    """Encoded output; `original_length` is the token count before truncation."""

    tokens: tuple[int, ...]
    original_length: int

    def __len__(self) -> int:
        return len(self.tokens)


def _merge_once(doc: list[int], left: int, right: int, result: int) -> list[int]:
    """Replace occurrences of (left, right) leftmost-first in a single pass."""
    out: list[int] = []
    i = 0
    n = len(doc)
    while i < n:
        if i + 1 < n and doc[i] == left and doc[i + 1] == right:
            out.append(result)
            i += 2
        else:
            out.append(doc[i])
            i += 1
    return out


_DOC_BOUNDARY = -1


def train_bbpe(corpus: list[bytes], target_vocab_size: int = DEFAULT_VOCAB_SIZE) -> Vocabulary:
    """Learn merge rules by greedy pair frequency over the corpus.

    At each step the adjacent token pair with the highest total count across
    all documents is merged into a new token; ties break toward the smaller
    (left, right) id pair. Learning stops early once no pair occurs at least
    twice, so the returned vocabulary may be smaller than requested.

    The corpus is held as one int64 array with a boundary sentinel between
    documents, and pair counts are recomputed from scratch after every merge;
    the array form just makes the re-scan cheap on megabyte corpora.
    """
    if target_vocab_size < BASE_VOCAB_SIZE:
        raise InvalidConfigError(
            f"target_vocab_size {target_vocab_size} is below the {BASE_VOCAB_SIZE}-token base"
        )
    if not corpus:
        raise InvalidInputError("corpus is empty")

    parts: list[np.ndarray] = []
    for doc in corpus:
        parts.append(np.frombuffer(doc, dtype=np.uint8).astype(np.int64))
        parts.append(np.array([_DOC_BOUNDARY], dtype=np.int64))
    arr = np.concatenate(parts[:-1]) if len(parts) > 1 else parts[0]

    budget = target_vocab_size - BASE_VOCAB_SIZE
    merges: list[MergeRule] = []
    for rank in range(budget):
        if arr.size < 2:
            break
        a, b = arr[:-1], arr[1:]
        valid = (a != _DOC_BOUNDARY) & (b != _DOC_BOUNDARY)
        # id pairs packed into one key; numeric order == (left, right) lex order
        keys = (a[valid] << 32) | b[valid]
        if keys.size == 0:
            break
        uniq, counts = np.unique(keys, return_counts=True)
        best_count = int(counts.max())
        if best_count < 2:
            break
        best_key = int(uniq[counts == best_count].min())
        left, right = best_key >> 32, best_key & 0xFFFFFFFF
        rule = MergeRule(left=left, right=right, rank=rank)

        matches = np.flatnonzero((a == left) & (b == right))
        selected: list[int] = []
        last = -2
        for p in matches.tolist():  # drop overlapping matches, leftmost wins
            if p > last + 1:
                selected.append(p)
                last = p
        sel = np.asarray(selected, dtype=np.int64)
        arr[sel] = rule.result
        keep = np.ones(arr.size, dtype=bool)
        keep[sel + 1] = False
        arr = arr[keep]
        merges.append(rule)
    return Vocabulary(merges=tuple(merges))


def encode(vocab: Vocabulary, data: bytes, max_len: int | None = None) -> TokenSequence:
    """Encode a byte string into token ids.

    Merges apply lowest rank first, leftmost occurrence first, until none
    applies. Because a rule's result token is always newer than both of its
    inputs, applying one rule cannot enable a lower-ranked rule, so all
    occurrences of the current best rule are folded in one left-to-right pass.
    """
    ids = list(data)
    ranks = vocab._ranks
    if ranks:
        while len(ids) >= 2:
            best_rank: int | None = None
            best_pair: tuple[int, int] | None = None
            for pair in zip(ids, ids[1:]):
                r = ranks.get(pair)
                if r is not None and (best_rank is None or r < best_rank):
                    best_rank = r
                    best_pair = pair
            if best_pair is None:
                break
            rule = vocab.merges[best_rank]
            ids = _merge_once(ids, rule.left, rule.right, rule.result)
    original_length = len(ids)
    if max_len is not None and original_length > max_len:
        ids = ids[:max_len]  # keep the prefix: method/URL carry the most signal
    return TokenSequence(tokens=tuple(ids), original_length=original_length)


def pad(seq: TokenSequence, length: int) -> TokenSequence:
    """Pad with PAD up to `length` (suffix only) or truncate down to it."""
    toks = seq.tokens
    if len(toks) > length:
        toks = toks[:length]
    elif len(toks) < length:
        toks = toks + (PAD_ID,) * (length - len(toks))
    return TokenSequence(tokens=toks, original_length=seq.original_length)


def decode(vocab: Vocabulary, seq: TokenSequence | Iterable[int]) -> bytes:
    """Expand token ids back to bytes; PAD expands to nothing."""
    tokens = seq.tokens if isinstance(seq, TokenSequence) else tuple(seq)
    out = bytearray()
    for t in tokens:
        if t < 0 or t >= vocab.size:
            raise InvalidInputError(f"token id {t} outside vocabulary of size {vocab.size}")
        out += vocab.token_bytes(t)
    return bytes(out)


def save_vocab(vocab: Vocabulary, sink: IO[str]) -> None:
    """Write the versioned text format: header line, then one merge per line."""
    sink.write(f"{VOCAB_FORMAT_HEADER} {vocab.size}\n")
    for rule in vocab.merges:
        sink.write(f"{rule.rank} {rule.left} {rule.right}\n")


def load_vocab(source: IO[str]) -> Vocabulary:
    """Parse the text format written by :func:`save_vocab`."""
    header = source.readline()
    parts = header.split()
    if len(parts) != 3 or " ".join(parts[:2]) != VOCAB_FORMAT_HEADER:
        raise ParseError(f"bad vocabulary header {header!r}", position=1)
    try:
        declared_size = int(parts[2])
    except ValueError:
        raise ParseError(f"bad vocabulary size {parts[2]!r}", position=1) from None

    merges: list[MergeRule] = []
    for lineno, line in enumerate(source, start=2):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ParseError(f"expected 'rank left right', got {line.strip()!r}", position=lineno)
        try:
            rank, left, right = (int(f) for f in fields)
        except ValueError:
            raise ParseError(f"non-integer merge field in {line.strip()!r}", position=lineno) from None
        if rank != len(merges):
            raise ParseError(f"rank {rank} out of order (expected {len(merges)})", position=lineno)
        merges.append(MergeRule(left=left, right=right, rank=rank))
    if declared_size != BASE_VOCAB_SIZE + len(merges):
        raise ParseError(
            f"header declares size {declared_size} but file holds {len(merges)} merges",
            position=1,
        )
    try:
        return Vocabulary(merges=tuple(merges))
    except InvalidInputError as exc:
        raise ParseError(str(exc)) from None
