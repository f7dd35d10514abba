import io
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reqsentry.errors import InvalidConfigError, InvalidInputError, ParseError
from reqsentry.tokenizer import (
    PAD_ID,
    TokenSequence,
    Vocabulary,
    decode,
    encode,
    load_vocab,
    pad,
    save_vocab,
    train_bbpe,
)

from .oracles import bpe_oracle


def test_wikipedia_style_corpus_merges_and_encoding():
    corpus = [b"aaabdaaabac"]
    vocab = train_bbpe(corpus, target_vocab_size=260)
    assert len(vocab.merges) == 3
    # oracle agreement pins the exact merge order (incl. tie-breaks)
    expected = bpe_oracle.train(corpus, 260)
    assert [(m.left, m.right) for m in vocab.merges] == expected
    seq = encode(vocab, b"aaabdaaabac")
    assert len(seq) == 5
    assert decode(vocab, seq) == b"aaabdaaabac"


def test_encode_of_learned_prefix_collapses_to_one_token():
    vocab = train_bbpe([b"aaabdaaabac"], target_vocab_size=260)
    seq = encode(vocab, b"aaab")
    assert len(seq) == 1
    assert decode(vocab, seq) == b"aaab"


def test_zero_merge_budget():
    vocab = train_bbpe([b"ab"], target_vocab_size=257)
    assert vocab.size == 257
    assert vocab.merges == ()


def test_url_escape_sequence_becomes_single_token():
    corpus = [b"id=%25name&x=%25other %25 %25"]
    vocab = train_bbpe(corpus, target_vocab_size=257 + 8)
    token_strings = {vocab.token_bytes(t) for t in range(257, vocab.size)}
    assert b"%25" in token_strings


def test_bytes_pass_through_with_empty_vocab():
    vocab = Vocabulary(merges=())
    assert encode(vocab, b"hi").tokens == (104, 105)
    assert encode(vocab, b"").tokens == ()


def test_decode_trivial_and_pad():
    vocab = Vocabulary(merges=())
    assert decode(vocab, [104, 105]) == b"hi"
    assert decode(vocab, [PAD_ID, PAD_ID]) == b""


def test_decode_rejects_out_of_range_token():
    vocab = Vocabulary(merges=())
    with pytest.raises(InvalidInputError):
        decode(vocab, [257])


def test_train_input_validation():
    with pytest.raises(InvalidConfigError):
        train_bbpe([b"x"], target_vocab_size=256)
    with pytest.raises(InvalidInputError):
        train_bbpe([], target_vocab_size=300)


def test_truncation_records_original_length():
    vocab = Vocabulary(merges=())
    seq = encode(vocab, b"abcdef", max_len=4)
    assert seq.tokens == (97, 98, 99, 100)
    assert seq.original_length == 6


def test_pad_appends_suffix_only():
    vocab = Vocabulary(merges=())
    seq = pad(encode(vocab, b"ab"), 5)
    assert seq.tokens == (97, 98, PAD_ID, PAD_ID, PAD_ID)
    assert decode(vocab, seq) == b"ab"


@given(st.binary(max_size=256))
@settings(max_examples=200)
def test_round_trip_property(data):
    vocab = _SHARED_VOCAB
    seq = encode(vocab, data)
    assert decode(vocab, seq) == data
    assert len(seq) <= max(len(data), 0) or data == b""


def _build_shared_vocab():
    rng = random.Random(7)
    corpus = [bytes(rng.randrange(256) for _ in range(rng.randrange(1, 80))) for _ in range(40)]
    corpus += [b"GET /index.html HTTP/1.1", b"%25%25%25", b"Mozilla/5.0 Mozilla/5.0"]
    return train_bbpe(corpus, target_vocab_size=300)


_SHARED_VOCAB = _build_shared_vocab()


def test_compression_monotonicity_and_determinism():
    rng = random.Random(11)
    corpus = [bytes(rng.randrange(97, 103) for _ in range(60)) for _ in range(10)]
    v1 = train_bbpe(corpus, 280)
    v2 = train_bbpe(corpus, 280)
    assert v1.merges == v2.merges
    for _ in range(50):
        data = bytes(rng.randrange(97, 103) for _ in range(rng.randrange(0, 120)))
        assert len(encode(v1, data)) <= max(len(data), 0) or data == b""


def test_train_matches_bruteforce_oracle_on_random_corpora():
    rng = random.Random(1234)
    for _ in range(25):
        n_docs = rng.randrange(1, 5)
        corpus = [
            bytes(rng.randrange(97, 97 + rng.randrange(2, 8)) for _ in range(rng.randrange(0, 120)))
            for _ in range(n_docs)
        ]
        if not any(corpus):
            corpus.append(b"abab")
        budget = 257 + rng.randrange(0, 40)
        vocab = train_bbpe(corpus, budget)
        expected = bpe_oracle.train(corpus, budget)
        assert [(m.left, m.right) for m in vocab.merges] == expected
        # and encoding agrees with the one-occurrence-at-a-time oracle
        for doc in corpus:
            assert list(encode(vocab, doc).tokens) == bpe_oracle.encode(expected, doc)


def test_vocab_file_round_trip():
    vocab = _SHARED_VOCAB
    buf = io.StringIO()
    save_vocab(vocab, buf)
    loaded = load_vocab(io.StringIO(buf.getvalue()))
    assert loaded == vocab
    assert loaded.size == vocab.size


def test_empty_vocab_file_round_trip():
    buf = io.StringIO()
    save_vocab(Vocabulary(merges=()), buf)
    loaded = load_vocab(io.StringIO(buf.getvalue()))
    assert loaded.size == 257


def test_load_rejects_noncontiguous_ranks():
    buf = io.StringIO()
    save_vocab(_SHARED_VOCAB, buf)
    lines = buf.getvalue().splitlines()
    corrupted = "\n".join([lines[0], lines[2]] + lines[3:]) + "\n"  # drop rank 0
    with pytest.raises(ParseError):
        load_vocab(io.StringIO(corrupted))


def test_load_rejects_bad_header_and_bad_lines():
    with pytest.raises(ParseError):
        load_vocab(io.StringIO("BBPE v2 257\n"))
    with pytest.raises(ParseError) as exc:
        load_vocab(io.StringIO("BBPE v1 258\n0 97\n"))
    assert exc.value.position == 2
    with pytest.raises(ParseError):
        load_vocab(io.StringIO("BBPE v1 999\n0 97 98\n"))


def test_no_unknown_token_exists():
    # every id in a trained vocabulary expands to concrete bytes; PAD to b""
    vocab = _SHARED_VOCAB
    for t in range(vocab.size):
        expansion = vocab.token_bytes(t)
        if t == PAD_ID:
            assert expansion == b""
        else:
            assert len(expansion) >= 1


def test_token_sequence_is_immutable_value():
    seq = TokenSequence(tokens=(1, 2), original_length=2)
    with pytest.raises(AttributeError):
        seq.tokens = (3,)
