"""Deliberately naive BPE trainer/encoder used as an independent oracle.

Everything here re-scans from scratch with plain dict counting and explicit
index loops; no code is shared with the production tokenizer.
"""

from collections import Counter

BASE = 257  # 256 bytes + PAD


def count_pairs(docs):
    counts = Counter()
    for doc in docs:
        for i in range(len(doc) - 1):
            counts[(doc[i], doc[i + 1])] += 1
    return counts


def apply_merge(doc, pair, new_id):
    out = []
    i = 0
    while i < len(doc):
        if i + 1 < len(doc) and (doc[i], doc[i + 1]) == pair:
            out.append(new_id)
            i += 2
        else:
            out.append(doc[i])
            i += 1
    return out


def train(corpus, target_vocab_size):
    """Returns the merge list as [(left, right), ...] in learned order."""
    docs = [list(doc) for doc in corpus]
    merges = []
    for step in range(target_vocab_size - BASE):
        counts = count_pairs(docs)
        if not counts:
            break
        best = max(counts.values())
        if best < 2:
            break
        pair = min(p for p, c in counts.items() if c == best)
        new_id = BASE + step
        docs = [apply_merge(doc, pair, new_id) for doc in docs]
        merges.append(pair)
    return merges


def encode(merges, data):
    """Apply learned merges lowest-rank-first until none applies."""
    ranks = {pair: i for i, pair in enumerate(merges)}
    doc = list(data)
    while True:
        candidates = [
            (ranks[(doc[i], doc[i + 1])], (doc[i], doc[i + 1]))
            for i in range(len(doc) - 1)
            if (doc[i], doc[i + 1]) in ranks
        ]
        if not candidates:
            return doc
        rank, pair = min(candidates)
        # one occurrence at a time, leftmost first
        for i in range(len(doc) - 1):
            if (doc[i], doc[i + 1]) == pair:
                doc = doc[:i] + [BASE + rank] + doc[i + 2 :]
                break
