"""Synthetic question-answering corpora in the JSON-lines record shape.

Passages are lists of records ``<key> is <value> ... .``; a question names one
key and its answer is that record's value span, so every answer is a
contiguous span of the passage.
"""

from __future__ import annotations

import string

import numpy as np


def _fresh_word(rng, taken):
    while True:
        w = "".join(rng.choice(list(string.ascii_lowercase), size=rng.integers(5, 9)))
        if w not in taken:
            taken.add(w)
            return w


def lookup_corpus(n, seed=0, n_keys=100, n_values=300, records=(3, 5), value_len=(1, 3),
                  oov_values=False, distractor=True, taken=None):
    """Key/value lookup questions.

    With ``oov_values`` every value word is a freshly drawn random string, so
    answers consist of words that occur nowhere else in the corpus.  ``taken``
    is the set of random words already used (shared between splits to keep
    held-out words unseen).
    """
    rng = np.random.default_rng(seed)
    taken = set() if taken is None else taken
    keys = [f"k{i}" for i in range(n_keys)]
    values = [f"v{i}" for i in range(n_values)]

    def value():
        return _fresh_word(rng, taken) if oov_values else values[rng.integers(n_values)]

    def passage(chosen):
        recs = {}
        for k in chosen:
            recs[k] = [value() for _ in range(rng.integers(value_len[0], value_len[1] + 1))]
        return recs

    out = []
    for _ in range(n):
        count = int(rng.integers(records[0], records[1] + 1))
        chosen = [keys[i] for i in rng.choice(n_keys, size=count, replace=False)]
        recs = passage(chosen)
        key = chosen[rng.integers(count)]
        answer = recs[key]
        text = " ".join(f"{k} is {' '.join(v)} ." for k, v in recs.items())
        passages = [text]
        if distractor:
            others = [k for k in keys if k != key]
            d_keys = [others[i] for i in rng.choice(len(others), size=count, replace=False)]
            d_recs = passage(d_keys)
            for k in d_keys:  # keep the distractor free of answer words
                d_recs[k] = [w for w in d_recs[k] if w not in answer] or ["unknown"]
            passages.insert(int(rng.integers(2)), " ".join(
                f"{k} is {' '.join(v)} ." for k, v in d_recs.items()))
        out.append({"query": f"what is {key} ?", "passages": passages,
                    "answer": " ".join(answer)})
    return out


def long_span_corpus(n, seed=0, n_keys=20, n_values=60, records=2, value_len=(8, 12),
                     distinct=True):
    """Long answers over a small vocabulary: a repetition-prone copy task.

    With ``distinct`` the values inside one passage are all different, so gold
    answers never repeat a trigram.  Without it value words are drawn with
    replacement, so a word can recur inside an answer; a decoder that tracks
    its position only through the last copied word then tends to jump back to
    the earlier occurrence and loop.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        chosen = [f"k{i}" for i in rng.choice(n_keys, size=records, replace=False)]
        lens = rng.integers(value_len[0], value_len[1] + 1, size=records)
        words = [f"v{i}" for i in rng.choice(n_values, size=int(lens.sum()), replace=not distinct)]
        recs, pos = {}, 0
        for k, length in zip(chosen, lens):
            recs[k] = words[pos:pos + length]
            pos += length
        key = chosen[rng.integers(records)]
        text = " ".join(f"{k} is {' '.join(v)} ." for k, v in recs.items())
        out.append({"query": f"what is {key} ?", "passages": [text],
                    "answer": " ".join(recs[key])})
    return out
