import itertools
import math
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gqa.text import (EOS, PAD, SOS, UNK, QAExample, RejectedExample, Vocabulary, best_span_score,
                      build_vocab, detokenize, encode_example, ids_to_tokens, lcs_length,
                      prepare_corpus, read_corpus, rouge_l, select_passage, tokenize)

tokens = st.lists(st.sampled_from("abcd"), max_size=8)


def brute_lcs(a, b):
    """Longest common subsequence by enumerating every subsequence of the shorter input."""
    if len(a) > len(b):
        a, b = b, a

    def is_subseq(s, t):
        it = iter(t)
        return all(x in it for x in s)

    for k in range(len(a), 0, -1):
        for idx in itertools.combinations(range(len(a)), k):
            if is_subseq([a[i] for i in idx], b):
                return k
    return 0


def brute_best_span(answer, passage, beta, window):
    best = 0.0
    k, n = len(answer), len(passage)
    lo, hi = (min(max(1, math.ceil(k / 2)), n), min(2 * k, n)) if window else (1, n)
    for i in range(n):
        for j in range(i + 1, n + 1):
            if not lo <= j - i <= hi:
                continue
            best = max(best, rouge_l(passage[i:j], answer, beta).f_score)
    return best


# -- tokenize ----------------------------------------------------------------------

def test_tokenize_examples():
    assert tokenize("The urethra, a tube.") == ["the", "urethra", ",", "a", "tube", "."]
    assert tokenize("1964") == ["1964"]
    assert tokenize("") == []


def test_tokenize_keeps_numbers_whole():
    assert tokenize("In 1998 it cost 3.50 or 1,000 units") == [
        "in", "1998", "it", "cost", "3.50", "or", "1,000", "units"]


def test_detokenize_attaches_punctuation():
    assert detokenize(["is", "a", "tube", ",", "yes", "."]) == "is a tube, yes."


# -- vocabulary --------------------------------------------------------------------

def test_build_vocab_frequency_order():
    v = build_vocab([["a", "a", "b"]], max_size=5)
    assert v.words[4] == "a" and "b" not in v and len(v) == 5


def test_build_vocab_tie_is_lexicographic():
    v = build_vocab([["b", "a"]], max_size=10)
    assert v.words[4:] == ["a", "b"]


def test_reserved_ids():
    v = build_vocab([["x"]])
    assert [v.id(w) for w in ("<pad>", "<unk>", "<s>", "</s>")] == [PAD, UNK, SOS, EOS]
    assert v.id("never-seen") == UNK


def test_build_vocab_rejects_tiny_max_size():
    with pytest.raises(ValueError):
        build_vocab([["a"]], max_size=4)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.text("xyzw", min_size=1, max_size=3), max_size=10), max_size=6),
       st.integers(5, 12))
def test_vocab_is_dense_bijective_and_bounded(corpus, max_size):
    v = build_vocab(corpus, max_size)
    assert len(v) <= max_size
    assert sorted(v.index.values()) == list(range(len(v)))
    assert all(v.id(v.word(i)) == i for i in range(len(v)))


def test_vocab_file_round_trip(tmp_path):
    v = build_vocab([["b", "a", "a", "c"]])
    path = tmp_path / "vocab.txt"
    v.save(path)
    lines = path.read_text().splitlines()
    assert lines == ["a", "b", "c"]  # line k holds id k + 4
    assert Vocabulary.load(path).words == v.words


# -- LCS / ROUGE-L -----------------------------------------------------------------

def test_lcs_examples():
    assert lcs_length("a b c".split(), "a c d".split()) == 2
    x = list("abcab")
    assert lcs_length(x, x) == len(x)


@settings(max_examples=300, deadline=None)
@given(tokens, tokens)
def test_lcs_matches_enumeration(a, b):
    assert lcs_length(a, b) == brute_lcs(a, b)


def test_rouge_examples():
    same = rouge_l(["a", "b"], ["a", "b"])
    assert same.precision == same.recall == same.f_score == 1.0
    assert rouge_l(["a"], ["b"]).f_score == 0.0
    r = rouge_l("a b c".split(), "a c d".split(), beta=1.2)
    assert r.precision == pytest.approx(2 / 3) and r.recall == pytest.approx(2 / 3)
    assert r.f_score == pytest.approx(2 / 3)


def test_rouge_empty_candidate_and_reference():
    assert rouge_l([], ["a"]).f_score == 0.0
    with pytest.raises(ValueError):
        rouge_l(["a"], [])


@settings(max_examples=200, deadline=None)
@given(tokens.filter(bool), tokens.filter(bool), st.floats(0.1, 5))
def test_rouge_properties(a, b, beta):
    ab, ba = rouge_l(a, b, beta), rouge_l(b, a, beta)
    assert ab.precision == ba.recall
    assert 0 <= ab.f_score <= 1
    assert rouge_l(a, a, beta).f_score == pytest.approx(1.0)
    if ab.precision and ab.recall:
        b2 = beta * beta
        hm = (1 + b2) / (1 / ab.precision + b2 / ab.recall)
        assert ab.f_score == pytest.approx(hm)


# -- passage selection -------------------------------------------------------------

def test_select_exact_substring():
    passages = [["x", "y"], ["q", "r"], ["a", "the", "answer", "here", "b"]]
    assert select_passage(["the", "answer", "here"], passages) == (2, 1.0)


def test_select_rejects_disjoint_and_empty():
    with pytest.raises(RejectedExample):
        select_passage(["zz"], [["a", "b"], ["c"]])
    with pytest.raises(RejectedExample):
        select_passage(["a"], [[], []])


def test_select_tie_goes_to_lowest_index():
    assert select_passage(["a", "b"], [["x", "a", "b"], ["a", "b"]])[0] == 0


@settings(max_examples=150, deadline=None)
@given(tokens.filter(bool), st.lists(st.lists(st.sampled_from("abcd"), max_size=12), min_size=1,
                                     max_size=3))
def test_best_span_matches_exhaustive_search(answer, passages):
    for p in passages:
        assert best_span_score(answer, p, 1.2, window=False) == pytest.approx(
            brute_best_span(answer, p, 1.2, window=False))
        assert best_span_score(answer, p, 1.2, window=True) == pytest.approx(
            brute_best_span(answer, p, 1.2, window=True))


@settings(max_examples=100, deadline=None)
@given(tokens.filter(bool), st.lists(st.sampled_from("abcd"), max_size=12))
def test_window_keeps_optimum_at_beta_one(answer, passage):
    full = best_span_score(answer, passage, 1.0, window=False)
    if full >= 0.7:
        assert best_span_score(answer, passage, 1.0, window=True) == pytest.approx(full)


@settings(max_examples=100, deadline=None)
@given(tokens.filter(bool), st.lists(st.lists(st.sampled_from("abcd"), min_size=1, max_size=10),
                                     min_size=1, max_size=3),
       st.lists(st.sampled_from("xyz"), min_size=1, max_size=6))
def test_select_invariant_to_appending_worse_passage(answer, passages, worse):
    try:
        before = select_passage(answer, passages, threshold=0.0)
    except RejectedExample:
        return
    if best_span_score(answer, worse) < before[1]:
        assert select_passage(answer, passages + [worse], threshold=0.0) == before


# -- encoding ----------------------------------------------------------------------

def _vocab():
    return Vocabulary(["what", "is", "a", "tube", "the", "urethra"])


def test_encode_all_in_vocab():
    ex = encode_example(["what", "is"], ["the", "urethra", "is", "a", "tube"], ["a", "tube"],
                        _vocab())
    assert ex.extended_ids == ex.passage_ids
    assert ex.answer_ids[-1] == EOS and ex.oov_words == []


def test_encode_oov_gets_extended_id():
    v = _vocab()
    ex = encode_example(["what"], ["the", "urethra", "is", "zyzzy", "a", "zyzzy"],
                        ["zyzzy", "blah"], v)
    assert ex.passage_ids[3] == UNK
    assert ex.extended_ids[3] == len(v) == ex.extended_ids[5]
    assert ex.answer_ids == [len(v), UNK, EOS]  # copied OOV is a target; unseen OOV is UNK
    assert all(e >= len(v) for e, tok in zip(ex.extended_ids, ex.passage_tokens)
               if tok not in v)


def test_encode_truncates_and_rejects():
    v = _vocab()
    ex = encode_example(["what"], ["a"] * 300, ["tube"] * 80, v)
    assert len(ex.passage_ids) == 200 and len(ex.answer_ids) == 51
    with pytest.raises(RejectedExample):
        encode_example([], ["a"], ["a"], v)
    with pytest.raises(RejectedExample):
        encode_example(["what"], [], ["a"], v)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from(["the", "is", "a", "tube", "foo", "bar"]), min_size=1,
                max_size=15))
def test_ids_round_trip_to_tokens(passage):
    v = _vocab()
    ex = encode_example(["what"], passage, passage, v)
    assert ids_to_tokens(ex.extended_ids, v, ex.oov_words) == passage
    back = [v.word(i) for i in ex.passage_ids]
    assert [b for b, t in zip(back, passage) if t in v] == [t for t in passage if t in v]
    assert ids_to_tokens(ex.answer_ids, v, ex.oov_words) == passage
    assert QAExample.from_json(ex.to_json()) == ex


# -- corpus ------------------------------------------------------------------------

def test_prepare_corpus_counts():
    recs = [{"query": "what is k1", "passages": ["k2 is b .", "k1 is a c ."], "answer": "a c"},
            {"query": "what is k3", "passages": ["nothing here"], "answer": "a c"}]
    examples, vocab, stats = prepare_corpus(recs)
    assert (stats.kept, stats.rejected) == (1, 1)
    assert examples[0].passage_tokens == ["k1", "is", "a", "c", "."]


def test_read_corpus_skips_malformed_lines(tmp_path):
    path = tmp_path / "c.jsonl"
    good = {"query": "q", "passages": ["p"], "answer": "p"}
    path.write_text("\n".join([json.dumps(good), "{not json", json.dumps({"query": "q"}),
                               json.dumps(dict(good, answer=["p", "x"]))]) + "\n")
    warnings = []
    recs = list(read_corpus(path, warn=lambda n, m: warnings.append(n)))
    assert [n for n, _ in recs] == [1, 4]
    assert recs[1][1]["answer"] == "p"
    assert warnings == [2, 3]
