"""Tokenization, vocabularies, ROUGE-L, passage selection and example encoding."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass, field

PAD, UNK, SOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<s>", "</s>")

MAX_PASSAGE_LEN = 200
MAX_ANSWER_LEN = 50
DEFAULT_BETA = 1.2
SELECTION_THRESHOLD = 0.7

_TOKEN_RE = re.compile(r"\d+(?:[.,]\d+)+|\w+|[^\w\s]")
_NO_SPACE_BEFORE = set(".,;:!?%)]}'\"")


class RejectedExample(ValueError):
    """An example was dropped during corpus construction."""


def tokenize(text):
    """Lowercase, split on whitespace and split punctuation into its own tokens.

    >>> tokenize("The urethra, a tube.")
    ['the', 'urethra', ',', 'a', 'tube', '.']
    """
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens):
    """Join with spaces, attaching punctuation to the preceding token."""
    out = []
    for tok in tokens:
        if out and tok in _NO_SPACE_BEFORE:
            out[-1] += tok
        else:
            out.append(tok)
    return " ".join(out)


class Vocabulary:
    """Word/id maps with PAD=0, UNK=1, SOS=2, EOS=3 reserved."""

    def __init__(self, words):
        self.words = list(RESERVED) + [w for w in words if w not in RESERVED]
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("duplicate words in vocabulary")

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.index

    def id(self, word):
        return self.index.get(word, UNK)

    def ids(self, tokens):
        return [self.index.get(t, UNK) for t in tokens]

    def word(self, idx):
        return self.words[idx]

    def save(self, path):
        """One word per line; line k (0-based) holds id k + 4."""
        with open(path, "w", encoding="utf-8") as fh:
            for w in self.words[len(RESERVED):]:
                fh.write(w + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])


def build_vocab(corpus, max_size=30000):
    """Keep the ``max_size - 4`` most frequent words; ties go to the lexicographically smaller."""
    if max_size <= len(RESERVED):
        raise ValueError(f"max_size must exceed {len(RESERVED)}, got {max_size}")
    counts = Counter(tok for seq in corpus for tok in seq if tok not in RESERVED)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary(w for w, _ in ranked[: max_size - len(RESERVED)])


# -- ROUGE-L -------------------------------------------------------------------

@dataclass(frozen=True)
class RougeL:
    precision: float
    recall: float
    f_score: float


def lcs_length(a, b):
    """Length of the longest common subsequence of two token sequences.

    Bit-parallel dynamic program: bit j of ``row`` is set while column j of the
    classic DP row has not yet gained a match, so each token of ``a`` costs a
    handful of integer operations regardless of ``len(b)``.
    """
    if not a or not b:
        return 0
    match = {}
    for j, y in enumerate(b):
        match[y] = match.get(y, 0) | (1 << j)
    full = (1 << len(b)) - 1
    row = full
    for x in a:
        u = row & match.get(x, 0)
        row = ((row + u) | (row - u)) & full
    return len(b) - row.bit_count()


def _f_score(p, r, beta):
    if p == 0 and r == 0:
        return 0.0
    b2 = beta * beta
    return (1 + b2) * p * r / (r + b2 * p)


def rouge_l(candidate, reference, beta=DEFAULT_BETA):
    if not reference:
        raise ValueError("rouge_l: reference must be non-empty")
    lcs = lcs_length(candidate, reference)
    p = lcs / len(candidate) if candidate else 0.0
    r = lcs / len(reference)
    return RougeL(p, r, _f_score(p, r, beta))


def best_span_score(answer, passage, beta=DEFAULT_BETA, window=True):
    """Highest ROUGE-L F of any contiguous span of ``passage`` against ``answer``.

    With ``window`` the span length is limited to [len(answer)/2, 2*len(answer)].
    """
    n, k = len(passage), len(answer)
    if n == 0 or k == 0:
        return 0.0
    if window:
        lo = min(max(1, math.ceil(k / 2)), n)
        hi = min(2 * k, n)
    else:
        lo, hi = 1, n
    best = 0.0
    for start in range(n - lo + 1):
        # row[j] = LCS(passage[start:start+L], answer[:j]) as L grows
        row = [0] * (k + 1)
        for length in range(1, min(hi, n - start) + 1):
            tok = passage[start + length - 1]
            new = [0]
            for j in range(k):
                new.append(row[j] + 1 if tok == answer[j] else max(row[j + 1], new[j]))
            row = new
            if length >= lo and row[k]:
                f = _f_score(row[k] / length, row[k] / k, beta)
                if f > best:
                    best = f
    return best


def select_passage(answer, passages, beta=DEFAULT_BETA, threshold=SELECTION_THRESHOLD,
                   window=True):
    """Return ``(index, score)`` of the passage holding the best-matching answer span.

    Raises :class:`RejectedExample` when no passage reaches ``threshold``.
    Ties go to the lowest index.
    """
    if not passages:
        raise ValueError("select_passage needs at least one passage")
    if all(len(p) == 0 for p in passages):
        raise RejectedExample("all passages are empty")
    best_i, best = 0, -1.0
    for i, passage in enumerate(passages):
        score = best_span_score(answer, passage, beta, window)
        if score > best:
            best_i, best = i, score
    if best < threshold:
        raise RejectedExample(f"best passage ROUGE-L {best:.3f} < {threshold}")
    return best_i, best


# -- example encoding ----------------------------------------------------------

@dataclass
class QAExample:
    """A tokenized (question, passage, answer) triple.

    ``answer_ids`` are extended ids ending in EOS: a passage word missing from
    the vocabulary has id ``vocab_size + k`` where ``k`` indexes ``oov_words``.
    """

    question_tokens: list
    passage_tokens: list
    answer_tokens: list
    question_ids: list
    passage_ids: list
    extended_ids: list
    answer_ids: list
    oov_words: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_json(cls, line):
        return cls(**json.loads(line))


def encode_example(question, passage, answer, vocab, max_passage_len=MAX_PASSAGE_LEN,
                   max_answer_len=MAX_ANSWER_LEN):
    question = list(question)
    passage = list(passage)[:max_passage_len]
    answer = list(answer)[:max_answer_len]
    if not question or not passage:
        raise RejectedExample("empty question or passage")
    v = len(vocab)
    oov = {}
    extended = []
    for tok in passage:
        if tok in vocab:
            extended.append(vocab.id(tok))
        else:
            extended.append(v + oov.setdefault(tok, len(oov)))
    answer_ids = []
    for tok in answer:
        if tok in vocab:
            answer_ids.append(vocab.id(tok))
        elif tok in oov:
            answer_ids.append(v + oov[tok])
        else:
            answer_ids.append(UNK)
    answer_ids.append(EOS)
    return QAExample(
        question_tokens=question,
        passage_tokens=passage,
        answer_tokens=answer,
        question_ids=vocab.ids(question),
        passage_ids=vocab.ids(passage),
        extended_ids=extended,
        answer_ids=answer_ids,
        oov_words=list(oov),
    )


def ids_to_tokens(ids, vocab, oov_words=()):
    """Map (extended) ids back to words, stopping at EOS."""
    out = []
    v = len(vocab)
    for i in ids:
        if i == EOS:
            break
        out.append(vocab.word(i) if i < v else oov_words[i - v])
    return out


# -- corpus files --------------------------------------------------------------

def read_corpus(path, warn=None):
    """Yield ``(line_number, record)`` for each well-formed JSON-lines record.

    Malformed lines are reported through ``warn(line_number, message)`` and skipped.
    """
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                query, passages, answer = rec["query"], rec["passages"], rec["answer"]
                if isinstance(answer, list):  # multi-answer: first one
                    answer = answer[0]
                if not (isinstance(query, str) and isinstance(answer, str)
                        and isinstance(passages, list)
                        and all(isinstance(p, str) for p in passages)):
                    raise TypeError("fields have wrong types")
            except (ValueError, KeyError, TypeError, IndexError) as err:
                if warn is not None:
                    warn(lineno, str(err))
                continue
            yield lineno, {"query": query, "passages": passages, "answer": answer}


def write_dataset(path, examples):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(ex.to_json() + "\n")


def read_dataset(path):
    with open(path, encoding="utf-8") as fh:
        return [QAExample.from_json(line) for line in fh if line.strip()]


def load_word_vectors(path, vocab, table):
    """Overwrite rows of ``table`` (an ndarray) with vectors from a GloVe-style text file.

    Returns the number of vocabulary words found.
    """
    found = 0
    dim = table.shape[1]
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip().split(" ")
            if len(parts) != dim + 1 or parts[0] not in vocab:
                continue
            table[vocab.id(parts[0])] = [float(x) for x in parts[1:]]
            found += 1
    return found


@dataclass
class PrepareStats:
    kept: int = 0
    rejected: int = 0
    malformed: int = 0
    reasons: dict = field(default_factory=dict)


def prepare_corpus(records, vocab=None, max_vocab=30000, max_passage_len=MAX_PASSAGE_LEN,
                   max_answer_len=MAX_ANSWER_LEN, beta=DEFAULT_BETA,
                   threshold=SELECTION_THRESHOLD):
    """tokenize -> select_passage -> build_vocab -> encode_example.

    ``records`` are dicts with ``query``, ``passages`` and ``answer``.  When
    ``vocab`` is None it is built from the kept examples.  Returns
    ``(examples, vocab, stats)`` with examples in input order.
    """
    stats = PrepareStats()
    kept = []
    for rec in records:
        q = tokenize(rec["query"])
        a = tokenize(rec["answer"])
        passages = [tokenize(p) for p in rec["passages"]]
        try:
            if not passages:
                raise RejectedExample("no passages")
            idx, _ = select_passage(a, passages, beta, threshold)
            if not q:
                raise RejectedExample("empty question")
        except RejectedExample as err:
            stats.rejected += 1
            reason = str(err).split(" ")[0]
            stats.reasons[reason] = stats.reasons.get(reason, 0) + 1
            continue
        kept.append((q, passages[idx][:max_passage_len], a[:max_answer_len]))
    if vocab is None:
        vocab = build_vocab((seq for triple in kept for seq in triple), max_vocab)
    examples = []
    for q, p, a in kept:
        try:
            examples.append(encode_example(q, p, a, vocab, max_passage_len, max_answer_len))
        except RejectedExample:
            stats.rejected += 1
            continue
    stats.kept = len(examples)
    return examples, vocab, stats
