"""Corpus-level evaluation: ROUGE-L, perplexity, mean p_gen and repetition rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import make_batch
from .text import DEFAULT_BETA, ids_to_tokens, rouge_l


@dataclass
class EvalReport:
    rouge: list = field(default_factory=list)  # per-example RougeL
    rouge_l_f: float = 0.0
    perplexity: float = float("nan")
    mean_p_gen: float = float("nan")
    adjacent_repeat_rate: float = 0.0
    duplicate_trigram_rate: float = 0.0
    outputs: list = field(default_factory=list)

    def summary(self):
        return {
            "examples": len(self.rouge),
            "rouge_l_f": round(self.rouge_l_f, 4),
            "perplexity": round(self.perplexity, 4),
            "mean_p_gen": round(self.mean_p_gen, 2),
            "adjacent_repeat_rate": round(self.adjacent_repeat_rate, 4),
            "duplicate_trigram_rate": round(self.duplicate_trigram_rate, 4),
        }


def repetition_rates(outputs):
    """Pooled fractions of adjacent duplicate tokens and of duplicate trigrams.

    A trigram counts as a duplicate when it already occurred earlier in the same output.
    """
    adj = adj_total = dup = tri_total = 0
    for toks in outputs:
        adj += sum(1 for a, b in zip(toks, toks[1:]) if a == b)
        adj_total += max(len(toks) - 1, 0)
        seen = set()
        for tri in zip(toks, toks[1:], toks[2:]):
            tri_total += 1
            if tri in seen:
                dup += 1
            seen.add(tri)
    return (adj / adj_total if adj_total else 0.0,
            dup / tri_total if tri_total else 0.0)


def score_answers(predictions, references, beta=DEFAULT_BETA):
    """Per-example ROUGE-L and their mean F."""
    scores = [rouge_l(p, r, beta) for p, r in zip(predictions, references)]
    mean = float(np.mean([s.f_score for s in scores])) if scores else 0.0
    return scores, mean


def generate_answers(model, vocab, examples, batch_size=64, max_len=None, beam_size=None):
    """Token lists generated for each example, plus the per-step traces."""
    outputs, traces = [], []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        batch = make_batch(chunk)
        seqs, trs = model.generate(batch, max_len=max_len, beam_size=beam_size)
        for ex, seq in zip(chunk, seqs):
            outputs.append(ids_to_tokens(seq, vocab, ex.oov_words))
        traces.extend(trs)
    return outputs, traces


def evaluate(model, vocab, examples, batch_size=64, beta=DEFAULT_BETA, max_len=None,
             beam_size=None):
    outputs, traces = generate_answers(model, vocab, examples, batch_size, max_len, beam_size)
    scores, mean_f = score_answers(outputs, [ex.answer_tokens for ex in examples],
                                   beta)
    nll, p_gens = [], []
    for start in range(0, len(examples), batch_size):
        batch = make_batch(examples[start:start + batch_size])
        n, _ = model.token_nll(batch)
        nll.append(n)
    p_gens = [step.p_gen for tr in traces for step in tr]
    nll = np.concatenate(nll)
    adj, dup = repetition_rates(outputs)
    return EvalReport(
        rouge=scores, rouge_l_f=mean_f,
        perplexity=math.exp(float(nll.mean())),
        mean_p_gen=float(np.mean(p_gens)) if p_gens else float("nan"),
        adjacent_repeat_rate=adj, duplicate_trigram_rate=dup, outputs=outputs)
