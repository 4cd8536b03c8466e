"""Coverage: remembering where the decoder has already looked.

The coverage vector is the running sum of past attention distributions.  A
learned weight adds it to the attention energies, so the model can learn to
steer away from positions it has already copied.  Long answers and a small
hidden state make repetition likely, which is where this matters.  Here the
answer words are drawn from only ten values, so a word can recur inside one
answer; a decoder without coverage tends to jump back to the first occurrence
and copy the same stretch again.

Run:  python demos/05_coverage.py [iterations]     (default 1500)
"""

import sys

import numpy as np

from gqa.config import TrainConfig
from gqa.evaluation import evaluate, repetition_rates
from gqa.model import make_batch
from gqa.synthetic import long_span_corpus
from gqa.text import prepare_corpus
from gqa.training import train

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 1500

corpus = dict(n_values=10, distinct=False)
train_ex, vocab, _ = prepare_corpus(long_span_corpus(1000, seed=21, **corpus), max_vocab=500)
held_ex, _, _ = prepare_corpus(long_span_corpus(100, seed=22, **corpus), vocab=vocab)
print("gold answer lengths:", sorted({len(ex.answer_tokens) for ex in held_ex}))
gold = repetition_rates([ex.answer_tokens for ex in held_ex])
print(f"gold answers: adjacent repeats {gold[0]:.3f}, duplicate trigrams {gold[1]:.3f}")

models = {}
for coverage in (True, False):
    config = TrainConfig(hidden_dim=16, emb_dim=32, batch_size=32, max_iterations=iterations,
                         coverage_enabled=coverage)
    models[coverage] = train(train_ex, config, vocab=vocab).model
    r = evaluate(models[coverage], vocab, held_ex)
    print(f"coverage={coverage}: ROUGE-L {r.rouge_l_f:.3f}, "
          f"duplicate trigrams {r.duplicate_trigram_rate:.3f}, "
          f"adjacent repeats {r.adjacent_repeat_rate:.3f}")

print("learned coverage weight:", float(models[True].params["dec.att.w_cov"].data[0]))

# Coverage bookkeeping for one answer: after t steps the vector sums to t.
_, (trace,) = models[True].generate(make_batch(held_ex[:1]))
np.set_printoptions(precision=2, suppress=True)
for t, step in enumerate(trace[:4], 1):
    print(f"step {t}: sum(cov) = {step.coverage.sum():.4f}, argmax attention = {step.a.argmax()}")
