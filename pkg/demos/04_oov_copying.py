"""Copying words the model has never seen.

The answers here are random strings drawn fresh for every example, so the
held-out answers are outside the vocabulary by construction.  Only the
pointer (copy) path can produce them; the vocabulary softmax cannot.

Run:  python demos/04_oov_copying.py [iterations]     (default 800)
"""

import sys

from gqa.config import TrainConfig
from gqa.evaluation import generate_answers
from gqa.synthetic import lookup_corpus
from gqa.text import prepare_corpus
from gqa.training import train

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 800

taken = set()  # shared, so held-out strings never appeared in training
train_rec = lookup_corpus(1000, seed=11, oov_values=True, taken=taken)
held_rec = lookup_corpus(100, seed=12, oov_values=True, taken=taken)
print("one held-out record:", held_rec[0])

train_ex, vocab, _ = prepare_corpus(train_rec, max_vocab=500)
held_ex, _, _ = prepare_corpus(held_rec, vocab=vocab)
ex = held_ex[0]
print("its passage as the model sees it:", [vocab.word(i) for i in ex.passage_ids])
print("source OOV words (extended ids from", len(vocab), "on):", ex.oov_words)

for pointer in (True, False):
    config = TrainConfig(hidden_dim=48, emb_dim=48, batch_size=32, max_iterations=iterations,
                         pointer_enabled=pointer)
    model = train(train_ex, config, vocab=vocab).model
    outputs, _ = generate_answers(model, vocab, held_ex)
    hits = sum(all(w in out for w in ex.answer_tokens) for ex, out in zip(held_ex, outputs))
    print(f"\npointer={pointer}: gold OOV words all emitted in {hits}/{len(held_ex)} cases")
    for ex, out in list(zip(held_ex, outputs))[:3]:
        print("  gold", ex.answer_tokens, "-> generated", out)
