"""Train the full model on a synthetic look-up task and watch it learn to copy.

Every passage lists records "k17 is v3 v81 ." and the question asks for one
key, so the answer is always a span of the passage.

Run:  python demos/03_copy_task.py [iterations]     (default 600, about a minute)
"""

import sys

from gqa.config import TrainConfig
from gqa.evaluation import evaluate
from gqa.model import make_batch
from gqa.synthetic import lookup_corpus
from gqa.text import detokenize, ids_to_tokens, prepare_corpus
from gqa.training import train

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 600

records = lookup_corpus(1100, seed=1)
print("one record:", records[0])

train_ex, vocab, stats = prepare_corpus(records[:1000], max_vocab=500)
held_ex, _, _ = prepare_corpus(records[1000:], vocab=vocab)
print(f"kept {stats.kept} training examples, vocabulary {len(vocab)}")

config = TrainConfig(hidden_dim=48, emb_dim=48, batch_size=32, max_iterations=iterations)


def progress(step, loss, model):
    if step % 100 == 0:
        print(f"  iteration {step:5d}  loss {loss:.3f}")


result = train(train_ex, config, vocab=vocab, callback=progress)
model = result.model

report = evaluate(model, vocab, held_ex)
print("held-out:", report.summary())

# A few answers next to the gold, with the copy switch value at each step.
batch = make_batch(held_ex[:5])
seqs, traces = model.generate(batch)
for ex, seq, trace in zip(held_ex[:5], seqs, traces):
    print()
    print("Q:", " ".join(ex.question_tokens))
    print("P:", " ".join(ex.passage_tokens))
    print("gold:     ", " ".join(ex.answer_tokens))
    print("generated:", detokenize(ids_to_tokens(seq, vocab, ex.oov_words)))
    print("p_gen per step:", [round(s.p_gen, 2) for s in trace])
