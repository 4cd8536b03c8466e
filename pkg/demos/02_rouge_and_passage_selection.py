"""ROUGE-L and the passage-selection step of corpus preparation.

Run:  python demos/02_rouge_and_passage_selection.py
"""

from gqa.text import (RejectedExample, best_span_score, build_vocab, encode_example, lcs_length,
                      rouge_l, select_passage, tokenize)

# ROUGE-L compares a candidate with a reference through their longest common
# subsequence.  The F-measure weights recall by beta = 1.2.
cand = tokenize("The urethra is a tube.")
ref = tokenize("a thin tube called the urethra")
print("candidate:", cand)
print("reference:", ref)
print("LCS length:", lcs_length(cand, ref))
print(rouge_l(cand, ref))

# To pick a training passage, every passage is scored by its best contiguous
# span (length between half and twice the answer length) against the answer.
answer = tokenize("a tube called the urethra")
passages = [tokenize(p) for p in (
    "The bladder stores urine until it is released.",
    "Urine leaves the body through a tube called the urethra, which is short.",
    "The kidneys filter blood.",
)]
for i, p in enumerate(passages):
    print(f"passage {i}: best span F = {best_span_score(answer, p):.3f}")
print("selected (index, score):", select_passage(answer, passages))

# Examples whose best passage scores below 0.7 are dropped.
try:
    select_passage(tokenize("twelve inches"), passages)
except RejectedExample as err:
    print("rejected:", err)

# Encoding: passage words outside the vocabulary get per-example extended ids,
# so the decoder can still copy them.
vocab = build_vocab([tokenize("what is the tube called ? the urethra is a tube .")])
q = tokenize("what carries urine ?")
ex = encode_example(q, passages[1], answer, vocab)
print("vocabulary size:", len(vocab))
print("passage ids: ", ex.passage_ids)
print("extended ids:", ex.extended_ids)
print("source OOV words:", ex.oov_words)
print("answer ids (EOS-terminated):", ex.answer_ids)
