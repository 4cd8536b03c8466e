"""The command line end to end: prepare, train, generate with a trace, eval.

Each step is the same as typing ``gqa ...`` in a shell; the script just keeps
everything inside one temporary directory.

Run:  python demos/06_cli_walkthrough.py
"""

import json
import pathlib
import tempfile

from gqa.cli import main
from gqa.synthetic import lookup_corpus

work = pathlib.Path(tempfile.mkdtemp(prefix="gqa-demo-"))
print("working in", work)

# 1. A JSON-lines corpus: one {"query", "passages", "answer"} object per line.
corpus = work / "corpus.jsonl"
corpus.write_text("".join(json.dumps(r) + "\n" for r in lookup_corpus(300, seed=5, n_keys=30,
                                                                       n_values=80)))

# 2. prepare: pick the best passage per example, build the vocabulary, encode.
#    $ gqa prepare corpus.jsonl data
main(["prepare", str(corpus), str(work / "data")])

# 3. train with a small key = value config; flags override file values.
#    $ gqa train data run --config small.cfg --max-iterations 300
(work / "small.cfg").write_text("hidden_dim = 32\nemb_dim = 32\nbatch_size = 32\n"
                                "checkpoint_every = 100\n")
main(["train", str(work / "data"), str(work / "run"), "--config", str(work / "small.cfg"),
      "--max-iterations", "300"])
print("run directory:", sorted(p.name for p in (work / "run").iterdir()))

# 4. generate, dumping attention / p_gen / coverage per decoding step.
#    $ gqa generate run/model.gqa --question ... --passage ... --trace trace.jsonl
main(["generate", str(work / "run" / "model.gqa"), "--question", "what is k7 ?",
      "--passage", "k3 is v1 v2 . k7 is v40 v41 . k9 is v5 .", "--trace",
      str(work / "trace.jsonl")])
for line in (work / "trace.jsonl").read_text().splitlines():
    row = json.loads(line)
    top = max(range(len(row["attention"])), key=row["attention"].__getitem__)
    print(f"  step {row['step']}: {row['word']!r:8} p_gen {row['p_gen']:.2f} "
          f"attends position {top} ({row['attention'][top]:.2f})")

# 5. eval: ROUGE-L, perplexity, mean p_gen and repetition on a prepared dataset.
#    $ gqa eval run/model.gqa data
main(["eval", str(work / "run" / "model.gqa"), str(work / "data")])

# 6. ablations mirror the three model variants: --no-coverage, --no-pointer.
main(["train", str(work / "data"), str(work / "plain"), "--config", str(work / "small.cfg"),
      "--max-iterations", "50", "--no-pointer", "--no-coverage"])
