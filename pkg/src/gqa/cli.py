"""Command line: ``gqa prepare | train | generate | eval``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .checkpoint import CheckpointError, load_checkpoint, load_model
from .config import ConfigError, TrainConfig
from .evaluation import evaluate
from .model import make_batch
from .text import (RejectedExample, Vocabulary, detokenize, encode_example, ids_to_tokens,
                   prepare_corpus, read_corpus, read_dataset, tokenize, write_dataset)
from .training import latest_checkpoint, train

log = logging.getLogger("gqa")

DATASET_FILE = "dataset.jsonl"
VOCAB_FILE = "vocab.txt"


class CliError(Exception):
    pass


def _config(args):
    config = TrainConfig()
    if getattr(args, "config", None):
        config = TrainConfig.load(args.config)
    overrides = {}
    for flag, key in (("seed", "seed"), ("max_answer_len", "max_answer_len"),
                      ("max_passage_len", "max_passage_len"), ("beam", "beam_size"),
                      ("max_iterations", "max_iterations"), ("max_vocab", "max_vocab")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "no_pointer", False):
        overrides["pointer_enabled"] = False
    if getattr(args, "no_coverage", False):
        overrides["coverage_enabled"] = False
    return config.replace(**overrides)


def _dataset_paths(path):
    if os.path.isdir(path):
        return os.path.join(path, DATASET_FILE), os.path.join(path, VOCAB_FILE)
    return path, os.path.join(os.path.dirname(path) or ".", VOCAB_FILE)


def cmd_prepare(args):
    config = _config(args)
    if not os.path.isfile(args.corpus):
        raise CliError(f"cannot read corpus {args.corpus}")

    def warn(lineno, msg):
        log.warning("%s:%d: skipping malformed line (%s)", args.corpus, lineno, msg)

    records = [rec for _, rec in read_corpus(args.corpus, warn)]
    examples, vocab, stats = prepare_corpus(
        records, max_vocab=config.max_vocab, max_passage_len=config.max_passage_len,
        max_answer_len=config.max_answer_len, beta=config.rouge_beta,
        threshold=config.selection_threshold)
    os.makedirs(args.out, exist_ok=True)
    write_dataset(os.path.join(args.out, DATASET_FILE), examples)
    vocab.save(os.path.join(args.out, VOCAB_FILE))
    print(f"kept {stats.kept} rejected {stats.rejected} vocab {len(vocab)}")
    return stats


def cmd_train(args):
    config = _config(args)
    data_path, vocab_path = _dataset_paths(args.dataset)
    examples = read_dataset(data_path)
    vocab = Vocabulary.load(vocab_path)
    resume = None
    if args.resume and os.path.isdir(args.out):
        path = latest_checkpoint(args.out)
        if path:
            resume = load_checkpoint(path)
            log.info("resuming from %s (iteration %d)", path, resume.iteration)
    result = train(examples, config, vocab=vocab, out_dir=args.out, resume=resume)
    print(f"trained {len(result.losses)} iterations, final loss {result.losses[-1]:.4f}")
    return result


def _generate_inputs(args):
    if args.input:
        with open(args.input, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    passage = rec.get("passage") or (rec.get("passages") or [""])[0]
                    yield rec["query"], passage
    else:
        if args.question is None or args.passage is None:
            raise CliError("give --question and --passage, or --input")
        yield args.question, args.passage


def cmd_generate(args):
    model, vocab, ckpt = load_model(args.checkpoint)
    config = model.config
    max_len = args.max_answer_len or config.max_answer_len
    beam = config.beam_size if args.beam is None else args.beam
    trace_rows = []
    answers = []
    for i, (question, passage) in enumerate(_generate_inputs(args)):
        p_toks = tokenize(passage)
        if not p_toks:
            raise CliError("empty passage")
        try:
            ex = encode_example(tokenize(question), p_toks, [], vocab,
                                args.max_passage_len or config.max_passage_len, max_len)
        except RejectedExample as err:
            raise CliError(str(err)) from None
        seqs, traces = model.generate(make_batch([ex]), max_len=max_len, beam_size=beam)
        tokens = ids_to_tokens(seqs[0], vocab, ex.oov_words)
        answers.append(detokenize(tokens))
        print(answers[-1])
        for t, step in enumerate(traces[0]):
            row = {"example": i, "step": t, "word": _word(step.token, vocab, ex.oov_words)}
            row.update(step.to_dict())
            trace_rows.append(row)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for row in trace_rows:
                fh.write(json.dumps(row) + "\n")
    return answers


def _word(token, vocab, oov):
    return vocab.word(token) if token < len(vocab) else oov[token - len(vocab)]


def cmd_eval(args):
    model, vocab, _ = load_model(args.checkpoint)
    data_path, vocab_path = _dataset_paths(args.dataset)
    data_vocab = Vocabulary.load(vocab_path)
    if len(data_vocab) != len(vocab) or data_vocab.words != vocab.words:
        raise CliError(f"vocabulary mismatch: checkpoint has {len(vocab)} words, "
                       f"dataset has {len(data_vocab)}")
    examples = read_dataset(data_path)
    beam = model.config.beam_size if args.beam is None else args.beam
    report = evaluate(model, vocab, examples, beam_size=beam,
                      max_len=args.max_answer_len or model.config.max_answer_len)
    print(json.dumps(report.summary()))
    return report


def build_parser():
    parser = argparse.ArgumentParser(prog="gqa", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--max-answer-len", type=int)
        p.add_argument("--max-passage-len", type=int)

    p = sub.add_parser("prepare", help="select passages, build vocabulary, encode examples")
    p.add_argument("corpus")
    p.add_argument("out")
    p.add_argument("--max-vocab", type=int)
    common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model on a prepared dataset")
    p.add_argument("dataset")
    p.add_argument("out")
    p.add_argument("--no-pointer", action="store_true")
    p.add_argument("--no-coverage", action="store_true")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--resume", action="store_true", help="continue from the latest checkpoint")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="answer questions with a trained checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--question")
    p.add_argument("--passage")
    p.add_argument("--input", help="JSON-lines file with query and passage(s)")
    p.add_argument("--trace", help="write per-step attention/p_gen/coverage JSON lines here")
    p.add_argument("--beam", type=int)
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="ROUGE-L, perplexity, p_gen and repetition on a dataset")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--beam", type=int)
    common(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (CliError, ConfigError, CheckpointError, OSError) as err:
        print(f"gqa {args.command}: error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
