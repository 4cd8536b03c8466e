"""Generative question answering with copy and coverage, on a small numpy autodiff core."""

from .config import TrainConfig
from .model import GQAModel, make_batch
from .text import QAExample, Vocabulary, build_vocab, encode_example, rouge_l, tokenize

__version__ = "0.1.0"

__all__ = ["GQAModel", "QAExample", "TrainConfig", "Vocabulary", "build_vocab",
           "encode_example", "make_batch", "rouge_l", "tokenize"]
