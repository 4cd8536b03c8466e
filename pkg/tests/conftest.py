import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from gqa.config import TrainConfig  # noqa: E402
from gqa.model import GQAModel, make_batch  # noqa: E402
from gqa.text import Vocabulary, encode_example  # noqa: E402

TOY_WORDS = [f"w{i}" for i in range(16)]  # 16 words + 4 reserved = vocab 20


def toy_config(**kw):
    base = dict(hidden_dim=8, emb_dim=5, dtype="float64", batch_size=2, seed=3)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture
def toy_vocab():
    return Vocabulary(TOY_WORDS)


@pytest.fixture
def toy_example(toy_vocab):
    # question 3, passage 6 (one OOV word), answer 3 (incl. the copied OOV)
    q = ["w1", "w2", "w3"]
    p = ["w4", "w5", "zyzzy", "w6", "w7", "w5"]
    a = ["w5", "zyzzy", "w9"]
    return encode_example(q, p, a, toy_vocab)


@pytest.fixture
def toy_model(toy_vocab):
    def make(**kw):
        model = GQAModel(toy_config(**kw), len(toy_vocab))
        # give coverage weight a non-zero value so its gradient path is exercised
        model.params["dec.att.w_cov"].data[:] = -0.7
        return model
    return make


def randomize(model, rng, scale=1.0):
    for t in model.params.values():
        t.data = rng.uniform(-scale, scale, size=t.shape).astype(t.dtype)


# One line per acceptance criterion, repeated in the terminal summary so the
# verdicts are visible without ``-s``.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
