"""The complete question-answering model: parameters, batching, loss and generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .decoder import Decoder
from .encoder import Encoder, EncoderOutput
from .layers import Params
from .text import PAD, UNK


@dataclass
class Batch:
    question_ids: np.ndarray   # [B, m]
    question_mask: np.ndarray  # [B, m] bool
    passage_ids: np.ndarray    # [B, n]
    passage_mask: np.ndarray
    extended_ids: np.ndarray   # [B, n]
    n_oov: int
    targets: np.ndarray        # [B, T] extended ids, EOS-terminated
    target_mask: np.ndarray    # [B, T] bool
    oov_words: list

    @property
    def size(self):
        return self.question_ids.shape[0]


def _pad(seqs, fill=PAD):
    width = max(1, max(len(s) for s in seqs))
    arr = np.full((len(seqs), width), fill, dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=bool)
    for i, s in enumerate(seqs):
        arr[i, : len(s)] = s
        mask[i, : len(s)] = True
    return arr, mask


def make_batch(examples):
    q, qm = _pad([ex.question_ids for ex in examples])
    p, pm = _pad([ex.passage_ids for ex in examples])
    e, _ = _pad([ex.extended_ids for ex in examples])
    t, tm = _pad([ex.answer_ids for ex in examples])
    return Batch(q, qm, p, pm, e, max(len(ex.oov_words) for ex in examples), t, tm,
                 [list(ex.oov_words) for ex in examples])


class GQAModel:
    """Encoder + decoder sharing one frozen (by default) embedding table."""

    def __init__(self, config, vocab_size, seed=None):
        self.config = config
        self.vocab_size = vocab_size
        rng = np.random.default_rng(config.seed if seed is None else seed)
        self.params = Params(rng, dtype=config.dtype)
        self.embedding = self.params.uniform("embedding", (vocab_size, config.emb_dim), 0.1,
                                             trainable=config.train_embeddings)
        self.encoder = Encoder(self.params, config, self.embedding)
        self.decoder = Decoder(self.params, config, self.embedding, vocab_size)

    def encode(self, batch):
        return self.encoder(batch.question_ids, batch.passage_ids,
                            batch.question_mask, batch.passage_mask)

    def _targets(self, batch):
        if self.config.pointer_enabled:
            return batch.targets
        # without copying, source-OOV targets can only be predicted as UNK
        return np.where(batch.targets < self.vocab_size, batch.targets, UNK)

    def loss(self, batch):
        """Mean over examples of the per-example mean negative log-likelihood."""
        from .training import nll_loss

        enc = self.encode(batch)
        targets = self._targets(batch)
        probs, _ = self.decoder.teacher_forced(enc, targets, batch.extended_ids)
        return nll_loss(probs, batch.target_mask)

    def token_nll(self, batch):
        """Per-token NLL values and p_gen values at real target positions (no tape)."""
        enc = self.encode(batch)
        probs, p_gens = self.decoder.teacher_forced(enc, self._targets(batch), batch.extended_ids)
        p = np.stack([x.data for x in probs], axis=1)
        nll = -np.log(np.maximum(p, 1e-12))
        return nll[batch.target_mask], np.stack(p_gens, axis=1)[batch.target_mask]

    def generate(self, batch, max_len=None, beam_size=None, keep_dist=False):
        """Decode every example; returns ``(extended-id sequences, traces)``."""
        max_len = self.config.max_answer_len if max_len is None else max_len
        beam = self.config.beam_size if beam_size is None else beam_size
        enc = self.encode(batch)
        if beam and beam > 1:
            seqs, traces = [], []
            for b in range(batch.size):
                one = _slice_encoding(enc, b)
                s, tr = self.decoder.decode_beam(one, batch.extended_ids[b:b + 1],
                                                 batch.n_oov, beam, max_len)
                seqs.append(s)
                traces.append(tr)
            return seqs, traces
        return self.decoder.decode_greedy(enc, batch.extended_ids, batch.n_oov, max_len,
                                          keep_dist=keep_dist)


def _slice_encoding(enc, b):
    return EncoderOutput(c=ad.Tensor(enc.c.data[b:b + 1]), h=ad.Tensor(enc.h.data[b:b + 1]),
                         uQ_final=ad.Tensor(enc.uQ_final.data[b:b + 1]),
                         attention_matrix=ad.Tensor(enc.attention_matrix.data[b:b + 1]),
                         passage_mask=enc.passage_mask[b:b + 1])
