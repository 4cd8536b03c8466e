"""Question-aware passage encoder.

Both sequences are read by one shared BiGRU.  Every passage position then
attends over the question (scaled dot products of tanh-transformed states),
the attended question vector is concatenated with the passage state, gated by
a sigmoid, and smoothed by a second BiGRU.  The decoder is initialised from a
tanh transform of the final smoothed state joined with the question summary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Tensor
from .layers import BiGru


@dataclass
class EncoderOutput:
    c: Tensor                 # [B, n, 2H] smoothed passage states
    h: Tensor                 # [B, H] decoder initial state
    uQ_final: Tensor          # [B, 2H] (or [B, H]) question summary
    attention_matrix: Tensor  # [B, n, m]; each passage row sums to 1 over the question
    passage_mask: np.ndarray  # [B, n] bool


def scaled_scores(left, right):
    """``left @ right^T / sqrt(D)`` for [B, n, D] and [B, m, D] inputs."""
    d = left.shape[-1]
    return ad.scale(ad.bmm(left, ad.transpose(right)), 1.0 / np.sqrt(d))


def _as_batch(ids, mask):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.shape[1] == 0:
        raise ContractError("cannot encode an empty sequence")
    if mask is None:
        mask = np.ones(ids.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 1:
        mask = mask[None, :]
    if not mask.any(axis=1).all():
        raise ContractError("cannot encode an empty sequence")
    return ids, mask


def _last_linear(x3, W):
    """Apply a bias-free linear map to the last axis of a 3-D tensor."""
    B, n, d = x3.shape
    return ad.reshape(ad.matmul(ad.reshape(x3, (B * n, d)), W), (B, n, W.shape[1]))


class Encoder:
    def __init__(self, params, config, embedding):
        H = config.hidden_dim
        self.hidden_dim = H
        self.embedding = embedding
        self.question_summary = config.question_summary
        self.reader = BiGru(params, "enc.read", embedding.shape[1], H, config.encoder_layers)
        self.WQ = params.linear("enc.coatt.WQ", 2 * H, H)
        self.WP = params.linear("enc.coatt.WP", 2 * H, H)
        self.Wg = params.linear("enc.gate.Wg", 4 * H, 4 * H)
        self.smoother = BiGru(params, "enc.smooth", 4 * H, H)
        q_dim = 2 * H if config.question_summary == "concat" else H
        self.Wh = params.linear("enc.summary.Wh", 2 * H + q_dim, H)

    def read_sequences(self, question_ids, passage_ids, question_mask=None, passage_mask=None):
        """Run the shared BiGRU over both sequences.

        Returns ``(uQ [B, m, 2H], uP [B, n, 2H], uQ_final)``.
        """
        q_ids, q_mask = _as_batch(question_ids, question_mask)
        p_ids, p_mask = _as_batch(passage_ids, passage_mask)
        uQ, q_fwd, q_bwd = self.reader(ad.embedding(self.embedding, q_ids), q_mask)
        uP, _, _ = self.reader(ad.embedding(self.embedding, p_ids), p_mask)
        if self.question_summary == "concat":
            q_final = ad.concat([q_fwd, q_bwd], axis=1)
        else:
            q_final = q_fwd
        return uQ, uP, q_final

    def scaled_coattention(self, uQ, uP, question_mask=None):
        """For each passage position, attend over question states.

        Returns ``(v [B, n, 2H], weights [B, n, m])``; ``v`` mixes the original
        (untransformed) question states.
        """
        B, n, _ = uP.shape
        m = uQ.shape[1]
        q_bar = ad.tanh(_last_linear(uQ, self.WQ))
        p_bar = ad.tanh(_last_linear(uP, self.WP))
        logits = scaled_scores(p_bar, q_bar)
        mask = None
        if question_mask is not None:
            mask = np.broadcast_to(np.asarray(question_mask, bool)[:, None, :], (B, n, m))
        weights = ad.softmax(logits, axis=2, mask=mask)
        return ad.bmm(weights, uQ), weights

    def gated_fuse(self, v, uP):
        x = ad.concat([v, uP], axis=2)
        g = ad.sigmoid(_last_linear(x, self.Wg))
        return ad.mul(g, x)

    def smooth(self, fused, passage_mask=None):
        """Returns ``(c [B, n, 2H], c_T [B, 2H])`` with ``c_T`` = [last forward; first backward]."""
        if passage_mask is None:
            passage_mask = np.ones(fused.shape[:2], dtype=bool)
        c, last_fwd, first_bwd = self.smoother(fused, passage_mask)
        return c, ad.concat([last_fwd, first_bwd], axis=1)

    def summarize(self, c_T, uQ_final):
        return ad.tanh(ad.matmul(ad.concat([c_T, uQ_final], axis=1), self.Wh))

    def __call__(self, question_ids, passage_ids, question_mask=None, passage_mask=None):
        q_ids, q_mask = _as_batch(question_ids, question_mask)
        p_ids, p_mask = _as_batch(passage_ids, passage_mask)
        uQ, uP, q_final = self.read_sequences(q_ids, p_ids, q_mask, p_mask)
        v, weights = self.scaled_coattention(uQ, uP, q_mask)
        c, c_T = self.smooth(self.gated_fuse(v, uP), p_mask)
        h = self.summarize(c_T, q_final)
        return EncoderOutput(c=c, h=h, uQ_final=q_final, attention_matrix=weights,
                             passage_mask=p_mask)
