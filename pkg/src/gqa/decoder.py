"""Attention-aware GRU decoder with a pointer-generator switch and coverage.

At step t the decoder attends over the encoder states using the previous state
``s_{t-1}`` (plus a learned multiple of the coverage vector), merges the
attended context with ``s_{t-1}`` through a tanh layer, and feeds that merged
state together with the embedding of the previous token to a GRU.  The output
distribution mixes the vocabulary softmax with the attention weights scattered
onto the (extended) ids of the source words.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Tensor
from .encoder import _last_linear, scaled_scores
from .layers import GruCell
from .text import EOS, SOS, UNK


@dataclass
class DecoderState:
    s: Tensor    # [B, H]
    cov: Tensor  # [B, n], sum of all earlier attention vectors
    t: int = 0


@dataclass
class DecoderStepTrace:
    token: int
    a: np.ndarray        # attention over the real passage positions
    p_gen: float
    coverage: np.ndarray  # coverage after this step; sums to step index + 1
    h_star: np.ndarray = None
    dist: np.ndarray = None

    def to_dict(self):
        out = {"token": int(self.token), "attention": self.a.tolist(),
               "p_gen": float(self.p_gen), "coverage": self.coverage.tolist()}
        return out


def final_dist(p_vocab, a, p_gen, extended_ids, n_oov):
    """Mix the vocabulary distribution with the copy distribution.

    ``dist[w] = p_gen * p_vocab[w] + (1 - p_gen) * sum(a[i] for i with extended_ids[i] == w)``
    over ``vocab_size + n_oov`` ids.  ``p_gen`` is [B, 1].
    """
    B, V = p_vocab.shape
    width = V + n_oov
    if n_oov:
        p_vocab = ad.concat([p_vocab, Tensor(np.zeros((B, n_oov), dtype=p_vocab.dtype))], axis=1)
    copy = ad.scatter_add(a, extended_ids, width)
    gen = ad.mul(ad.expand(p_gen, width), p_vocab)
    return ad.add(gen, ad.mul(ad.expand(1.0 - p_gen, width), copy))


def target_prob(p_vocab, a, p_gen, extended_ids, targets):
    """``final_dist(...)[b, targets[b]]`` without materialising the full distribution."""
    B, V = p_vocab.shape
    targets = np.asarray(targets)
    in_vocab = targets < V
    gen = ad.mul(ad.take_along(p_vocab, np.where(in_vocab, targets, UNK)),
                 Tensor(in_vocab.astype(p_vocab.dtype)))
    hits = (np.asarray(extended_ids) == targets[:, None]).astype(a.dtype)
    copy = ad.sum(ad.mul(a, Tensor(hits)), axis=1)
    p = ad.reshape(p_gen, (B,))
    return ad.add(ad.mul(p, gen), ad.mul(1.0 - p, copy))


def update_coverage(cov, a):
    if cov.shape != a.shape:
        raise ContractError(f"coverage {cov.shape} and attention {a.shape} differ")
    return ad.add(cov, a)


class Decoder:
    def __init__(self, params, config, embedding, vocab_size):
        H = config.hidden_dim
        self.hidden_dim = H
        self.vocab_size = vocab_size
        self.embedding = embedding
        self.pointer_enabled = config.pointer_enabled
        self.coverage_enabled = config.coverage_enabled
        self.gru = GruCell(params, "dec.gru", embedding.shape[1], H)
        self.W_att_h = params.linear("dec.att.Wh", 2 * H, H)
        self.W_att_s = params.linear("dec.att.Ws", H, H)
        self.w_cov = params.zeros("dec.att.w_cov", (1,))
        self.W_merge = params.linear("dec.merge.W", 3 * H, H)
        self.W_y = params.linear("dec.out.W", H, vocab_size)
        self.b_y = params.uniform("dec.out.b", (vocab_size,), 1.0 / np.sqrt(H))
        self.w_ptr_h = params.linear("dec.ptr.w_h", 2 * H, 1)
        self.w_ptr_s = params.linear("dec.ptr.w_s", H, 1)
        self.b_ptr = params.zeros("dec.ptr.b", (1,))

    # -- single-step pieces ------------------------------------------------------

    def project_encoder(self, c):
        """tanh(W_h c_i) for every position; independent of the decoder step."""
        return ad.tanh(_last_linear(c, self.W_att_h))

    def attend(self, c, c_proj, s_prev, cov, mask=None):
        """Returns ``(a [B, n], h_star [B, 2H])``."""
        B, n, _ = c.shape
        s_bar = ad.tanh(ad.matmul(s_prev, self.W_att_s))
        e = ad.reshape(scaled_scores(c_proj, ad.reshape(s_bar, (B, 1, -1))), (B, n))
        if self.coverage_enabled:
            e = ad.add(e, ad.scale(cov, self.w_cov))
        a = ad.softmax(e, axis=1, mask=mask)
        h_star = ad.reshape(ad.bmm(ad.reshape(a, (B, 1, n)), c), (B, c.shape[2]))
        return a, h_star

    def step(self, s_prev, y_prev_emb, h_star):
        s_merged = ad.tanh(ad.matmul(ad.concat([h_star, s_prev], axis=1), self.W_merge))
        return self.gru(y_prev_emb, s_merged)

    def compute_pgen(self, h_star, s_t):
        z = ad.add(ad.matmul(h_star, self.w_ptr_h), ad.matmul(s_t, self.w_ptr_s))
        return ad.sigmoid(ad.add_bias(z, self.b_ptr))

    def vocab_dist(self, s_t):
        return ad.softmax(ad.add_bias(ad.matmul(s_t, self.W_y), self.b_y), axis=1)

    def initial_state(self, enc):
        B, n, _ = enc.c.shape
        return DecoderState(s=enc.h, cov=Tensor(np.zeros((B, n), dtype=enc.c.dtype)))

    def advance(self, enc, c_proj, state, prev_ids):
        """One full decoder step: attend, update state, output pieces."""
        a, h_star = self.attend(enc.c, c_proj, state.s, state.cov, enc.passage_mask)
        y_emb = ad.embedding(self.embedding, prev_ids)
        s_t = self.step(state.s, y_emb, h_star)
        p_vocab = self.vocab_dist(s_t)
        p_gen = self.compute_pgen(h_star, s_t) if self.pointer_enabled else None
        new_state = DecoderState(s=s_t, cov=update_coverage(state.cov, a), t=state.t + 1)
        return new_state, a, h_star, p_vocab, p_gen

    def _input_ids(self, ids):
        ids = np.asarray(ids)
        return np.where(ids < self.vocab_size, ids, UNK)

    # -- whole sequences -----------------------------------------------------------

    def teacher_forced(self, enc, targets, extended_ids):
        """Probability of each gold target given gold previous tokens.

        ``targets`` is [B, T] in extended ids.  Returns ``(probs, p_gens)``:
        a list of T tensors [B] and a list of [B] arrays of p_gen values.
        """
        targets = np.asarray(targets)
        B, T = targets.shape
        c_proj = self.project_encoder(enc.c)
        state = self.initial_state(enc)
        prev = np.full(B, SOS)
        probs, p_gens = [], []
        for t in range(T):
            state, a, _, p_vocab, p_gen = self.advance(enc, c_proj, state, prev)
            tgt = targets[:, t]
            if self.pointer_enabled:
                probs.append(target_prob(p_vocab, a, p_gen, extended_ids, tgt))
                p_gens.append(p_gen.data[:, 0].copy())
            else:
                probs.append(ad.take_along(p_vocab, self._input_ids(tgt)))
                p_gens.append(np.ones(B))
            prev = self._input_ids(tgt)
        return probs, p_gens

    def output_dist(self, p_vocab, a, p_gen, extended_ids, n_oov):
        if not self.pointer_enabled:
            return p_vocab
        return final_dist(p_vocab, a, p_gen, extended_ids, n_oov)

    def decode_greedy(self, enc, extended_ids, n_oov, max_len=50, keep_dist=False):
        """Greedy argmax decoding for a batch.

        Returns ``(sequences, traces)``: per example the emitted extended ids
        (without EOS) and one :class:`DecoderStepTrace` per step taken.
        """
        B = enc.c.shape[0]
        mask = enc.passage_mask
        c_proj = self.project_encoder(enc.c)
        state = self.initial_state(enc)
        prev = np.full(B, SOS)
        done = np.zeros(B, dtype=bool)
        seqs = [[] for _ in range(B)]
        traces = [[] for _ in range(B)]
        for _ in range(max_len + 1):
            state, a, h_star, p_vocab, p_gen = self.advance(enc, c_proj, state, prev)
            dist = self.output_dist(p_vocab, a, p_gen, extended_ids, n_oov).data
            choice = dist.argmax(axis=1)
            for b in range(B):
                if done[b]:
                    continue
                tok = int(choice[b])
                if len(seqs[b]) == max_len:
                    tok = EOS
                traces[b].append(DecoderStepTrace(
                    token=tok, a=a.data[b][mask[b]].copy(),
                    p_gen=1.0 if p_gen is None else float(p_gen.data[b, 0]),
                    coverage=state.cov.data[b][mask[b]].copy(),
                    h_star=h_star.data[b].copy(),
                    dist=dist[b].copy() if keep_dist else None))
                if tok == EOS:
                    done[b] = True
                else:
                    seqs[b].append(tok)
            if done.all():
                break
            prev = self._input_ids(choice)
        return seqs, traces

    def decode_beam(self, enc, extended_ids, n_oov, beam_size, max_len=50):
        """Beam search for a single example (batch of one), scored by total log-probability."""
        if enc.c.shape[0] != 1:
            raise ContractError("beam search decodes one example at a time")
        c_proj = self.project_encoder(enc.c)
        beams = [(0.0, [], self.initial_state(enc), [])]
        finished = []
        for _ in range(max_len + 1):
            candidates = []
            for score, toks, state, trace in beams:
                prev = np.array([toks[-1] if toks else SOS])
                new, a, h_star, p_vocab, p_gen = self.advance(
                    enc, c_proj, state, self._input_ids(prev))
                dist = self.output_dist(p_vocab, a, p_gen, extended_ids, n_oov).data[0]
                logp = np.log(np.maximum(dist, 1e-12))
                m = enc.passage_mask[0]
                for tok in np.argsort(-logp, kind="stable")[:beam_size]:
                    tok = int(tok)
                    if len(toks) == max_len:
                        tok = EOS
                    step = DecoderStepTrace(
                        token=tok, a=a.data[0][m].copy(),
                        p_gen=1.0 if p_gen is None else float(p_gen.data[0, 0]),
                        coverage=new.cov.data[0][m].copy())
                    candidates.append((score + logp[tok], toks + [tok], new, trace + [step]))
                    if len(toks) == max_len:
                        break
            candidates.sort(key=lambda c: -c[0])
            beams = []
            for cand in candidates:
                if cand[1][-1] == EOS:
                    finished.append(cand)
                else:
                    beams.append(cand)
                if len(beams) == beam_size:
                    break
            if not beams or len(finished) >= beam_size:
                break
        pool = finished or beams
        score, toks, _, trace = max(pool, key=lambda c: c[0])
        return [t for t in toks if t != EOS], trace
