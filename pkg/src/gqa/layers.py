"""Parameter store and recurrent building blocks."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Params(dict):
    """Ordered ``name -> Tensor`` map; creation order fixes the RNG draw order."""

    def __init__(self, rng, dtype=np.float64):
        super().__init__()
        self.rng = rng
        self.dtype = np.dtype(dtype)

    def uniform(self, name, shape, bound, trainable=True):
        data = self.rng.uniform(-bound, bound, size=shape).astype(self.dtype)
        return self._add(name, data, trainable)

    def zeros(self, name, shape, trainable=True):
        return self._add(name, np.zeros(shape, dtype=self.dtype), trainable)

    def linear(self, name, fan_in, fan_out):
        return self.uniform(name, (fan_in, fan_out), 1.0 / np.sqrt(fan_in))

    def _add(self, name, data, trainable):
        if name in self:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(data, requires_grad=trainable, name=name)
        self[name] = t
        return t

    def trainable(self):
        return {k: v for k, v in self.items() if v.requires_grad}


class GruCell:
    """Standard GRU: z, r gates and a candidate computed from ``r * h``.

    ``W`` stacks the input projections of [z | r | n]; the recurrent weights of
    the gates and of the candidate are kept separate because the candidate sees
    the reset-scaled state.
    """

    def __init__(self, params, prefix, input_dim, hidden_dim):
        self.input_dim, self.hidden_dim = input_dim, hidden_dim
        h = hidden_dim
        self.W = params.linear(f"{prefix}.W", input_dim, 3 * h)
        self.U_zr = params.linear(f"{prefix}.U_zr", h, 2 * h)
        self.U_n = params.linear(f"{prefix}.U_n", h, h)
        self.b = params.uniform(f"{prefix}.b", (3 * h,), 1.0 / np.sqrt(input_dim))

    def project(self, x):
        """Input projection ``x W + b`` for a 2-D batch of inputs."""
        return ad.add_bias(ad.matmul(x, self.W), self.b)

    def step_projected(self, xp, h):
        return ad.gru_step(xp, h, self.U_zr, self.U_n)

    def __call__(self, x, h):
        return self.step_projected(self.project(x), h)


def _run_direction(cell, xp, mask, reverse):
    """Unroll ``cell`` over projected inputs ``xp`` [B, n, 3H].

    Padded steps (mask 0) carry the state through unchanged, so a reverse pass
    starts from zeros at each sequence's true end.
    """
    B, n = xp.shape[0], xp.shape[1]
    H = cell.hidden_dim
    h = Tensor(np.zeros((B, H), dtype=xp.dtype))
    outs = [None] * n
    steps = range(n - 1, -1, -1) if reverse else range(n)
    for t in steps:
        h_new = cell.step_projected(xp[:, t, :], h)
        col = mask[:, t]
        h = h_new if col.all() else ad.blend(np.repeat(col[:, None], H, axis=1), h_new, h)
        outs[t] = h
    return outs, h


class BiGru:
    """Bidirectional GRU, optionally stacked; each state is [forward; backward]."""

    def __init__(self, params, prefix, input_dim, hidden_dim, layers=1):
        self.hidden_dim = hidden_dim
        self.layers = []
        dim = input_dim
        for k in range(layers):
            p = f"{prefix}.l{k}" if layers > 1 else prefix
            self.layers.append((GruCell(params, f"{p}.fwd", dim, hidden_dim),
                                GruCell(params, f"{p}.bwd", dim, hidden_dim)))
            dim = 2 * hidden_dim

    def __call__(self, x, mask):
        """Run over ``x`` [B, n, d] with 0/1 ``mask`` [B, n].

        Returns ``(states [B, n, 2H], last_forward [B, H], first_backward [B, H])``
        where ``last_forward`` is the forward state at each sequence's final real
        token and ``first_backward`` the backward state at position 0.
        """
        mask = np.asarray(mask, dtype=bool)
        B, n, _ = x.shape
        for fwd, bwd in self.layers:
            flat = ad.reshape(x, (B * n, x.shape[2]))
            outs = []
            for cell, reverse in ((fwd, False), (bwd, True)):
                xp = ad.reshape(cell.project(flat), (B, n, 3 * cell.hidden_dim))
                outs.append(_run_direction(cell, xp, mask, reverse))
            (f_states, f_last), (b_states, _) = outs
            x = ad.concat([ad.stack(f_states, axis=1), ad.stack(b_states, axis=1)], axis=2)
        return x, f_last, b_states[0]
