"""Loss, Adadelta, gradient clipping and the teacher-forced training loop."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Tape
from .config import TrainConfig

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name, step):
        super().__init__(f"non-finite gradient in parameter {name!r} at step {step}")
        self.name, self.step = name, step


def nll_loss(step_probs, mask=None, targets=None):
    """Mean negative log-likelihood of the gold words.

    ``step_probs`` is a list of T tensors.  Without ``targets`` each is [B] and
    already holds the probability of the gold word; with ``targets`` ([B, T] or
    [T]) each is a distribution ([B, W] or [W]) and the gold entry is gathered.
    ``mask`` [B, T] excludes padded steps.  Each example contributes the mean
    over its own steps; the result averages over examples.
    """
    if targets is not None:
        targets = np.asarray(targets)
        if targets.ndim == 1:
            targets = targets[None, :]
            step_probs = [ad.reshape(d, (1, -1)) for d in step_probs]
        if targets.shape[1] != len(step_probs):
            raise ContractError(f"{len(step_probs)} distributions for {targets.shape[1]} targets")
        step_probs = [ad.take_along(d, targets[:, t]) for t, d in enumerate(step_probs)]
    if not step_probs:
        raise ContractError("nll_loss needs at least one step")
    probs = ad.stack(step_probs, axis=1)
    B, T = probs.shape
    mask = np.ones((B, T), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != (B, T):
        raise ContractError(f"mask {mask.shape} does not match {B} x {T} steps")
    counts = np.maximum(mask.sum(axis=1, keepdims=True), 1)
    weights = (mask / counts / B).astype(probs.dtype)
    logp = ad.log(probs, floor=PROB_FLOOR)
    return ad.scale(ad.sum(ad.mul(logp, ad.Tensor(weights))), -1.0)


def perplexity(mean_nll):
    return math.exp(mean_nll)


class Adadelta:
    """Adadelta with a learning-rate multiplier on the computed step."""

    def __init__(self, params, rho=0.95, eps=1e-6, lr=1.0):
        self.params = params
        self.rho, self.eps, self.lr = rho, eps, lr
        self.eg2 = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.edx2 = {k: np.zeros_like(p.data) for k, p in params.items()}

    @classmethod
    def from_config(cls, params, config):
        return cls(params, config.adadelta_rho, config.adadelta_eps, config.learning_rate)

    def step(self, iteration=None):
        """Update every parameter that received a gradient."""
        rho, eps = self.rho, self.eps
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(name, iteration)
            eg2 = self.eg2[name]
            eg2 *= rho
            eg2 += (1 - rho) * g * g
            dx = -np.sqrt(self.edx2[name] + eps) / np.sqrt(eg2 + eps) * g
            self.edx2[name] *= rho
            self.edx2[name] += (1 - rho) * dx * dx
            p.data += self.lr * dx

    def state_tensors(self):
        out = {}
        for k in self.params:
            out[f"adadelta.eg2/{k}"] = self.eg2[k]
            out[f"adadelta.edx2/{k}"] = self.edx2[k]
        return out

    def load_state_tensors(self, tensors):
        for k, p in self.params.items():
            self.eg2[k] = tensors[f"adadelta.eg2/{k}"].astype(p.dtype)
            self.edx2[k] = tensors[f"adadelta.edx2/{k}"].astype(p.dtype)


def adadelta_update(params, grads, state, config):
    """Functional form: apply one update given explicit gradients.

    ``state`` is an :class:`Adadelta` built over the same ``params``.
    """
    for name, g in grads.items():
        params[name].grad = g
    state.rho, state.eps, state.lr = (config.adadelta_rho, config.adadelta_eps,
                                      config.learning_rate)
    state.step()
    return params


def clip_grad_norm(params, max_norm):
    """Scale all gradients so their global norm is at most ``max_norm``; returns the old norm."""
    grads = [p.grad for p in params.values() if p.grad is not None]
    norm = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads))
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / norm
        for g in grads:
            g *= factor
    return norm


@dataclass
class TrainResult:
    model: object
    optimizer: Adadelta
    losses: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)


class BatchSchedule:
    """Seeded, resumable mini-batch order: epoch ``e`` uses permutation ``rng(seed, e)``."""

    def __init__(self, n, batch_size, seed):
        if n == 0:
            raise ContractError("cannot train on an empty dataset")
        self.n, self.batch_size, self.seed = n, batch_size, seed
        self.per_epoch = math.ceil(n / batch_size)
        self._epoch, self._perm = None, None

    def indices(self, iteration):
        """Example indices for 0-based ``iteration``."""
        epoch, j = divmod(iteration, self.per_epoch)
        if epoch != self._epoch:
            self._perm = np.random.default_rng([self.seed, epoch]).permutation(self.n)
            self._epoch = epoch
        return self._perm[j * self.batch_size:(j + 1) * self.batch_size]


def write_loss_csv(path, losses):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss", "perplexity"])
        for i, loss in enumerate(losses, 1):
            w.writerow([i, repr(loss), repr(math.exp(min(loss, 700.0)))])


def train(examples, config, vocab=None, out_dir=None, resume=None, model=None,
          callback=None):
    """Teacher-forced training with Adadelta.

    ``resume`` is a loaded :class:`~gqa.checkpoint.Checkpoint`; training then
    continues after its iteration with its parameters, optimizer state and loss
    history.  Checkpoints (needing ``vocab``) go to ``out_dir`` every
    ``config.checkpoint_every`` iterations.  ``callback(iteration, loss, model)``
    runs after each update and may return True to stop early.
    """
    from .checkpoint import model_from_checkpoint, save_model
    from .model import GQAModel, make_batch

    examples = list(examples)
    schedule = BatchSchedule(len(examples), config.batch_size, config.seed)
    losses, start = [], 0
    if resume is not None:
        model, _ = model_from_checkpoint(resume, config)
        start = resume.iteration
        losses = list(resume.header.get("losses", []))[:start]
    elif model is None:
        if vocab is None:
            raise ContractError("train needs a vocabulary or a model")
        model = GQAModel(config, len(vocab))
    params = model.params.trainable()
    opt = Adadelta.from_config(params, config)
    if resume is not None:
        opt.load_state_tensors(resume.tensors)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    result = TrainResult(model=model, optimizer=opt, losses=losses)

    for it in range(start, config.max_iterations):
        batch = make_batch([examples[i] for i in schedule.indices(it)])
        for p in params.values():
            p.zero_grad()
        with Tape() as tape:
            loss = model.loss(batch)
        tape.backward(loss)
        if config.clip_norm > 0:
            clip_grad_norm(params, config.clip_norm)
        opt.step(it + 1)
        value = float(loss.data)
        losses.append(value)
        step = it + 1
        if step % config.log_every == 0:
            log.info("iteration %d loss %.4f ppl %.3f", step, value, math.exp(min(value, 700)))
        if out_dir is not None and step % config.checkpoint_every == 0:
            result.checkpoints.append(_write_checkpoint(out_dir, model, vocab, step, opt, losses,
                                                        config.keep_checkpoints, save_model))
        if callback is not None and callback(step, value, model):
            break

    if out_dir is not None:
        write_loss_csv(os.path.join(out_dir, "loss.csv"), losses)
        if vocab is not None:
            save_model(os.path.join(out_dir, "model.gqa"), model, vocab, len(losses), opt,
                       {"losses": losses})
    return result


def _write_checkpoint(out_dir, model, vocab, step, opt, losses, keep, save_model):
    if vocab is None:
        raise ContractError("writing checkpoints needs the vocabulary")
    path = os.path.join(out_dir, f"ckpt-{step:07d}.gqa")
    save_model(path, model, vocab, step, opt, {"losses": losses})
    old = sorted(f for f in os.listdir(out_dir) if f.startswith("ckpt-") and f.endswith(".gqa"))
    for f in old[:-keep]:
        os.remove(os.path.join(out_dir, f))
    write_loss_csv(os.path.join(out_dir, "loss.csv"), losses)
    return path


def latest_checkpoint(out_dir):
    found = sorted(f for f in os.listdir(out_dir) if f.startswith("ckpt-") and f.endswith(".gqa"))
    return os.path.join(out_dir, found[-1]) if found else None


__all__ = ["Adadelta", "BatchSchedule", "NonFiniteGradient", "TrainConfig", "TrainResult",
           "adadelta_update", "clip_grad_norm", "latest_checkpoint", "nll_loss", "perplexity",
           "train", "write_loss_csv"]
