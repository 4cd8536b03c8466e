"""Central finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from .autodiff import Tape


def numerical_grad(fn, tensor, step=1e-4):
    """Central-difference estimate of d fn() / d tensor, perturbing in place."""
    data = tensor.data
    grad = np.zeros_like(data)
    flat, gflat = data.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(fn().data)
        flat[i] = orig - step
        lo = float(fn().data)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def analytic_grads(fn, tensors):
    for t in tensors:
        t.zero_grad()
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]


def relative_error(analytic, numeric):
    """Norm-wise relative error, 0 when both gradients vanish."""
    diff = np.linalg.norm(analytic - numeric)
    denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    return 0.0 if denom == 0 else float(diff / denom)


def check_gradients(fn, params, step=1e-4):
    """Map each named parameter to the relative error between analytic and FD gradients.

    ``fn`` is re-evaluated from scratch for every perturbation, so it must be a
    pure function of the parameter values.
    """
    names = list(params)
    tensors = [params[n] for n in names]
    grads = analytic_grads(fn, tensors)
    return {name: relative_error(g, numerical_grad(fn, t, step))
            for name, t, g in zip(names, tensors, grads)}
