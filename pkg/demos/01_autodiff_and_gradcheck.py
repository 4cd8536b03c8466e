"""Reverse-mode autodiff in a few lines, and how the gradients are checked.

Run:  python demos/01_autodiff_and_gradcheck.py
"""

import numpy as np

from gqa import autodiff as ad
from gqa.autodiff import Tape, Tensor
from gqa.gradcheck import check_gradients, numerical_grad
from gqa.layers import GruCell, Params

rng = np.random.default_rng(0)

# Tensors that should receive gradients are created with requires_grad=True.
W = Tensor(rng.normal(size=(3, 2)), requires_grad=True, name="W")
x = Tensor(rng.normal(size=(4, 3)))

# Operations run inside a Tape are recorded in execution order ...
with Tape() as tape:
    y = ad.tanh(ad.matmul(x, W))           # [4, 2]
    p = ad.softmax(y, axis=1)              # each row sums to 1
    loss = ad.sum(ad.mul(p, p))
print("recorded operations:", len(tape))

# ... and backward() replays them in reverse, filling W.grad.
tape.backward(loss)
print("dloss/dW =\n", W.grad)

# Central finite differences agree with the analytic gradient.
fd = numerical_grad(lambda: ad.sum(ad.mul(ad.softmax(ad.tanh(ad.matmul(x, W)), axis=1),
                                          ad.softmax(ad.tanh(ad.matmul(x, W)), axis=1))), W)
print("finite differences =\n", fd)
print("max abs difference:", np.abs(fd - W.grad).max())

# No broadcasting except scalar scaling: a bias row is added explicitly.
b = Tensor(np.ones(2))
print("add_bias:", ad.add_bias(ad.matmul(x, W), b).shape)
try:
    ad.add(ad.matmul(x, W), b)
except ad.DimensionError as err:
    print("add refuses to broadcast:", err)

# The same checker runs over whole layers.  Here a GRU cell unrolled 5 steps.
params = Params(rng)
cell = GruCell(params, "demo", input_dim=3, hidden_dim=4)
xs = [Tensor(rng.normal(size=(2, 3))) for _ in range(5)]


def unrolled():
    h = Tensor(np.zeros((2, 4)))
    for xt in xs:
        h = cell(xt, h)
    return ad.sum(ad.mul(h, h))


for name, err in check_gradients(unrolled, params).items():
    print(f"  {name:12s} relative error {err:.2e}")
