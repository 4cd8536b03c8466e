"""Dense tensors with define-by-run reverse-mode differentiation.

Operations executed while a :class:`Tape` is active are recorded in execution
order; :meth:`Tape.backward` replays them in reverse, accumulating gradients
into every leaf tensor created with ``requires_grad=True``.  Outside a tape no
graph is built, which is what inference uses.

Shapes are explicit: apart from multiplying by a scalar, no operation
broadcasts.  Bias rows and per-row gates are handled by the dedicated
:func:`add_bias` and :func:`expand` operations.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ContractError",
    "DimensionError",
    "Tape",
    "Tensor",
    "add",
    "add_bias",
    "backward",
    "blend",
    "bmm",
    "concat",
    "elementwise",
    "embedding",
    "exp",
    "expand",
    "getitem",
    "gru_step",
    "log",
    "matmul",
    "mul",
    "reshape",
    "scale",
    "scatter_add",
    "shift",
    "sigmoid",
    "softmax",
    "stack",
    "sub",
    "sum",
    "take_along",
    "tanh",
    "transpose",
]


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


_tapes: list["Tape"] = []


def _active_tape():
    return _tapes[-1] if _tapes else None


class Tensor:
    """An n-dimensional real array that can take part in a recorded computation."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_leaf")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._leaf = True

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return shift(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return shift(self, -other)

    def __rsub__(self, other):
        return shift(scale(self, -1.0), other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            if other.size == 1 and self.size != 1:
                return scale(self, other)
            if self.size == 1 and other.size != 1:
                return scale(other, self)
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


class Tape:
    """Ordered record of the operations executed while it is active.

    Usage::

        with Tape() as tape:
            loss = model_loss(...)
        tape.backward(loss)
    """

    def __init__(self):
        self.records = []

    def __enter__(self):
        _tapes.append(self)
        return self

    def __exit__(self, *exc):
        _tapes.remove(self)
        return False

    def __len__(self):
        return len(self.records)

    def record(self, inputs, output, grad_fn):
        self.records.append((inputs, output, grad_fn))

    def backward(self, loss):
        """Accumulate d(loss)/d(leaf) into ``leaf.grad`` and clear the tape."""
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not self.records:
            raise ContractError("backward called on an empty tape")
        pending = {id(loss): np.ones_like(loss.data)}
        for inputs, output, grad_fn in reversed(self.records):
            g = pending.pop(id(output), None)
            if g is None:
                continue
            for inp, ig in zip(inputs, grad_fn(g)):
                if ig is None or not inp.requires_grad:
                    continue
                if inp._leaf:
                    inp.grad = ig.copy() if inp.grad is None else inp.grad + ig
                else:
                    key = id(inp)
                    prev = pending.get(key)
                    pending[key] = ig if prev is None else prev + ig
        self.records = []


def backward(loss):
    """Run the backward pass of the innermost active tape."""
    tape = _active_tape()
    if tape is None:
        raise ContractError("backward needs an active Tape")
    tape.backward(loss)


def _tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(data, inputs, grad_fn):
    """Wrap an op result, recording it when an input tracks gradients."""
    out = Tensor.__new__(Tensor)
    out.data, out.grad, out.requires_grad, out.name, out._leaf = data, None, False, None, True
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._leaf = False
        tape.record(inputs, out, grad_fn)
    return out


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


# -- linear algebra ------------------------------------------------------------

def matmul(a, b):
    """Matrix product of two 2-D tensors."""
    a, b = _tensor(a), _tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def grad_fn(g):
        return (g @ bd.T if a.requires_grad else None,
                ad.T @ g if b.requires_grad else None)

    return _emit(ad @ bd, (a, b), grad_fn)


def bmm(a, b):
    """Batched matrix product: ``[B, m, k] x [B, k, n] -> [B, m, n]``."""
    a, b = _tensor(a), _tensor(b)
    if (a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0]
            or a.shape[2] != b.shape[1]):
        raise DimensionError(f"bmm: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def grad_fn(g):
        return (g @ bd.transpose(0, 2, 1) if a.requires_grad else None,
                ad.transpose(0, 2, 1) @ g if b.requires_grad else None)

    return _emit(ad @ bd, (a, b), grad_fn)


def transpose(x):
    """Swap the last two axes."""
    x = _tensor(x)
    if x.ndim < 2:
        raise DimensionError(f"transpose needs at least 2 axes, got {x.shape}")
    return _emit(np.swapaxes(x.data, -1, -2), (x,),
                 lambda g: (np.swapaxes(g, -1, -2),))


def reshape(x, shape):
    x = _tensor(x)
    old = x.shape
    try:
        data = x.data.reshape(shape)
    except ValueError as err:
        raise DimensionError(f"reshape: {old} -> {shape}: {err}") from None
    return _emit(data, (x,), lambda g: (g.reshape(old),))


# -- elementwise ---------------------------------------------------------------

def add(a, b):
    a, b = _tensor(a), _tensor(b)
    _same_shape("add", a, b)
    return _emit(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    a, b = _tensor(a), _tensor(b)
    _same_shape("sub", a, b)
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    a, b = _tensor(a), _tensor(b)
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data

    def grad_fn(g):
        return (g * bd if a.requires_grad else None,
                g * ad if b.requires_grad else None)

    return _emit(ad * bd, (a, b), grad_fn)


def scale(x, c):
    """Multiply by a scalar, given as a number or a one-element tensor."""
    x = _tensor(x)
    if isinstance(c, Tensor):
        if c.size != 1:
            raise DimensionError(f"scale: factor must have one element, got {c.shape}")
        xd, cv = x.data, c.data.reshape(())
        cshape = c.shape

        def grad_fn(g):
            return (g * cv if x.requires_grad else None,
                    np.sum(g * xd).reshape(cshape) if c.requires_grad else None)

        return _emit(xd * cv, (x, c), grad_fn)
    c = float(c)
    return _emit(x.data * c, (x,), lambda g: (g * c,))


def shift(x, c):
    """Add a scalar constant."""
    x = _tensor(x)
    return _emit(x.data + float(c), (x,), lambda g: (g,))


def add_bias(x, b):
    """Add a 1-D bias along the last axis of ``x``."""
    x, b = _tensor(x), _tensor(b)
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"add_bias: bias {b.shape} does not fit {x.shape}")
    lead = tuple(range(x.ndim - 1))
    return _emit(x.data + b.data, (x, b),
                 lambda g: (g, g.sum(axis=lead) if b.requires_grad else None))


def expand(x, size):
    """Repeat a trailing axis of extent 1 to ``size``."""
    x = _tensor(x)
    if x.shape[-1] != 1:
        raise DimensionError(f"expand: last axis must be 1, got {x.shape}")
    shape = x.shape[:-1] + (size,)
    return _emit(np.broadcast_to(x.data, shape).copy(), (x,),
                 lambda g: (g.sum(axis=-1, keepdims=True),))


def tanh(x):
    x = _tensor(x)
    y = np.tanh(x.data)
    return _emit(y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(v):
    # 1 / (1 + e^-v) written as exp(-log(1 + e^-v)) so nothing overflows.
    return np.exp(-np.logaddexp(0.0, -v))


def sigmoid(x):
    x = _tensor(x)
    y = _sigmoid(x.data)
    return _emit(y, (x,), lambda g: (g * y * (1.0 - y),))


def exp(x):
    x = _tensor(x)
    y = np.exp(x.data)
    return _emit(y, (x,), lambda g: (g * y,))


def log(x, floor=None):
    """Natural log; values below ``floor`` are clamped and pass no gradient."""
    x = _tensor(x)
    xd = x.data
    if floor is None:
        return _emit(np.log(xd), (x,), lambda g: (g / xd,))
    clamped = np.maximum(xd, floor)
    live = xd >= floor
    return _emit(np.log(clamped), (x,), lambda g: (np.where(live, g / clamped, 0.0),))


def blend(mask, a, b):
    """``mask * a + (1 - mask) * b`` for a constant 0/1 array ``mask``."""
    a, b = _tensor(a), _tensor(b)
    _same_shape("blend", a, b)
    m = np.asarray(mask, dtype=a.dtype)
    if m.shape != a.shape:
        m = np.broadcast_to(m, a.shape)
    keep = 1.0 - m
    return _emit(m * a.data + keep * b.data, (a, b),
                 lambda g: (g * m if a.requires_grad else None,
                            g * keep if b.requires_grad else None))


_ELEMENTWISE = {"tanh": tanh, "sigmoid": sigmoid, "add": add, "mul": mul,
                "scale": scale, "sub": sub, "exp": exp, "log": log}


def elementwise(op, *args):
    """Dispatch to a named elementwise operation (``tanh``, ``sigmoid``, ``add``...)."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# -- recurrent -----------------------------------------------------------------

def gru_step(xp, h, U_zr, U_n):
    """One GRU update from a pre-computed input projection, as a single op.

    ``xp`` [B, 3H] holds ``x W + b`` for the update gate, reset gate and
    candidate.  With ``z, r = sigmoid(xp[:, :2H] + h U_zr)`` and
    ``n = tanh(xp[:, 2H:] + (r * h) U_n)`` the result is ``h + z * (n - h)``.
    Fusing the step keeps the recorded graph small; the backward pass is the
    chain rule written out by hand.
    """
    xp, h, U_zr, U_n = _tensor(xp), _tensor(h), _tensor(U_zr), _tensor(U_n)
    H = h.shape[-1] if h.ndim == 2 else -1
    if (h.ndim != 2 or xp.shape != (h.shape[0], 3 * H) or U_zr.shape != (H, 2 * H)
            or U_n.shape != (H, H)):
        raise DimensionError(f"gru_step: xp {xp.shape}, h {h.shape}, U_zr {U_zr.shape}, "
                             f"U_n {U_n.shape} do not fit together")
    hd = h.data
    zr = _sigmoid(xp.data[:, :2 * H] + hd @ U_zr.data)
    z, r = zr[:, :H], zr[:, H:]
    rh = r * hd
    n = np.tanh(xp.data[:, 2 * H:] + rh @ U_n.data)
    out = hd + z * (n - hd)

    def grad_fn(g):
        dm = g * z * (1.0 - n * n)
        drh = dm @ U_n.data.T
        da = np.concatenate([g * (n - hd), drh * hd], axis=1) * zr * (1.0 - zr)
        dh = g * (1.0 - z) + drh * r + da @ U_zr.data.T
        return (np.concatenate([da, dm], axis=1), dh,
                hd.T @ da if U_zr.requires_grad else None,
                rh.T @ dm if U_n.requires_grad else None)

    return _emit(out, (xp, h, U_zr, U_n), grad_fn)


# -- reductions and normalisation ---------------------------------------------

def sum(x, axis=None):  # noqa: A001 - mirrors numpy naming
    x = _tensor(x)
    shape = x.shape

    def grad_fn(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit(np.asarray(x.data.sum(axis=axis)), (x,), grad_fn)


def softmax(x, axis=-1, mask=None):
    """Max-subtracted softmax; positions where ``mask`` is false get weight 0."""
    x = _tensor(x)
    z = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != z.shape:
            raise DimensionError(f"softmax: mask {mask.shape} does not fit {z.shape}")
        z = np.where(mask, z, -np.inf)
    top = np.max(z, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.exp(z - top)
    total = e.sum(axis=axis, keepdims=True)
    y = e / np.where(total > 0, total, 1.0)

    def grad_fn(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _emit(y, (x,), grad_fn)


# -- structure -----------------------------------------------------------------

def concat(tensors, axis=0):
    tensors = [_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat of nothing")
    ndim = tensors[0].ndim
    ax = axis % ndim
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[i] != ref[i] for i in range(ndim) if i != ax):
            raise DimensionError(f"concat along {axis}: shapes {ref} and {t.shape}")
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def grad_fn(g):
        return np.split(g, bounds, axis=ax)

    return _emit(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), grad_fn)


def stack(tensors, axis=0):
    tensors = [_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != ref:
            raise DimensionError(f"stack: shapes {ref} and {t.shape}")
    n = len(tensors)

    def grad_fn(g):
        return [np.take(g, i, axis=axis) for i in range(n)]

    return _emit(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), grad_fn)


def getitem(x, index):
    """Basic (slice/integer) indexing."""
    x = _tensor(x)
    shape, dtype = x.shape, x.dtype

    def grad_fn(g):
        full = np.zeros(shape, dtype=dtype)
        full[index] = g
        return (full,)

    return _emit(x.data[index].copy(), (x,), grad_fn)


def take_along(x, index):
    """``out[b] = x[b, index[b]]`` for a 2-D ``x`` and integer ``index``."""
    x = _tensor(x)
    idx = np.asarray(index, dtype=np.int64)
    if x.ndim != 2 or idx.shape != (x.shape[0],):
        raise DimensionError(f"take_along: index {idx.shape} does not fit {x.shape}")
    rows = np.arange(x.shape[0])
    shape, dtype = x.shape, x.dtype

    def grad_fn(g):
        full = np.zeros(shape, dtype=dtype)
        full[rows, idx] = g
        return (full,)

    return _emit(x.data[rows, idx], (x,), grad_fn)


def scatter_add(src, index, width):
    """``out[b, index[b, i]] += src[b, i]`` into a zero ``[B, width]`` array."""
    src = _tensor(src)
    idx = np.asarray(index, dtype=np.int64)
    if src.ndim != 2 or idx.shape != src.shape:
        raise DimensionError(f"scatter_add: index {idx.shape} does not fit {src.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= width):
        raise ContractError(f"scatter_add: index out of range for width {width}")
    rows = np.arange(src.shape[0])[:, None]
    out = np.zeros((src.shape[0], width), dtype=src.dtype)
    np.add.at(out, (np.broadcast_to(rows, idx.shape), idx), src.data)
    return _emit(out, (src,), lambda g: (g[rows, idx],))


def embedding(table, ids):
    """Look up rows of ``table`` for an integer array of ids."""
    table = _tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    shape, dtype = table.shape, table.dtype

    def grad_fn(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, shape[1]))
        return (full,)

    return _emit(table.data[ids], (table,), grad_fn)
