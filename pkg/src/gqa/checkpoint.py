"""Portable binary checkpoints.

Layout (all integers little-endian unsigned 32-bit)::

    b"GQA1"
    header_len, header (UTF-8 JSON: config snapshot, vocabulary, iteration, ...)
    tensor_count
    per tensor: name_len, name (UTF-8), ndim, dims..., float32 values (row-major)
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .model import GQAModel
from .text import RESERVED, Vocabulary

MAGIC = b"GQA1"
_U32 = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: TrainConfig
    tensors: dict                                # name -> float32 ndarray
    header: dict = field(default_factory=dict)   # everything besides the config

    @property
    def vocab_words(self):
        return self.header.get("vocab")

    @property
    def iteration(self):
        return self.header.get("iteration", 0)


def save_checkpoint(path, config, tensors, header=None):
    header = dict(header or {})
    header["config"] = config.to_dict()
    blob = json.dumps(header, ensure_ascii=False).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_U32.pack(len(blob)))
        fh.write(blob)
        fh.write(_U32.pack(len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(getattr(arr, "data", arr))
            raw = name.encode("utf-8")
            fh.write(_U32.pack(len(raw)))
            fh.write(raw)
            fh.write(_U32.pack(arr.ndim))
            for d in arr.shape:
                fh.write(_U32.pack(d))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    os.replace(tmp, path)


def _read(fh, n):
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint")
    return data


def _u32(fh):
    return _U32.unpack(_read(fh, 4))[0]


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        header = json.loads(_read(fh, _u32(fh)).decode("utf-8"))
        tensors = {}
        for _ in range(_u32(fh)):
            name = _read(fh, _u32(fh)).decode("utf-8")
            shape = tuple(_u32(fh) for _ in range(_u32(fh)))
            count = int(np.prod(shape)) if shape else 1
            tensors[name] = np.frombuffer(_read(fh, 4 * count), dtype="<f4").reshape(shape).copy()
    config = TrainConfig.from_dict(header.pop("config"))
    return Checkpoint(config=config, tensors=tensors, header=header)


def save_model(path, model, vocab, iteration=0, optimizer=None, extra=None):
    tensors = {name: t.data for name, t in model.params.items()}
    if optimizer is not None:
        tensors.update(optimizer.state_tensors())
    header = {"vocab": vocab.words[len(RESERVED):], "iteration": iteration}
    header.update(extra or {})
    save_checkpoint(path, model.config, tensors, header)


def model_from_checkpoint(ckpt, config=None):
    """Rebuild a model (and its vocabulary) from a loaded checkpoint."""
    config = config or ckpt.config
    vocab = Vocabulary(ckpt.vocab_words or [])
    model = GQAModel(config, len(vocab))
    for name, t in model.params.items():
        if name not in ckpt.tensors:
            raise CheckpointError(f"checkpoint lacks parameter {name}")
        src = ckpt.tensors[name]
        if src.shape != t.shape:
            raise CheckpointError(f"parameter {name}: checkpoint shape {src.shape}, model {t.shape}")
        t.data = src.astype(t.dtype)
    return model, vocab


def load_model(path, config=None):
    ckpt = load_checkpoint(path)
    model, vocab = model_from_checkpoint(ckpt, config)
    return model, vocab, ckpt
