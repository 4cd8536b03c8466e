"""Model and training configuration, read from flat ``key = value`` files."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@dataclass
class TrainConfig:
    # model
    hidden_dim: int = 256
    emb_dim: int = 300
    encoder_layers: int = 1
    question_summary: str = "concat"  # or "forward"
    pointer_enabled: bool = True
    coverage_enabled: bool = True
    train_embeddings: bool = False
    # optimisation
    batch_size: int = 50
    max_iterations: int = 15000
    adadelta_rho: float = 0.95
    adadelta_eps: float = 1e-6
    learning_rate: float = 1.0
    clip_norm: float = 5.0  # 0 disables clipping
    seed: int = 0
    dtype: str = "float32"
    checkpoint_every: int = 500
    keep_checkpoints: int = 3
    log_every: int = 50
    # data and decoding
    max_vocab: int = 30000
    max_passage_len: int = 200
    max_answer_len: int = 50
    rouge_beta: float = 1.2
    selection_threshold: float = 0.7
    beam_size: int = 0  # 0 or 1 means greedy

    def __post_init__(self):
        self.validate()

    def validate(self):
        positive = ("hidden_dim", "emb_dim", "encoder_layers", "batch_size", "max_iterations",
                    "adadelta_eps", "learning_rate", "checkpoint_every", "keep_checkpoints",
                    "log_every", "max_passage_len", "max_answer_len", "rouge_beta")
        for key in positive:
            if getattr(self, key) <= 0:
                raise ConfigError(key, f"must be positive, got {getattr(self, key)}")
        if not 0 < self.adadelta_rho < 1:
            raise ConfigError("adadelta_rho", f"must lie in (0, 1), got {self.adadelta_rho}")
        if self.clip_norm < 0:
            raise ConfigError("clip_norm", "must be >= 0")
        if self.max_vocab <= 4:
            raise ConfigError("max_vocab", "must exceed 4")
        if self.question_summary not in ("concat", "forward"):
            raise ConfigError("question_summary", "must be 'concat' or 'forward'")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype", "must be float32 or float64")
        if self.beam_size < 0:
            raise ConfigError("beam_size", "must be >= 0")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(key, "unknown key")
        return cls(**values)

    @classmethod
    def parse(cls, text, base=None):
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        base = base or cls()
        types = {f.name: f.type for f in fields(cls)}
        values = base.to_dict()
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (part.strip() for part in line.partition("="))
            if not sep:
                raise ConfigError(key, "expected key = value")
            if key not in types:
                raise ConfigError(key, "unknown key")
            values[key] = _coerce(key, types[key], value)
        return cls(**values)

    @classmethod
    def load(cls, path, base=None):
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read(), base)

    def dumps(self):
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.to_dict().items())


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(key, typ, value):
    try:
        if typ in (bool, "bool"):
            low = value.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(value)
        if typ in (int, "int"):
            return int(value)
        if typ in (float, "float"):
            return float(value)
        return value
    except ValueError:
        raise ConfigError(key, f"cannot parse {value!r} as {typ}") from None
