"""Run configuration: one validated, serializable record per experiment.

The configuration names the architecture preset, pooling kind, string
embedding, loss, optimizer and its hyperparameters, augmentation
switch, seed, and iteration budget.  It is written into every
checkpoint and report, so any published number can be traced back to
the exact setup that produced it.  Binary cross entropy requires PHOC
labels; the count- and real-valued embeddings train with the cosine
loss only.
"""

import json
from dataclasses import dataclass, asdict
from typing import Optional

from wordspot.embeddings import DEFAULT_LEVELS, EMBEDDING_KINDS, check_levels
from wordspot.errors import ConfigError
from wordspot.ioutil import atomic_write_text
from wordspot.optim import (
    OPTIMIZER_KINDS,
    OptimizerConfig,
    default_learning_rate,
)

ARCHITECTURES = ("phocnet-mini", "phocnet-full", "custom")
POOLINGS = ("tpp", "spp")
LOSS_KINDS = ("bce", "cosine")

_OPTIMIZER_ALIASES = {"sgd": "sgd_momentum", "sgd_momentum": "sgd_momentum",
                      "adam": "adam"}


@dataclass
class RunConfig:
    arch: str = "phocnet-mini"
    custom_spec: Optional[dict] = None
    pooling: str = "tpp"
    embedding: str = "phoc"
    levels: tuple = DEFAULT_LEVELS
    dct_coeffs: int = 3
    loss: str = "bce"
    optimizer: str = "adam"
    learning_rate: Optional[float] = None
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-5
    lr_step: int = 70000
    lr_divisor: float = 10.0
    augment: bool = True
    seed: int = 0
    iterations: int = 2000
    batch_size: int = 10
    eval_every: int = 0
    log_every: int = 10

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ConfigError("unknown architecture %r (choose from %s)"
                              % (self.arch, ", ".join(ARCHITECTURES)))
        if self.arch == "custom" and not self.custom_spec:
            raise ConfigError("custom architecture needs a network spec")
        if self.pooling not in POOLINGS:
            raise ConfigError("unknown pooling %r" % (self.pooling,))
        if self.embedding not in EMBEDDING_KINDS:
            raise ConfigError("unknown embedding %r" % (self.embedding,))
        try:
            self.levels = check_levels(self.levels)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.dct_coeffs < 1:
            raise ConfigError("dct_coeffs must be positive")
        if self.loss not in LOSS_KINDS:
            raise ConfigError("unknown loss %r (choose from %s)"
                              % (self.loss, ", ".join(LOSS_KINDS)))
        if self.loss == "bce" and self.embedding != "phoc":
            raise ConfigError(
                "the binary cross entropy loss needs binary labels: "
                "embedding %r trains with the cosine loss only" % (self.embedding,))
        try:
            self.optimizer = _OPTIMIZER_ALIASES[self.optimizer]
        except KeyError:
            raise ConfigError("unknown optimizer %r (choose from %s)"
                              % (self.optimizer, ", ".join(_OPTIMIZER_ALIASES))) from None
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise ConfigError("learning rate must be positive")
        if self.iterations < 0:
            raise ConfigError("iteration budget must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch size must be at least 1")
        if self.lr_step < 1:
            raise ConfigError("lr_step must be at least 1")

    def resolved_learning_rate(self):
        if self.learning_rate is not None:
            return self.learning_rate
        return default_learning_rate(self.optimizer, self.loss)

    def optimizer_config(self):
        return OptimizerConfig(
            kind=self.optimizer,
            learning_rate=self.resolved_learning_rate(),
            momentum=self.momentum,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            weight_decay=self.weight_decay,
            lr_schedule=((self.lr_step, self.lr_divisor),),
        )

    def embed_activation(self):
        """Activation giving the attribute estimate for this loss."""
        return "sigmoid" if self.loss == "bce" else "normalize"

    def to_dict(self):
        d = asdict(self)
        d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError("unknown config keys: %s" % ", ".join(sorted(unknown)))
        if "levels" in d:
            d["levels"] = tuple(d["levels"])
        return cls(**d)


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config %s is not valid JSON: %s" % (path, exc)) from exc
    if not isinstance(data, dict):
        raise ConfigError("config %s must hold a JSON object" % path)
    return RunConfig.from_dict(data)


def save_config(path, config):
    atomic_write_text(path, json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
