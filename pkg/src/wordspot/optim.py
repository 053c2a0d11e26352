"""Initialization, update rules, learning-rate schedule, and train loop.

Update rules operate in place on parameter arrays and keep their
accumulators in a per-parameter state dict, so the whole optimizer
state can be checkpointed as named arrays.  The train loop samples
mini-batches uniformly with replacement, groups samples of equal image
shape into sub-batches (gradients accumulate identically either way),
scales the summed batch gradient by 1/batch_size, and emits a trace of
(iteration, loss, optional mAP) rows.
"""

import math
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from wordspot.errors import ConfigError, DataError, NumericError
from wordspot.ioutil import atomic_write_text
from wordspot.nn.layers import he_normal

OPTIMIZER_KINDS = ("sgd_momentum", "adam")

# Initial learning rates from the original training setups, keyed by
# (optimizer, loss).  Adam uses 1e-4 regardless of the loss.
DEFAULT_LEARNING_RATES = {
    ("sgd_momentum", "bce"): 1e-4,
    ("sgd_momentum", "cosine"): 1e-2,
    ("adam", "bce"): 1e-4,
    ("adam", "cosine"): 1e-4,
}


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 1e-4
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-5
    decoupled_decay: bool = False
    # learning-rate schedule: divide by `divisor` once `iteration` is reached
    lr_schedule: tuple = ((70000, 10.0),)

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigError("unknown optimizer %r" % (self.kind,))
        if not self.learning_rate > 0:
            raise ConfigError("learning rate must be positive")
        for name in ("momentum", "beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError("%s must be in [0, 1), got %r" % (name, v))
        if self.weight_decay < 0:
            raise ConfigError("weight decay must be non-negative")
        self.lr_schedule = tuple(
            (int(step), float(div)) for step, div in self.lr_schedule
        )

    def to_dict(self):
        d = asdict(self)
        d["lr_schedule"] = [list(s) for s in self.lr_schedule]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["lr_schedule"] = tuple(tuple(s) for s in d.get("lr_schedule", ((70000, 10.0),)))
        return cls(**d)


def default_learning_rate(optimizer, loss):
    try:
        return DEFAULT_LEARNING_RATES[(optimizer, loss)]
    except KeyError:
        raise ConfigError("no default learning rate for optimizer %r with loss %r"
                          % (optimizer, loss)) from None


def he_init(shape, fan_in, rng):
    """Weights ~ N(0, 2/fan_in); use zeros for bias slots."""
    return he_normal(shape, fan_in, rng)


def lr_at(iteration, config):
    """Learning rate in effect at a 0-based iteration index."""
    if iteration < 0:
        raise ConfigError("iteration must be >= 0")
    lr = config.learning_rate
    for step, divisor in config.lr_schedule:
        if iteration >= step:
            lr /= divisor
    return lr


def sgd_momentum_step(value, grad, state, config, lr, weight_decay):
    """v <- momentum*v - lr*(grad + wd*value); value <- value + v (in place)."""
    if value.shape != grad.shape:
        raise ValueError("parameter shape %r does not match gradient shape %r"
                         % (value.shape, grad.shape))
    g = grad
    if weight_decay and not config.decoupled_decay:
        g = g + weight_decay * value
    v = state.get("v")
    if v is None:
        v = state["v"] = np.zeros_like(value)
    v *= config.momentum
    v -= lr * g
    if weight_decay and config.decoupled_decay:
        value -= lr * weight_decay * value
    value += v
    return value


def adam_step(value, grad, state, config, lr, weight_decay):
    """Bias-corrected Adam update, in place."""
    if value.shape != grad.shape:
        raise ValueError("parameter shape %r does not match gradient shape %r"
                         % (value.shape, grad.shape))
    g = grad
    if weight_decay and not config.decoupled_decay:
        g = g + weight_decay * value
    if "m" not in state:
        state["m"] = np.zeros_like(value)
        state["v"] = np.zeros_like(value)
        state["t"] = np.zeros((), dtype=np.float64)
    m, v = state["m"], state["v"]
    state["t"] += 1.0
    t = float(state["t"])
    m *= config.beta1
    m += (1.0 - config.beta1) * g
    v *= config.beta2
    v += (1.0 - config.beta2) * (g * g)
    m_hat = m / (1.0 - config.beta1 ** t)
    v_hat = v / (1.0 - config.beta2 ** t)
    if weight_decay and config.decoupled_decay:
        value -= lr * weight_decay * value
    value -= lr * m_hat / (np.sqrt(v_hat) + config.eps)
    return value


_STEP_FUNCTIONS = {"sgd_momentum": sgd_momentum_step, "adam": adam_step}


def apply_update(params, config, lr):
    """One optimizer step over a parameter list; biases skip weight decay."""
    step = _STEP_FUNCTIONS[config.kind]
    for p in params:
        wd = config.weight_decay if p.decay else 0.0
        step(p.value, p.grad, p.state, config, lr, wd)


class TrainState:
    """Iteration counter plus the rng streams the loop consumes."""

    def __init__(self, iteration, batch_rng, dropout_rng, augment_rng):
        self.iteration = iteration
        self.batch_rng = batch_rng
        self.dropout_rng = dropout_rng
        self.augment_rng = augment_rng

    @classmethod
    def fresh(cls, batch_seed, dropout_seed, augment_seed):
        return cls(0,
                   np.random.default_rng(batch_seed),
                   np.random.default_rng(dropout_seed),
                   np.random.default_rng(augment_seed))

    def rng_states(self):
        return {
            "batch": self.batch_rng.bit_generator.state,
            "dropout": self.dropout_rng.bit_generator.state,
            "augment": self.augment_rng.bit_generator.state,
        }

    @classmethod
    def from_rng_states(cls, iteration, states):
        state = cls.fresh(0, 0, 0)
        state.iteration = int(iteration)
        state.batch_rng.bit_generator.state = states["batch"]
        state.dropout_rng.bit_generator.state = states["dropout"]
        state.augment_rng.bit_generator.state = states["augment"]
        return state


@dataclass
class TracePoint:
    iteration: int
    loss: float
    map_value: Optional[float] = None


def train_loop(network, corpus, loss_fn, config, max_iterations, batch_size=10,
               state=None, augment_hook=None, eval_hook=None, eval_every=0,
               log_every=10):
    """Train ``network`` on ``corpus`` (a list of (image, label) pairs).

    Returns (trace, state).  ``augment_hook(image, rng) -> image`` runs
    per sampled image; ``eval_hook(network, iteration) -> mAP`` runs
    every ``eval_every`` iterations (and on the final one) and its value
    lands in the trace.  A non-finite batch loss aborts with a
    diagnostic.  Deterministic given the state's rng streams.
    """
    if not corpus:
        raise DataError("empty training corpus")
    if batch_size < 1:
        raise ConfigError("batch size must be >= 1")
    if state is None:
        state = TrainState.fresh(0, 1, 2)
    if max_iterations < state.iteration:
        raise ConfigError("max_iterations %d precedes the resumed iteration %d"
                          % (max_iterations, state.iteration))
    images = [np.asarray(im, dtype=np.float64) for im, _ in corpus]
    labels = [np.asarray(lb, dtype=np.float64) for _, lb in corpus]
    n = len(corpus)
    params = network.parameters()
    trace = []
    for iteration in range(state.iteration, max_iterations):
        idx = state.batch_rng.integers(0, n, size=batch_size)
        batch_images = []
        for i in idx:
            im = images[i]
            if augment_hook is not None:
                im = augment_hook(im, state.augment_rng)
            batch_images.append(im)
        groups = {}
        for j, im in enumerate(batch_images):
            groups.setdefault(im.shape, []).append(j)
        network.zero_grad()
        total_loss = 0.0
        for shape in groups:
            members = groups[shape]
            x = np.stack([batch_images[j] for j in members])[:, None, :, :]
            y = np.stack([labels[idx[j]] for j in members])
            out = network.forward(x, train=True, rng=state.dropout_rng)
            lv = loss_fn(out, y)
            total_loss += lv.loss
            network.backward(lv.grad)
        batch_loss = total_loss / batch_size
        if not math.isfinite(batch_loss):
            raise NumericError(
                "training diverged at iteration %d: batch loss is %r"
                % (iteration, batch_loss))
        for p in params:
            p.grad /= batch_size
        apply_update(params, config, lr_at(iteration, config))
        state.iteration = iteration + 1
        last = state.iteration == max_iterations
        map_value = None
        if eval_hook is not None and eval_every > 0 and (
                state.iteration % eval_every == 0 or last):
            map_value = eval_hook(network, state.iteration)
        logged = log_every > 0 and (state.iteration % log_every == 0 or last)
        if logged or map_value is not None:
            trace.append(TracePoint(state.iteration, batch_loss, map_value))
    return trace, state


TRACE_HEADER = "# wordspot-trace 1"


def write_trace(path, trace):
    lines = [TRACE_HEADER]
    for pt in trace:
        mv = "-" if pt.map_value is None else repr(float(pt.map_value))
        lines.append("%d\t%s\t%s" % (pt.iteration, repr(float(pt.loss)), mv))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_trace(path):
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != TRACE_HEADER:
        raise DataError("%s: not a trace file" % path)
    trace = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError("%s:%d: expected 3 tab-separated fields" % (path, ln))
        try:
            it = int(parts[0])
            loss = float(parts[1])
            mv = None if parts[2] == "-" else float(parts[2])
        except ValueError as exc:
            raise DataError("%s:%d: %s" % (path, ln, exc)) from exc
        trace.append(TracePoint(it, loss, mv))
    return trace
