"""Loss functions with analytic gradients.

Each loss takes the network's raw output batch and the label batch and
returns a ``LossValue``: the scalar loss summed over the batch plus the
gradient with respect to the raw output.  The binary cross entropy is
fused with the sigmoid (inputs are pre-activation scores, the gradient
is ``sigmoid(o) - y``), and the cosine loss normalizes internally
(inputs are pre-normalization outputs, labels of any positive norm).
"""

from dataclasses import dataclass

import numpy as np

EPS_NORM = 1e-12


@dataclass
class LossValue:
    """Batch loss (summed over samples) and gradient w.r.t. the output."""

    loss: float
    grad: np.ndarray


def _as_batch(o, y, name):
    o = np.asarray(o, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if o.shape != y.shape:
        raise ValueError("%s: output shape %r does not match label shape %r"
                         % (name, o.shape, y.shape))
    squeeze = o.ndim == 1
    if squeeze:
        o = o[None, :]
        y = y[None, :]
    elif o.ndim != 2:
        raise ValueError("%s: expected 1-d or 2-d arrays, got %d-d" % (name, o.ndim))
    return o, y, squeeze


def bce_loss(o, y):
    """Binary cross entropy of sigmoid(o) against binary labels y.

    Computed in the fused softplus form
    ``max(o,0) - o*y + log(1 + exp(-|o|))``, which is exact and stable
    for any magnitude of o.  Gradient: ``sigmoid(o) - y``.
    """
    o, y, squeeze = _as_batch(o, y, "bce_loss")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("bce_loss: labels must be binary (0 or 1)")
    # non-finite scores propagate as a non-finite loss (the train loop turns
    # that into a diagnostic) instead of warning here
    with np.errstate(invalid="ignore", over="ignore"):
        loss = float(np.sum(np.maximum(o, 0.0) - o * y + np.log1p(np.exp(-np.abs(o)))))
        grad = _sigmoid(o) - y
    return LossValue(loss, grad[0] if squeeze else grad)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def normalize_output(o):
    """Project a vector (or batch of rows) onto the unit sphere."""
    o = np.asarray(o, dtype=np.float64)
    norms = np.linalg.norm(o, axis=-1, keepdims=True)
    if np.any(norms <= EPS_NORM):
        raise ValueError("degenerate output: norm below %g" % EPS_NORM)
    return o / norms


def cosine_loss(o, y):
    """Sum over the batch of ``1 - cos(y_i, o_i)``.

    Labels are normalized internally, so count-valued or real-valued
    label vectors work as long as their norm is positive.  The loss is
    invariant to positive scaling of ``o``.
    """
    o, y, squeeze = _as_batch(o, y, "cosine_loss")
    y_norms = np.linalg.norm(y, axis=1, keepdims=True)
    if np.any(y_norms == 0.0):
        raise ValueError("zero-norm label")
    o_norms = np.linalg.norm(o, axis=1, keepdims=True)
    if np.any(o_norms <= EPS_NORM):
        raise ValueError("degenerate output: norm below %g" % EPS_NORM)
    u = y / y_norms
    o_hat = o / o_norms
    cos = np.sum(u * o_hat, axis=1, keepdims=True)
    loss = float(np.sum(1.0 - cos))
    grad = -(u - cos * o_hat) / o_norms
    return LossValue(loss, grad[0] if squeeze else grad)


def euclidean_loss(y_hat, y):
    """Half the summed squared distances; gradient is ``y_hat - y``."""
    y_hat, y, squeeze = _as_batch(y_hat, y, "euclidean_loss")
    diff = y_hat - y
    loss = 0.5 * float(np.sum(diff * diff))
    return LossValue(loss, diff[0] if squeeze else diff)


LOSSES = {"bce": bce_loss, "cosine": cosine_loss, "euclidean": euclidean_loss}
