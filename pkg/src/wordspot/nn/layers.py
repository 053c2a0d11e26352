"""Layers of the word-spotting CNNs, with hand-written backward passes.

Convolutional layers keep spatial size (3x3 kernels, padding 1); max
pooling halves it.  A pyramid pooling layer (grid-based or
horizontal-only) turns variable-size feature maps into fixed-length
vectors so the fully connected head never sees the input size.

Each layer caches whatever its backward pass needs during forward, so a
single layer instance must not run overlapping passes.  Parameter
gradients accumulate; call ``zero_grad`` between steps.
"""

import numpy as np

from wordspot.nn import kernels


class Parameter:
    """A trainable array with its gradient and optimizer state slots."""

    def __init__(self, name, value, decay=True):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.decay = decay
        self.state = {}

    @property
    def shape(self):
        return self.value.shape


def he_normal(shape, fan_in, rng, dtype=np.float64):
    """Zero-mean normal weights with variance 2/fan_in."""
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(dtype, copy=False)


def sigmoid(x):
    """Logistic function 1 / (1 + exp(-x)), stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(o):
    """Probabilities exp(o_i) / sum_j exp(o_j) along the last axis.

    Computed with max subtraction, so inputs of any magnitude yield
    finite outputs that sum to one.
    """
    o = np.asarray(o, dtype=np.float64)
    if o.size == 0:
        raise ValueError("softmax of empty input")
    shifted = o - o.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class Layer:
    """Base class; layers without parameters inherit the defaults."""

    def parameters(self):
        return []

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError


class Conv3x3(Layer):
    """3x3 convolution, stride 1, padding 1 (spatial size preserved)."""

    def __init__(self, c_in, c_out, name, rng, dtype=np.float64):
        self.c_in = c_in
        self.c_out = c_out
        fan_in = c_in * 9
        self.weight = Parameter(name + ".weight", he_normal((c_out, c_in, 3, 3), fan_in, rng, dtype))
        self.bias = Parameter(name + ".bias", np.zeros(c_out, dtype=dtype), decay=False)

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, train=False, rng=None):
        self._x = x
        return kernels.conv3x3_forward(x, self.weight.value, self.bias.value)

    def backward(self, grad_out):
        grad_x, grad_w, grad_b = kernels.conv3x3_backward(self._x, self.weight.value, grad_out)
        self.weight.grad += grad_w
        self.bias.grad += grad_b
        self._x = None
        return grad_x


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out):
        grad = np.where(self._mask, grad_out, 0.0)
        self._mask = None
        return grad


class MaxPool2x2(Layer):
    """2x2/stride-2 max pooling; trailing odd row/column dropped."""

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        out, self._argmax = kernels.maxpool2x2_forward(x)
        return out

    def backward(self, grad_out):
        grad = kernels.maxpool2x2_backward(self._shape, self._argmax, grad_out)
        self._argmax = None
        return grad


def _cell_bounds(total, parts):
    """Floor partition of ``total`` positions into ``parts`` cells."""
    return [(i * total // parts, (i + 1) * total // parts) for i in range(parts)]


class _PyramidPool(Layer):
    """Shared max-over-cells machinery for the two pyramid layers."""

    levels = ()

    def _cells(self, h, w):
        raise NotImplementedError

    def output_width(self, channels):
        raise NotImplementedError

    def forward(self, x, train=False, rng=None):
        n, c, h, w = x.shape
        cells = self._cells(h, w)
        self._shape = x.shape
        self._cells_used = cells
        self._argpos = []
        cols = []
        ni = np.arange(n)[:, None]
        ci = np.arange(c)[None, :]
        for (y0, y1, x0, x1) in cells:
            seg = x[:, :, y0:y1, x0:x1]
            flat = seg.reshape(n, c, -1)
            arg = flat.argmax(axis=-1)
            ys = y0 + arg // (x1 - x0)
            xs = x0 + arg % (x1 - x0)
            self._argpos.append((ys, xs))
            cols.append(flat[ni, ci, arg])
        return np.concatenate(cols, axis=1)

    def backward(self, grad_out):
        n, c = self._shape[0], self._shape[1]
        grad = np.zeros(self._shape, dtype=grad_out.dtype)
        ni = np.arange(n)[:, None]
        ci = np.arange(c)[None, :]
        for j, (ys, xs) in enumerate(self._argpos):
            np.add.at(grad, (ni, ci, ys, xs), grad_out[:, j * c:(j + 1) * c])
        self._argpos = None
        return grad


class SPP(_PyramidPool):
    """Spatial pyramid pooling over square grids (default 1x1, 2x2, 4x4)."""

    def __init__(self, levels=(1, 2, 4)):
        self.levels = tuple(levels)

    def output_width(self, channels):
        return channels * sum(l * l for l in self.levels)

    def _cells(self, h, w):
        biggest = max(self.levels)
        if h < biggest or w < biggest:
            raise ValueError("input too small for pyramid: %dx%d with %d grid cells"
                             % (h, w, biggest))
        cells = []
        for level in self.levels:
            for (y0, y1) in _cell_bounds(h, level):
                for (x0, x1) in _cell_bounds(w, level):
                    cells.append((y0, y1, x0, x1))
        return cells


class TPP(_PyramidPool):
    """Horizontal-only pyramid pooling; every cell spans the full height."""

    def __init__(self, levels=(1, 2, 3, 4, 5)):
        self.levels = tuple(levels)

    def output_width(self, channels):
        return channels * sum(self.levels)

    def _cells(self, h, w):
        biggest = max(self.levels)
        if w < biggest:
            raise ValueError("input too small for pyramid: width %d with %d cells"
                             % (w, biggest))
        cells = []
        for level in self.levels:
            for (x0, x1) in _cell_bounds(w, level):
                cells.append((0, h, x0, x1))
        return cells


class FullyConnected(Layer):
    def __init__(self, n_in, n_out, name, rng, dtype=np.float64):
        self.n_in = n_in
        self.n_out = n_out
        self.weight = Parameter(name + ".weight", he_normal((n_out, n_in), n_in, rng, dtype))
        self.bias = Parameter(name + ".bias", np.zeros(n_out, dtype=dtype), decay=False)

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, train=False, rng=None):
        if x.shape[1] != self.n_in:
            raise ValueError("fully connected expects %d inputs, got %d" % (self.n_in, x.shape[1]))
        self._x = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, grad_out):
        self.weight.grad += grad_out.T @ self._x
        self.bias.grad += grad_out.sum(axis=0)
        grad_x = grad_out @ self.weight.value
        self._x = None
        return grad_x


class Dropout(Layer):
    """Inverted dropout: training rescales survivors, evaluation is identity."""

    def __init__(self, p=0.5):
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must be in [0, 1), got %r" % (p,))
        self.p = p

    def forward(self, x, train=False, rng=None):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("dropout in train mode needs an rng")
        keep = rng.random(x.shape) >= self.p
        self._mask = keep / (1.0 - self.p)
        return x * self._mask

    def backward(self, grad_out):
        if self._mask is None:
            return grad_out
        grad = grad_out * self._mask
        self._mask = None
        return grad


class Sigmoid(Layer):
    def forward(self, x, train=False, rng=None):
        self._out = sigmoid(x)
        return self._out

    def backward(self, grad_out):
        grad = grad_out * self._out * (1.0 - self._out)
        self._out = None
        return grad


class Softmax(Layer):
    def forward(self, x, train=False, rng=None):
        self._out = softmax(x)
        return self._out

    def backward(self, grad_out):
        s = self._out
        grad = s * (grad_out - (grad_out * s).sum(axis=-1, keepdims=True))
        self._out = None
        return grad


class Normalize(Layer):
    """Per-sample L2 normalization of row vectors."""

    eps = 1e-12

    def forward(self, x, train=False, rng=None):
        norms = np.linalg.norm(x, axis=-1, keepdims=True)
        if np.any(norms <= self.eps):
            raise ValueError("degenerate output: norm below %g" % self.eps)
        self._x = x
        self._norms = norms
        return x / norms

    def backward(self, grad_out):
        x, norms = self._x, self._norms
        dot = (grad_out * x).sum(axis=-1, keepdims=True)
        grad = grad_out / norms - x * (dot / norms ** 3)
        self._x = self._norms = None
        return grad
