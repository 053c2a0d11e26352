"""Network assembly: architecture specs, presets, and checkpoint files.

A network is described by a ``NetworkSpec`` (a validated list of
``LayerSpec`` entries plus the output dimensionality ``d``) and built
into a ``Network`` of layer objects with freshly initialized
parameters.  The convolutional part runs on variable-size inputs; a
single pyramid pooling layer produces the fixed-length vector the fully
connected head consumes, so ``d`` never depends on the input size.

Checkpoints are a one-line JSON header (format version, architecture,
parameter names and shapes, seed, plus caller-supplied metadata)
followed by little-endian float64 blocks in declaration order.  The
round trip is bit-exact.
"""

import json

import numpy as np

from wordspot.errors import ConfigError, DataError
from wordspot.ioutil import atomic_write_bytes
from wordspot.nn import layers as L

CHECKPOINT_FORMAT = "wordspot-checkpoint"
CHECKPOINT_VERSION = 1

LAYER_KINDS = (
    "conv3x3", "relu", "maxpool2x2", "spp", "tpp",
    "fully_connected", "dropout", "sigmoid", "softmax", "normalize",
)
PYRAMID_KINDS = ("spp", "tpp")

SPP_LEVELS = (1, 2, 4)
TPP_LEVELS = (1, 2, 3, 4, 5)


class LayerSpec:
    """One layer: a kind tag plus its kind-specific parameters."""

    def __init__(self, kind, **params):
        if kind not in LAYER_KINDS:
            raise ConfigError("unknown layer kind %r" % (kind,))
        self.kind = kind
        self.params = dict(params)
        self._check_params()

    def _check_params(self):
        kind, p = self.kind, self.params
        allowed = {
            "conv3x3": {"filters"},
            "fully_connected": {"out"},
            "dropout": {"p"},
            "spp": {"levels"},
            "tpp": {"levels"},
        }.get(kind, set())
        extra = set(p) - allowed
        if extra:
            raise ConfigError("layer %r does not accept %s" % (kind, sorted(extra)))
        if kind == "conv3x3":
            if int(p.get("filters", 0)) < 1:
                raise ConfigError("conv3x3 needs a positive filter count")
            p["filters"] = int(p["filters"])
        elif kind == "fully_connected":
            if int(p.get("out", 0)) < 1:
                raise ConfigError("fully_connected needs a positive output size")
            p["out"] = int(p["out"])
        elif kind == "dropout":
            p["p"] = float(p.get("p", 0.5))
            if not 0.0 <= p["p"] < 1.0:
                raise ConfigError("dropout probability must be in [0, 1)")
        elif kind in PYRAMID_KINDS:
            default = SPP_LEVELS if kind == "spp" else TPP_LEVELS
            levels = tuple(int(l) for l in p.get("levels", default))
            if not levels or any(l < 1 for l in levels) or len(set(levels)) != len(levels):
                raise ConfigError("pyramid levels must be distinct positive integers")
            p["levels"] = levels

    def to_dict(self):
        d = {"kind": self.kind}
        d.update(
            {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params.items()}
        )
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls(d.pop("kind"), **d)

    def __repr__(self):
        inner = "".join(", %s=%r" % kv for kv in sorted(self.params.items()))
        return "LayerSpec(%r%s)" % (self.kind, inner)

    def __eq__(self, other):
        return (isinstance(other, LayerSpec)
                and self.kind == other.kind and self.params == other.params)


class NetworkSpec:
    """Ordered layer list plus the attribute dimensionality of the output.

    Validation walks the shape chain: convolution and max pooling act on
    spatial maps, exactly one pyramid layer flattens them, and the fully
    connected head follows.  The final layer must be ``d`` wide.
    """

    def __init__(self, layers, d, in_channels=1):
        self.layers = list(layers)
        self.d = int(d)
        self.in_channels = int(in_channels)
        self._validate()

    def _validate(self):
        if self.d < 1:
            raise ConfigError("output dimensionality d must be positive")
        pyramids = [s.kind for s in self.layers if s.kind in PYRAMID_KINDS]
        if len(pyramids) != 1:
            raise ConfigError("network needs exactly one pyramid pooling layer, found %d"
                              % len(pyramids))
        spatial = True
        width = self.in_channels
        for spec in self.layers:
            kind = spec.kind
            if kind == "conv3x3":
                if not spatial:
                    raise ConfigError("conv3x3 after the pyramid layer")
                width = spec.params["filters"]
            elif kind == "maxpool2x2":
                if not spatial:
                    raise ConfigError("maxpool2x2 after the pyramid layer")
            elif kind in PYRAMID_KINDS:
                levels = spec.params["levels"]
                cells = (sum(l * l for l in levels) if kind == "spp" else sum(levels))
                width *= cells
                spatial = False
            elif kind == "fully_connected":
                if spatial:
                    raise ConfigError("fully_connected before the pyramid layer")
                width = spec.params["out"]
            elif kind in ("softmax", "normalize"):
                if spatial:
                    raise ConfigError("%s before the pyramid layer" % kind)
            # relu, dropout, sigmoid act elementwise on either shape
        if width != self.d:
            raise ConfigError("final layer width %d does not match d=%d" % (width, self.d))

    def to_dict(self):
        return {
            "layers": [s.to_dict() for s in self.layers],
            "d": self.d,
            "in_channels": self.in_channels,
        }

    @classmethod
    def from_dict(cls, d):
        return cls([LayerSpec.from_dict(s) for s in d["layers"]],
                   d=d["d"], in_channels=d.get("in_channels", 1))

    def __eq__(self, other):
        return (isinstance(other, NetworkSpec) and self.layers == other.layers
                and self.d == other.d and self.in_channels == other.in_channels)


def _conv_block(filters):
    return [LayerSpec("conv3x3", filters=filters), LayerSpec("relu")]


def phocnet_mini(d, pooling="tpp", levels=None):
    """Small architecture for desk-scale experiments and tests."""
    spec = []
    spec += _conv_block(8)
    spec.append(LayerSpec("maxpool2x2"))
    spec += _conv_block(16)
    spec.append(LayerSpec("maxpool2x2"))
    spec += _conv_block(32)
    spec.append(_pyramid_spec(pooling, levels))
    spec.append(LayerSpec("fully_connected", out=256))
    spec.append(LayerSpec("relu"))
    spec.append(LayerSpec("dropout", p=0.5))
    spec.append(LayerSpec("fully_connected", out=d))
    return NetworkSpec(spec, d=d)


def phocnet_full(d, pooling="tpp", levels=None):
    """Full-size architecture.

    The filter progression (64, 64, 128, 128, 256 x 6, 512 x 3 with two
    early max-pool layers, then 4096-wide fully connected layers with
    dropout) is a reconstruction from the stated constraints: few
    filters low, 512 filters in the last convolution, exactly two
    pooling layers.
    """
    spec = []
    spec += _conv_block(64) + _conv_block(64)
    spec.append(LayerSpec("maxpool2x2"))
    spec += _conv_block(128) + _conv_block(128)
    spec.append(LayerSpec("maxpool2x2"))
    for _ in range(6):
        spec += _conv_block(256)
    for _ in range(3):
        spec += _conv_block(512)
    spec.append(_pyramid_spec(pooling, levels))
    for _ in range(2):
        spec.append(LayerSpec("fully_connected", out=4096))
        spec.append(LayerSpec("relu"))
        spec.append(LayerSpec("dropout", p=0.5))
    spec.append(LayerSpec("fully_connected", out=d))
    return NetworkSpec(spec, d=d)


PRESETS = {"phocnet-mini": phocnet_mini, "phocnet-full": phocnet_full}


def _pyramid_spec(pooling, levels):
    if pooling not in PYRAMID_KINDS:
        raise ConfigError("pooling must be one of %s, got %r"
                          % ("/".join(PYRAMID_KINDS), pooling))
    if levels is None:
        return LayerSpec(pooling)
    return LayerSpec(pooling, levels=tuple(levels))


def build_network(spec, rng):
    """Instantiate layers with He-initialized weights and zero biases."""
    return Network(spec, rng)


class Network:
    def __init__(self, spec, rng):
        self.spec = spec
        self.layers = []
        counters = {}
        c = spec.in_channels
        width = None
        for ls in spec.layers:
            kind = ls.kind
            if kind == "conv3x3":
                counters["conv"] = counters.get("conv", 0) + 1
                name = "conv%d" % counters["conv"]
                layer = L.Conv3x3(c, ls.params["filters"], name, rng)
                c = ls.params["filters"]
            elif kind == "relu":
                layer = L.ReLU()
            elif kind == "maxpool2x2":
                layer = L.MaxPool2x2()
            elif kind == "spp":
                layer = L.SPP(ls.params["levels"])
                width = layer.output_width(c)
            elif kind == "tpp":
                layer = L.TPP(ls.params["levels"])
                width = layer.output_width(c)
            elif kind == "fully_connected":
                counters["fc"] = counters.get("fc", 0) + 1
                name = "fc%d" % counters["fc"]
                layer = L.FullyConnected(width, ls.params["out"], name, rng)
                width = ls.params["out"]
            elif kind == "dropout":
                layer = L.Dropout(ls.params["p"])
            elif kind == "sigmoid":
                layer = L.Sigmoid()
            elif kind == "softmax":
                layer = L.Softmax()
            elif kind == "normalize":
                layer = L.Normalize()
            else:  # pragma: no cover - LayerSpec already validated
                raise ConfigError("unknown layer kind %r" % (kind,))
            self.layers.append(layer)

    @property
    def d(self):
        return self.spec.d

    def parameters(self):
        params = []
        for layer in self.layers:
            params.extend(layer.parameters())
        return params

    def zero_grad(self):
        for p in self.parameters():
            p.grad[...] = 0.0

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise ValueError("expected input of shape (N, %d, H, W), got %r"
                             % (self.spec.in_channels, x.shape))
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, grad_out):
        grad = grad_out
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def embed(self, images, activation="none"):
        """Evaluate images (a list of H x W arrays in [0,1]) to (n, d).

        Images are grouped by shape so same-size inputs share a batch.
        ``activation`` maps the raw output to the attribute estimate:
        "sigmoid" for probabilities, "normalize" for unit vectors,
        "none" for the raw output.
        """
        if activation not in ("none", "sigmoid", "normalize"):
            raise ConfigError("unknown embed activation %r" % (activation,))
        images = [np.asarray(im, dtype=np.float64) for im in images]
        for i, im in enumerate(images):
            if im.ndim != 2:
                raise DataError("image %d is not a 2-d grayscale array" % i)
            if im.size and (im.min() < 0.0 or im.max() > 1.0):
                raise DataError("image %d has pixels outside [0, 1]" % i)
        out = np.empty((len(images), self.d), dtype=np.float64)
        groups = {}
        for i, im in enumerate(images):
            groups.setdefault(im.shape, []).append(i)
        for shape, idx in groups.items():
            batch = np.stack([images[i] for i in idx])[:, None, :, :]
            y = self.forward(batch, train=False)
            if activation == "sigmoid":
                y = L.sigmoid(y)
            elif activation == "normalize":
                norms = np.linalg.norm(y, axis=1, keepdims=True)
                if np.any(norms <= L.Normalize.eps):
                    raise ValueError("degenerate output: norm below %g" % L.Normalize.eps)
                y = y / norms
            out[idx] = y
        return out


def network_forward(network, images, mode="eval", rng=None):
    """Functional wrapper over Network.forward; mode is train or eval."""
    if mode not in ("train", "eval"):
        raise ConfigError("mode must be 'train' or 'eval', got %r" % (mode,))
    return network.forward(images, train=(mode == "train"), rng=rng)


def network_backward(network, grad_out):
    """Backpropagate; gradients accumulate on network.parameters()."""
    return network.backward(grad_out)


def write_checkpoint(path, header, blocks):
    """Write a header dict plus named float64 arrays, atomically.

    ``blocks`` is an ordered list of (name, array); names and shapes are
    recorded in the header so the file is self-describing.
    """
    header = dict(header)
    header["format"] = CHECKPOINT_FORMAT
    header["version"] = CHECKPOINT_VERSION
    header["blocks"] = [{"name": n, "shape": list(a.shape)} for n, a in blocks]
    payload = [json.dumps(header, sort_keys=True).encode("utf-8"), b"\n"]
    for _, arr in blocks:
        payload.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    atomic_write_bytes(path, b"".join(payload))


def read_checkpoint(path):
    """Read a checkpoint back into (header, {name: float64 array})."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise DataError("cannot read checkpoint %s: %s" % (path, exc)) from exc
    newline = raw.find(b"\n")
    if newline < 0:
        raise DataError("checkpoint %s: missing header line" % path)
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError("checkpoint %s: bad header: %s" % (path, exc)) from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise DataError("checkpoint %s: not a %s file" % (path, CHECKPOINT_FORMAT))
    if header.get("version") != CHECKPOINT_VERSION:
        raise DataError("checkpoint %s: unsupported version %r"
                        % (path, header.get("version")))
    offset = newline + 1
    arrays = {}
    for block in header["blocks"]:
        shape = tuple(block["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise DataError("checkpoint %s: truncated block %r" % (path, block["name"]))
        arrays[block["name"]] = np.frombuffer(
            raw[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        offset = end
    if offset != len(raw):
        raise DataError("checkpoint %s: %d trailing bytes" % (path, len(raw) - offset))
    return header, arrays


def save_network(path, network, seed=None, extra_header=None, extra_blocks=None):
    """Checkpoint a network: spec + parameters (+ caller state blocks)."""
    header = dict(extra_header or {})
    header["spec"] = network.spec.to_dict()
    header["seed"] = seed
    params = network.parameters()
    header["parameters"] = [{"name": p.name, "shape": list(p.shape)} for p in params]
    blocks = [(p.name, p.value) for p in params]
    if extra_blocks:
        blocks += list(extra_blocks)
    write_checkpoint(path, header, blocks)


def load_network(path):
    """Rebuild the checkpointed network; returns (network, header, blocks)."""
    header, arrays = read_checkpoint(path)
    if "spec" not in header:
        raise DataError("checkpoint %s: no network spec in header" % path)
    spec = NetworkSpec.from_dict(header["spec"])
    network = Network(spec, rng=np.random.default_rng(0))
    for p in network.parameters():
        if p.name not in arrays:
            raise DataError("checkpoint %s: missing parameter block %r" % (path, p.name))
        stored = arrays.pop(p.name)
        if stored.shape != p.shape:
            raise DataError("checkpoint %s: parameter %r has shape %r, expected %r"
                            % (path, p.name, stored.shape, p.shape))
        p.value = stored.copy()
        p.grad = np.zeros_like(p.value)
    return network, header, arrays
