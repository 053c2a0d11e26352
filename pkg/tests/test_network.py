"""Network specs, presets, end-to-end gradients and checkpoint files."""

import numpy as np
import pytest

from wordspot.errors import ConfigError, DataError
from wordspot.nn import network as net
from wordspot.nn.network import (
    LayerSpec,
    Network,
    NetworkSpec,
    build_network,
    load_network,
    phocnet_full,
    phocnet_mini,
    read_checkpoint,
    save_network,
    write_checkpoint,
)

import oracles


# ---------------------------------------------------------------------------
# spec validation
# ---------------------------------------------------------------------------

def test_layer_spec_rejects_unknown_kind():
    with pytest.raises(ConfigError):
        LayerSpec("deconv")


def test_layer_spec_rejects_foreign_params():
    with pytest.raises(ConfigError):
        LayerSpec("relu", filters=3)


def test_layer_spec_roundtrips():
    spec = LayerSpec("tpp", levels=(1, 2, 3))
    assert LayerSpec.from_dict(spec.to_dict()) == spec


def test_network_spec_needs_exactly_one_pyramid():
    with pytest.raises(ConfigError, match="pyramid"):
        NetworkSpec([LayerSpec("conv3x3", filters=4),
                     LayerSpec("fully_connected", out=5)], d=5)
    with pytest.raises(ConfigError, match="pyramid"):
        NetworkSpec([LayerSpec("tpp"), LayerSpec("spp"),
                     LayerSpec("fully_connected", out=5)], d=5)


def test_network_spec_rejects_conv_after_pyramid():
    with pytest.raises(ConfigError, match="after the pyramid"):
        NetworkSpec([LayerSpec("tpp"), LayerSpec("conv3x3", filters=4),
                     LayerSpec("fully_connected", out=5)], d=5)


def test_network_spec_rejects_fc_before_pyramid():
    with pytest.raises(ConfigError, match="before the pyramid"):
        NetworkSpec([LayerSpec("fully_connected", out=5), LayerSpec("tpp")], d=5)


def test_network_spec_checks_final_width():
    with pytest.raises(ConfigError, match="does not match d"):
        NetworkSpec([LayerSpec("conv3x3", filters=4), LayerSpec("tpp"),
                     LayerSpec("fully_connected", out=7)], d=9)


def test_network_spec_roundtrips():
    spec = phocnet_mini(d=42, pooling="spp")
    assert NetworkSpec.from_dict(spec.to_dict()) == spec


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def test_mini_preset_shape_chain():
    spec = phocnet_mini(d=60)
    assert spec.d == 60
    kinds = [s.kind for s in spec.layers]
    assert kinds.count("conv3x3") == 3
    assert kinds.count("maxpool2x2") == 2
    assert kinds.count("tpp") == 1


def test_full_preset_matches_reference_architecture():
    spec = phocnet_full(d=504)
    convs = [s.params["filters"] for s in spec.layers if s.kind == "conv3x3"]
    assert convs == [64, 64, 128, 128] + [256] * 6 + [512] * 3
    kinds = [s.kind for s in spec.layers]
    assert kinds.count("maxpool2x2") == 2
    # pools sit right after the second and fourth conv blocks
    assert kinds[4] == "maxpool2x2" and kinds[9] == "maxpool2x2"
    fcs = [s.params["out"] for s in spec.layers if s.kind == "fully_connected"]
    assert fcs == [4096, 4096, 504]
    drops = [s.kind for s in spec.layers[kinds.index("tpp"):] if s.kind == "dropout"]
    assert len(drops) == 2  # dropout on the first two fully connected layers


def test_full_preset_tpp_width_is_7680():
    spec = phocnet_full(d=504)
    tpp = [s for s in spec.layers if s.kind == "tpp"][0]
    assert 512 * sum(tpp.params["levels"]) == 7680


def test_presets_registry():
    assert set(net.PRESETS) == {"phocnet-mini", "phocnet-full"}


def test_bad_pooling_rejected():
    with pytest.raises(ConfigError):
        phocnet_mini(d=10, pooling="gpp")


# ---------------------------------------------------------------------------
# built networks
# ---------------------------------------------------------------------------

def _mini(d=12, pooling="tpp", seed=0):
    return build_network(phocnet_mini(d=d, pooling=pooling), np.random.default_rng(seed))


def test_network_parameter_naming():
    names = [p.name for p in _mini().parameters()]
    assert names[:2] == ["conv1.weight", "conv1.bias"]
    assert "fc2.weight" in names
    assert len(names) == len(set(names))


def test_network_bias_parameters_skip_decay():
    for p in _mini().parameters():
        assert p.decay == p.name.endswith(".weight")


def test_network_forward_shape_and_batch_consistency(rng):
    network = _mini(d=12)
    x = rng.random(size=(3, 1, 16, 40))
    out = network.forward(x)
    assert out.shape == (3, 12)
    # identical rows in, identical rows out
    same = np.repeat(x[:1], 2, axis=0)
    out2 = network.forward(same)
    np.testing.assert_array_equal(out2[0], out2[1])


def test_network_rejects_bad_input_shape(rng):
    network = _mini()
    with pytest.raises(ValueError):
        network.forward(rng.random(size=(1, 2, 16, 40)))
    with pytest.raises(ValueError):
        network.forward(rng.random(size=(16, 40)))


def test_network_embed_variable_widths_fixed_d(rng):
    network = _mini(d=9)
    images = [rng.random(size=(16, w)) for w in (26, 60, 120, 60)]
    out = network.embed(images)
    assert out.shape == (4, 9)
    # the two width-60 images went through one batch; check against singles
    singles = np.concatenate([network.embed([im]) for im in images])
    np.testing.assert_allclose(out, singles, atol=1e-10)


def test_network_embed_validates_pixel_range(rng):
    network = _mini()
    with pytest.raises(DataError, match="outside"):
        network.embed([np.full((16, 30), 2.0)])


def test_network_embed_sigmoid_and_normalize(rng):
    network = _mini(d=6)
    images = [rng.random(size=(16, 30))]
    probs = network.embed(images, activation="sigmoid")
    assert np.all((probs >= 0) & (probs <= 1))
    unit = network.embed(images, activation="normalize")
    np.testing.assert_allclose(np.linalg.norm(unit, axis=1), 1.0, atol=1e-12)
    with pytest.raises(ConfigError):
        network.embed(images, activation="tanh")


def test_end_to_end_gradient_small_network(rng):
    # conv -> relu -> tpp -> fc with random input: full backprop chain vs FD
    spec = NetworkSpec([
        LayerSpec("conv3x3", filters=2),
        LayerSpec("relu"),
        LayerSpec("tpp", levels=(1, 2)),
        LayerSpec("fully_connected", out=3),
    ], d=3)
    network = build_network(spec, np.random.default_rng(5))
    x = rng.random(size=(1, 1, 4, 6)) + 0.1
    g = rng.normal(size=(1, 3))

    def loss_of_input(xv):
        return float(np.sum(network.forward(xv) * g))

    network.zero_grad()
    network.forward(x)
    grad_x = network.backward(g.copy())
    np.testing.assert_allclose(grad_x, oracles.fd_gradient(loss_of_input, x),
                               atol=1e-5)
    # parameter gradients against FD as well
    for p in network.parameters():
        def loss_of_param(v, p=p):
            old = p.value
            p.value = v
            try:
                return float(np.sum(network.forward(x) * g))
            finally:
                p.value = old
        np.testing.assert_allclose(p.grad, oracles.fd_gradient(loss_of_param, p.value.copy()),
                                   atol=1e-5, err_msg=p.name)


def test_zero_grad_clears_accumulation(rng):
    network = _mini(d=4)
    x = rng.random(size=(1, 1, 16, 30))
    network.forward(x)
    network.backward(np.ones((1, 4)))
    network.zero_grad()
    for p in network.parameters():
        np.testing.assert_array_equal(p.grad, 0.0)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_roundtrip_bit_exact(tmp_path, rng):
    path = tmp_path / "net.ckpt"
    network = _mini(d=7, seed=3)
    save_network(path, network, seed=3)
    loaded, header, leftover = load_network(path)
    assert header["seed"] == 3
    assert leftover == {}
    assert loaded.spec == network.spec
    for a, b in zip(loaded.parameters(), network.parameters()):
        assert a.name == b.name
        np.testing.assert_array_equal(a.value, b.value)  # bit-exact


def test_checkpoint_same_network_same_bytes(tmp_path):
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_network(p1, _mini(seed=8), seed=8)
    save_network(p2, _mini(seed=8), seed=8)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_extra_blocks_roundtrip(tmp_path, rng):
    path = tmp_path / "extra.ckpt"
    extra = rng.normal(size=(3, 2))
    save_network(path, _mini(), extra_header={"note": 1},
                 extra_blocks=[("opt:fc1.weight:m", extra)])
    _, header, leftover = load_network(path)
    assert header["note"] == 1
    np.testing.assert_array_equal(leftover["opt:fc1.weight:m"], extra)


def test_checkpoint_rejects_wrong_format(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b'{"format": "other"}\n')
    with pytest.raises(DataError, match="not a wordspot-checkpoint"):
        read_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path, rng):
    path = tmp_path / "trunc.ckpt"
    write_checkpoint(path, {}, [("w", rng.normal(size=(4, 4)))])
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(DataError, match="truncated"):
        read_checkpoint(path)


def test_checkpoint_rejects_trailing_bytes(tmp_path, rng):
    path = tmp_path / "trail.ckpt"
    write_checkpoint(path, {}, [("w", rng.normal(size=(2,)))])
    path.write_bytes(path.read_bytes() + b"XXXX")
    with pytest.raises(DataError, match="trailing"):
        read_checkpoint(path)


def test_checkpoint_missing_file_is_data_error(tmp_path):
    with pytest.raises(DataError):
        read_checkpoint(tmp_path / "nope.ckpt")


def test_loaded_network_same_outputs(tmp_path, rng):
    path = tmp_path / "same.ckpt"
    network = _mini(d=5, seed=21)
    save_network(path, network)
    loaded, _, _ = load_network(path)
    x = rng.random(size=(2, 1, 16, 33))
    np.testing.assert_array_equal(loaded.forward(x), network.forward(x))
