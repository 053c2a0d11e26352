"""Run-configuration validation, defaults, and serialization."""

import json

import pytest

from wordspot import embeddings
from wordspot.config import RunConfig, load_config, save_config
from wordspot.errors import ConfigError


class TestDefaults:
    def test_default_record(self):
        config = RunConfig()
        assert config.arch == "phocnet-mini"
        assert config.pooling == "tpp"
        assert config.embedding == "phoc"
        assert config.levels == embeddings.DEFAULT_LEVELS
        assert config.loss == "bce"
        assert config.optimizer == "adam"
        assert config.learning_rate is None
        assert config.weight_decay == 5e-5
        assert config.lr_step == 70000
        assert config.lr_divisor == 10.0
        assert config.augment is True
        assert config.seed == 0
        assert config.iterations == 2000
        assert config.batch_size == 10

    def test_default_levels_value(self):
        assert RunConfig().levels == (2, 3, 4, 5)


class TestValidation:
    def test_unknown_architecture(self):
        with pytest.raises(ConfigError, match="unknown architecture"):
            RunConfig(arch="lenet")

    def test_custom_arch_needs_spec(self):
        with pytest.raises(ConfigError, match="network spec"):
            RunConfig(arch="custom")

    def test_unknown_pooling(self):
        with pytest.raises(ConfigError, match="unknown pooling"):
            RunConfig(pooling="gap")

    def test_unknown_embedding(self):
        with pytest.raises(ConfigError, match="unknown embedding"):
            RunConfig(embedding="fisher")

    def test_unknown_loss(self):
        with pytest.raises(ConfigError, match="unknown loss"):
            RunConfig(loss="hinge")

    def test_unknown_optimizer(self):
        with pytest.raises(ConfigError, match="unknown optimizer"):
            RunConfig(optimizer="rmsprop")

    @pytest.mark.parametrize("embedding", ["spoc", "dctow"])
    def test_bce_rejects_nonbinary_embeddings(self, embedding):
        with pytest.raises(ConfigError,
                           match="trains with the cosine loss only"):
            RunConfig(embedding=embedding, loss="bce")

    @pytest.mark.parametrize("embedding", ["phoc", "spoc", "dctow"])
    def test_cosine_accepts_every_embedding(self, embedding):
        config = RunConfig(embedding=embedding, loss="cosine")
        assert config.embedding == embedding

    def test_bad_levels_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig(levels=(0, 2))

    def test_nonpositive_learning_rate(self):
        with pytest.raises(ConfigError, match="learning rate"):
            RunConfig(learning_rate=0.0)

    def test_negative_iterations(self):
        with pytest.raises(ConfigError, match="iteration budget"):
            RunConfig(iterations=-1)

    def test_bad_batch_size(self):
        with pytest.raises(ConfigError, match="batch size"):
            RunConfig(batch_size=0)

    def test_bad_lr_step(self):
        with pytest.raises(ConfigError, match="lr_step"):
            RunConfig(lr_step=0)

    def test_bad_dct_coeffs(self):
        with pytest.raises(ConfigError, match="dct_coeffs"):
            RunConfig(dct_coeffs=0)


class TestOptimizerMapping:
    def test_sgd_alias_normalizes(self):
        assert RunConfig(optimizer="sgd", loss="bce").optimizer == "sgd_momentum"

    def test_explicit_learning_rate_wins(self):
        config = RunConfig(optimizer="sgd", learning_rate=0.5)
        assert config.resolved_learning_rate() == 0.5

    @pytest.mark.parametrize("optimizer,loss,expected", [
        ("sgd", "bce", 1e-4),
        ("sgd", "cosine", 1e-2),
        ("adam", "bce", 1e-4),
        ("adam", "cosine", 1e-4),
    ])
    def test_default_learning_rates(self, optimizer, loss, expected):
        embedding = "phoc" if loss == "bce" else "dctow"
        config = RunConfig(optimizer=optimizer, loss=loss, embedding=embedding)
        assert config.resolved_learning_rate() == expected

    def test_optimizer_config_carries_hyperparameters(self):
        config = RunConfig(optimizer="sgd", momentum=0.8, weight_decay=1e-3,
                           learning_rate=0.01, lr_step=500, lr_divisor=2.0)
        opt = config.optimizer_config()
        assert opt.kind == "sgd_momentum"
        assert opt.learning_rate == 0.01
        assert opt.momentum == 0.8
        assert opt.weight_decay == 1e-3
        assert opt.lr_schedule == ((500, 2.0),)

    def test_embed_activation_tracks_loss(self):
        assert RunConfig(loss="bce").embed_activation() == "sigmoid"
        assert RunConfig(loss="cosine").embed_activation() == "normalize"
        assert (RunConfig(loss="cosine", embedding="dctow").embed_activation()
                == "normalize")


class TestSerialization:
    def test_round_trip(self):
        config = RunConfig(embedding="spoc", loss="cosine", optimizer="sgd",
                           learning_rate=0.02, levels=(1, 2), seed=9,
                           iterations=77, augment=False)
        clone = RunConfig.from_dict(config.to_dict())
        assert clone == config

    def test_to_dict_is_json_ready(self):
        text = json.dumps(RunConfig().to_dict())
        assert json.loads(text)["levels"] == [2, 3, 4, 5]

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ConfigError, match="unknown config keys: depth"):
            RunConfig.from_dict({"depth": 13})

    def test_from_dict_restores_levels_tuple(self):
        config = RunConfig.from_dict({"levels": [2, 3]})
        assert config.levels == (2, 3)

    def test_save_and_load(self, tmp_path):
        path = tmp_path / "run.json"
        config = RunConfig(loss="cosine", embedding="dctow", seed=4)
        save_config(path, config)
        assert load_config(path) == config

    def test_load_rejects_bad_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    def test_load_rejects_non_object(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigError, match="JSON object"):
            load_config(path)

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read config"):
            load_config(tmp_path / "absent.json")
