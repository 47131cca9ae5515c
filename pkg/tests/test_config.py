import numpy as np
import pytest
import yaml

from spoofbench.config import (
    ExperimentConfig,
    build_experiment,
    load_config,
    seed_everything,
    validate,
)
from spoofbench.data.loader import BatchLoader
from spoofbench.data.records import construct
from spoofbench.data.transform import TransformParams
from spoofbench.errors import (
    ConfigError,
    DataError,
    ParseError,
    RunDirExistsError,
    SchemaError,
    UnresolvableComponentError,
)

from helpers import base_config, write_config


class TestValidation:
    def test_minimal_config_fills_defaults(self, corpus, tmp_path):
        cfg = load_config(write_config(base_config(corpus, tmp_path), tmp_path / "c.yaml"))
        eff = cfg.effective
        assert eff["training"]["patience"] == 5
        assert eff["training"]["val_interval"] == "epoch"
        assert eff["training"]["optimizer"] == "adam"
        assert eff["data"]["train"]["transform"]["sample_rate"] == 16000
        assert eff["data"]["train"]["transform"]["normalize"] is True
        assert eff["data"]["valid"]["loader"]["batch_size"] == 32
        assert eff["data"]["train"]["loader"]["shuffle"] is True
        assert eff["data"]["valid"]["loader"]["shuffle"] is False
        assert eff["model"]["frontend"]["mode"] == "finetune"
        assert eff["model"]["frontend"]["aggregation"] == "last"

    def test_default_lr_matches_protocol(self, corpus, tmp_path):
        raw = base_config(corpus, tmp_path)
        del raw["training"]["lr"]
        cfg = load_config(write_config(raw, tmp_path / "c.yaml"))
        assert cfg.effective["training"]["lr"] == 1e-6

    def test_unregistered_backend(self, corpus, tmp_path):
        raw = base_config(corpus, tmp_path)
        raw["model"]["backend"]["type"] = "nes2net"
        with pytest.raises(UnresolvableComponentError) as err:
            load_config(write_config(raw, tmp_path / "c.yaml"))
        assert "nes2net" in str(err.value) and "mlp" in str(err.value)

    def test_negative_lr(self, corpus, tmp_path):
        raw = base_config(corpus, tmp_path)
        raw["training"]["lr"] = -1
        with pytest.raises(SchemaError) as err:
            load_config(write_config(raw, tmp_path / "c.yaml"))
        assert err.value.key_path == "training.lr"

    def test_unknown_keys_rejected_with_path(self, corpus, tmp_path):
        raw = base_config(corpus, tmp_path)
        raw["model"]["backend"]["params"] = {"hiden": [8]}
        with pytest.raises(ConfigError) as err:
            load_config(write_config(raw, tmp_path / "c.yaml"))
        assert "hiden" in str(err.value)

        raw = base_config(corpus, tmp_path)
        raw["trainin"] = {}
        with pytest.raises(SchemaError):
            load_config(write_config(raw, tmp_path / "c.yaml"))

    def test_bad_seed(self, corpus, tmp_path):
        for bad in (-1, "x", [1, -2], []):
            raw = base_config(corpus, tmp_path)
            raw["seed"] = bad
            with pytest.raises(SchemaError):
                validate(raw)

    def test_batch_size_and_patience_bounds(self, corpus, tmp_path):
        raw = base_config(corpus, tmp_path)
        raw["data"]["train"]["loader"]["batch_size"] = 0
        with pytest.raises(SchemaError):
            validate(raw)
        raw = base_config(corpus, tmp_path)
        raw["training"]["patience"] = 0
        with pytest.raises(SchemaError):
            validate(raw)

    def test_augment_rejected_outside_train(self, corpus, tmp_path):
        raw = base_config(corpus, tmp_path)
        raw["data"]["valid"]["augment_transform"] = {
            "mode": "sequential",
            "items": [{"type": "additive_noise", "prob": 0.5}],
        }
        with pytest.raises(SchemaError):
            validate(raw)

    def test_augment_validated(self, corpus, tmp_path):
        raw = base_config(corpus, tmp_path)
        raw["data"]["train"]["augment_transform"] = {
            "mode": "sequential",
            "items": [{"type": "additive_noise", "prob": 1.5}],
        }
        with pytest.raises(SchemaError):
            validate(raw)
        raw["data"]["train"]["augment_transform"]["items"][0]["prob"] = 0.5
        eff = validate(raw)
        assert eff["data"]["train"]["augment_transform"]["items"][0]["prob"] == 0.5

    def test_malformed_yaml(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("exp_name: [unclosed\n")
        with pytest.raises(ParseError):
            load_config(bad)

    def test_missing_table_fails_fast(self, corpus, tmp_path):
        raw = base_config(corpus, tmp_path)
        raw["data"]["train"]["dataset"]["params"]["path"] = "/nowhere/t.parquet"
        with pytest.raises(DataError):
            load_config(write_config(raw, tmp_path / "c.yaml"))

    def test_archival_idempotence(self, corpus, tmp_path):
        cfg = load_config(write_config(base_config(corpus, tmp_path), tmp_path / "c.yaml"))
        archived = tmp_path / "effective.yaml"
        archived.write_text(cfg.to_yaml())
        cfg2 = load_config(archived)
        assert cfg2 == cfg
        assert cfg2.config_hash == cfg.config_hash

    def test_system_id(self, corpus, tmp_path):
        cfg = load_config(write_config(base_config(corpus, tmp_path), tmp_path / "c.yaml"))
        assert cfg.system_id == "reference-mlp-train"


class TestSeedEverything:
    def test_same_seed_same_batches(self, corpus):
        records = construct(corpus["tables"]["train"])
        params = TransformParams(duration_s=0.3)

        def first_epoch_ids(seed):
            seed_everything(seed)
            loader = BatchLoader(records, params, batch_size=8, shuffle=True,
                                 seed=seed, train=True)
            return [b.utt_ids for b in loader.iter_epoch(0)]

        assert first_epoch_ids(42) == first_epoch_ids(42)
        assert first_epoch_ids(2) != first_epoch_ids(240)

    def test_same_seed_same_parameters(self):
        import torch

        from spoofbench.engine.frontends import ConvFrontEnd

        seed_everything(42)
        a = ConvFrontEnd(feature_dim=8, stem_kernel=40, stem_stride=32)
        seed_everything(42)
        b = ConvFrontEnd(feature_dim=8, stem_kernel=40, stem_stride=32)
        for (ka, va), (kb, vb) in zip(a.state_dict().items(), b.state_dict().items()):
            assert ka == kb and torch.equal(va, vb)

    def test_rejects_bad_seed(self):
        with pytest.raises(ConfigError):
            seed_everything(-3)
        with pytest.raises(ConfigError):
            seed_everything("42")


class TestBuildExperiment:
    def test_run_dir_contains_effective_config(self, corpus, tmp_path):
        cfg = load_config(write_config(base_config(corpus, tmp_path / "out"),
                                       tmp_path / "c.yaml"))
        runs = build_experiment(cfg)
        assert len(runs) == 1
        marker = runs[0].run_dir / "config.effective.yaml"
        assert marker.exists()
        assert ExperimentConfig(effective=validate(
            yaml.safe_load(marker.read_text()))) == cfg

    def test_two_seeds_two_sibling_dirs(self, corpus, tmp_path):
        raw = base_config(corpus, tmp_path / "out")
        raw["seed"] = [2, 240]
        cfg = load_config(write_config(raw, tmp_path / "c.yaml"))
        runs = build_experiment(cfg)
        dirs = [r.run_dir for r in runs]
        assert [d.name for d in dirs] == ["seed_2", "seed_240"]
        assert dirs[0].parent == dirs[1].parent

    def test_existing_run_dir_needs_flag(self, corpus, tmp_path):
        cfg = load_config(write_config(base_config(corpus, tmp_path / "out"),
                                       tmp_path / "c.yaml"))
        build_experiment(cfg)
        with pytest.raises(RunDirExistsError):
            build_experiment(cfg)
        build_experiment(cfg, overwrite=True)
        build_experiment(cfg, resume=True)

    def test_build_produces_working_components(self, corpus, tmp_path):
        cfg = load_config(write_config(base_config(corpus, tmp_path / "out"),
                                       tmp_path / "c.yaml"))
        runs = build_experiment(cfg)
        loaders, assembly, trainer = runs[0].build()
        assert set(loaders) == {"train", "valid"}
        batch = next(iter(loaders["valid"]))
        assert batch.waveforms.shape[1] == 4800  # 0.3 s at 16 kHz
        import torch

        with torch.no_grad():
            scores = assembly.score(batch.waveforms)
        assert scores.shape[0] == len(batch)

    def test_plugin_backend_used_by_assembly(self, corpus, tmp_path):
        plugin = tmp_path / "custom_backend_plugin.py"
        plugin.write_text(
            "import torch\n"
            "from torch import nn\n"
            "from spoofbench.registry import BACKENDS\n\n"
            "@BACKENDS.register('custom_backend')\n"
            "class CustomBackend(nn.Module):\n"
            "    def __init__(self, input_dim):\n"
            "        super().__init__()\n"
            "        self.embedding_dim = input_dim\n"
            "        self.head = nn.Linear(input_dim, 2)\n\n"
            "    def forward(self, feats):\n"
            "        emb = feats.mean(dim=1)\n"
            "        return emb, self.head(emb)\n"
        )
        raw = base_config(corpus, tmp_path / "out")
        raw["plugins"] = [str(plugin)]
        raw["model"]["backend"] = {"type": "custom_backend"}
        cfg = load_config(write_config(raw, tmp_path / "c.yaml"))
        runs = build_experiment(cfg)
        _, assembly, _ = runs[0].build()
        assert type(assembly.backend).__name__ == "CustomBackend"
        assert assembly.backend.type_name == "custom_backend"

    def test_missing_audio_file_fails_before_training(self, corpus, tmp_path):
        import pandas as pd

        frame = pd.read_parquet(corpus["tables"]["train"])
        frame.loc[0, "audio_path"] = "/missing/gone.wav"
        broken_table = tmp_path / "broken.parquet"
        frame.to_parquet(broken_table, index=False)
        raw = base_config(corpus, tmp_path / "out")
        raw["data"]["train"]["dataset"]["params"]["path"] = str(broken_table)
        cfg = load_config(write_config(raw, tmp_path / "c.yaml"))
        runs = build_experiment(cfg)
        with pytest.raises(DataError) as err:
            runs[0].build()
        assert "gone.wav" in str(err.value)
