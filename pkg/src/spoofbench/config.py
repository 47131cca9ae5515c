"""Experiment configuration: parse, validate, freeze, and build.

A single YAML file specifies the whole experiment. Validation is strict
(unknown keys anywhere are errors), every component type string must
resolve in its registry before anything runs, and the fully defaulted
"effective" config is archived into each run directory so a recipe can be
reproduced from the archive alone.
"""

import hashlib
import random
from copy import deepcopy
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import yaml

from . import registry
from .data.augment import AugmentationPolicy, PolicyItem
from .data.loader import BatchLoader
from .data.transform import PAD_MODES, TransformParams
from .engine.aggregation import METHODS as AGGREGATION_METHODS
from .engine.assembly import build_assembly
from .engine.frontends import MODES as FRONTEND_MODES
from .errors import (
    ConfigError,
    DataError,
    ParseError,
    RunDirExistsError,
    SchemaError,
)
from .fairness import ATTRIBUTES as FAIRNESS_ATTRIBUTES
from .trainer import Trainer

DEFAULT_LR = 1e-6
DEFAULT_BATCH_SIZE = 32
DEFAULT_PATIENCE = 5
DEFAULT_MAX_EPOCHS = 100

EFFECTIVE_CONFIG_NAME = "config.effective.yaml"


def seed_everything(seed):
    """Derive every framework random source from one master seed."""
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


# ---------------------------------------------------------------------------
# schema validation helpers
# ---------------------------------------------------------------------------

def _expect_map(value, path):
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise SchemaError(path, f"expected a mapping, got {type(value).__name__}")
    return value

def _reject_unknown(section, allowed, path):
    for key in section:
        if key not in allowed:
            raise SchemaError(f"{path}.{key}" if path else key, "unknown key")

def _get_str(section, key, path, default=None, required=False, choices=None):
    if key not in section or section[key] is None:
        if required:
            raise SchemaError(f"{path}.{key}", "missing required key")
        value = default
    else:
        value = section[key]
    if value is not None and not isinstance(value, str):
        raise SchemaError(f"{path}.{key}", f"expected string, got {type(value).__name__}")
    if choices is not None and value not in choices:
        raise SchemaError(f"{path}.{key}", f"must be one of {choices}, got {value!r}")
    return value

def _get_number(section, key, path, default, kind=float, minimum=None,
                strict_min=None, required=False):
    if key not in section or section[key] is None:
        if required:
            raise SchemaError(f"{path}.{key}", "missing required key")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{path}.{key}", f"expected {kind.__name__}, got {value!r}")
    if kind is int and not isinstance(value, int):
        raise SchemaError(f"{path}.{key}", f"expected int, got {value!r}")
    value = kind(value)
    if strict_min is not None and value <= strict_min:
        raise SchemaError(f"{path}.{key}", f"must be > {strict_min}")
    if minimum is not None and value < minimum:
        raise SchemaError(f"{path}.{key}", f"must be >= {minimum}")
    return value

def _get_bool(section, key, path, default):
    if key not in section or section[key] is None:
        return default
    value = section[key]
    if not isinstance(value, bool):
        raise SchemaError(f"{path}.{key}", f"expected bool, got {value!r}")
    return value


def _validate_component(section, path, kind, extra=()):
    """A {type, params} block, checked against its registry immediately."""
    section = _expect_map(section, path)
    _reject_unknown(section, ("type", "params") + extra, path)
    type_name = _get_str(section, "type", path, required=True)
    params = _expect_map(section.get("params"), f"{path}.params")
    reg = registry.get_registry(kind)
    if type_name not in reg:
        from .errors import UnresolvableComponentError

        raise UnresolvableComponentError(kind, type_name, reg.names())
    validated = reg.validate_params(type_name, params)
    return type_name, params, validated


def _validate_augment(section, path):
    section = _expect_map(section, path)
    _reject_unknown(section, ("mode", "items"), path)
    mode = _get_str(section, "mode", path, default="sequential",
                    choices=("sequential", "parallel"))
    raw_items = section.get("items") or []
    if not isinstance(raw_items, list):
        raise SchemaError(f"{path}.items", "expected a list")
    items = []
    for i, item in enumerate(raw_items):
        ipath = f"{path}.items[{i}]"
        item = _expect_map(item, ipath)
        _reject_unknown(item, ("type", "params", "prob"), ipath)
        name, params, _ = _validate_component(
            {"type": item.get("type"), "params": item.get("params")}, ipath, "augmentation"
        )
        prob = _get_number(item, "prob", ipath, 1.0, float)
        if not 0.0 <= prob <= 1.0:
            raise SchemaError(f"{ipath}.prob", f"must be in [0, 1], got {prob}")
        items.append({"type": name, "params": params, "prob": prob})
    out = {"mode": mode, "items": items}
    AugmentationPolicy(mode=mode, items=tuple(
        PolicyItem(name=i["type"], prob=i["prob"], params=i["params"]) for i in items
    ))  # re-run the dataclass invariants
    return out


def _validate_split(section, path, is_train):
    section = _expect_map(section, path)
    allowed = ("dataset", "transform", "loader") + (("augment_transform",) if is_train else ())
    if "augment_transform" in section and not is_train:
        raise SchemaError(f"{path}.augment_transform",
                          "augmentation is only valid on the train split")
    _reject_unknown(section, allowed, path)
    if "dataset" not in section:
        raise SchemaError(f"{path}.dataset", "missing required key")
    ds_type, ds_params, _ = _validate_component(section["dataset"], f"{path}.dataset", "dataset")

    tr = _expect_map(section.get("transform"), f"{path}.transform")
    _reject_unknown(tr, ("sample_rate", "duration_s", "normalize", "pad_mode"),
                    f"{path}.transform")
    transform = {
        "sample_rate": _get_number(tr, "sample_rate", f"{path}.transform", 16000, int,
                                   strict_min=0),
        "duration_s": _get_number(tr, "duration_s", f"{path}.transform", 4.0, float,
                                  strict_min=0.0),
        "normalize": _get_bool(tr, "normalize", f"{path}.transform", True),
        "pad_mode": _get_str(tr, "pad_mode", f"{path}.transform", default="repeat",
                             choices=PAD_MODES),
    }

    ld = _expect_map(section.get("loader"), f"{path}.loader")
    _reject_unknown(ld, ("batch_size", "shuffle", "workers"), f"{path}.loader")
    loader = {
        "batch_size": _get_number(ld, "batch_size", f"{path}.loader",
                                  DEFAULT_BATCH_SIZE, int, minimum=1),
        "shuffle": _get_bool(ld, "shuffle", f"{path}.loader", is_train),
        "workers": _get_number(ld, "workers", f"{path}.loader", 1, int, minimum=1),
    }

    out = {
        "dataset": {"type": ds_type, "params": ds_params},
        "transform": transform,
        "loader": loader,
    }
    if is_train:
        out["augment_transform"] = _validate_augment(
            section.get("augment_transform"), f"{path}.augment_transform"
        ) if section.get("augment_transform") else {"mode": "sequential", "items": []}
    return out


def _validate_evaluation(section, path):
    section = _expect_map(section, path)
    _reject_unknown(section, ("test_sets", "fairness", "pooled_sets"), path)
    raw_sets = section.get("test_sets") or []
    if not isinstance(raw_sets, list):
        raise SchemaError(f"{path}.test_sets", "expected a list")
    test_sets = []
    for i, entry in enumerate(raw_sets):
        if isinstance(entry, str):
            test_sets.append({"name": Path(entry).stem, "table": entry})
        elif isinstance(entry, dict):
            _reject_unknown(entry, ("name", "table"), f"{path}.test_sets[{i}]")
            table = entry.get("table")
            if not table:
                raise SchemaError(f"{path}.test_sets[{i}].table", "missing required key")
            test_sets.append({"name": entry.get("name") or Path(table).stem,
                              "table": str(table)})
        else:
            raise SchemaError(f"{path}.test_sets[{i}]", "expected path or {name, table}")

    fr = _expect_map(section.get("fairness"), f"{path}.fairness")
    _reject_unknown(fr, ("attributes", "quality_bands"), f"{path}.fairness")
    attributes = fr.get("attributes") or []
    if not isinstance(attributes, list):
        raise SchemaError(f"{path}.fairness.attributes", "expected a list")
    for attr in attributes:
        if attr not in FAIRNESS_ATTRIBUTES:
            raise SchemaError(f"{path}.fairness.attributes",
                              f"unknown attribute {attr!r}; known: {FAIRNESS_ATTRIBUTES}")
    quality_bands = _expect_map(fr.get("quality_bands"), f"{path}.fairness.quality_bands")

    pooled = _expect_map(section.get("pooled_sets"), f"{path}.pooled_sets")
    for name, members in pooled.items():
        if not isinstance(members, list) or not all(isinstance(m, str) for m in members):
            raise SchemaError(f"{path}.pooled_sets.{name}", "expected a list of dataset names")

    return {
        "test_sets": test_sets,
        "fairness": {"attributes": list(attributes), "quality_bands": dict(quality_bands)},
        "pooled_sets": {k: list(v) for k, v in pooled.items()},
    }


def _validate_seed(value):
    def check(s):
        if isinstance(s, bool) or not isinstance(s, int) or s < 0:
            raise SchemaError("seed", f"seeds must be non-negative integers, got {s!r}")
        return s

    if isinstance(value, list):
        if not value:
            raise SchemaError("seed", "seed list must be non-empty")
        return [check(s) for s in value]
    return check(value)


TOP_LEVEL_KEYS = ("exp_name", "output_dir", "seed", "plugins", "data", "model",
                  "training", "evaluation")


def validate(raw):
    """Validate a raw config mapping; returns the effective config dict."""
    raw = _expect_map(raw, "")
    _reject_unknown(raw, TOP_LEVEL_KEYS, "")
    exp_name = _get_str(raw, "exp_name", "", required=True)
    output_dir = _get_str(raw, "output_dir", "", default="./outputs")
    seed = _validate_seed(raw.get("seed", 42))
    plugins = raw.get("plugins") or []
    if not isinstance(plugins, list) or not all(isinstance(p, str) for p in plugins):
        raise SchemaError("plugins", "expected a list of paths")

    data = _expect_map(raw.get("data"), "data")
    _reject_unknown(data, ("train", "valid", "test"), "data")
    for split in ("train", "valid"):
        if split not in data:
            raise SchemaError(f"data.{split}", "missing required key")
    data_out = {
        "train": _validate_split(data["train"], "data.train", is_train=True),
        "valid": _validate_split(data["valid"], "data.valid", is_train=False),
    }
    if "test" in data:
        data_out["test"] = _validate_split(data["test"], "data.test", is_train=False)

    model = _expect_map(raw.get("model"), "model")
    _reject_unknown(model, ("frontend", "backend", "loss"), "model")
    fe = _expect_map(model.get("frontend"), "model.frontend")
    fe_type, fe_params, _ = _validate_component(
        {"type": fe.get("type"), "params": fe.get("params")}, "model.frontend", "frontend"
    )
    _reject_unknown(fe, ("type", "params", "mode", "aggregation"), "model.frontend")
    fe_mode = _get_str(fe, "mode", "model.frontend", default="finetune",
                       choices=FRONTEND_MODES)
    fe_agg = _get_str(fe, "aggregation", "model.frontend", default="last",
                      choices=AGGREGATION_METHODS)
    be_type, be_params, _ = _validate_component(model.get("backend"), "model.backend",
                                                "backend")
    loss_type, loss_params, _ = _validate_component(model.get("loss"), "model.loss", "loss")

    training = _expect_map(raw.get("training"), "training")
    _reject_unknown(training, ("optimizer", "lr", "max_epochs", "val_interval",
                               "patience", "min_delta", "checkpoint"), "training")
    optimizer = _get_str(training, "optimizer", "training", default="adam",
                         choices=("adam",))
    lr = _get_number(training, "lr", "training", DEFAULT_LR, float, strict_min=0.0)
    max_epochs = _get_number(training, "max_epochs", "training", DEFAULT_MAX_EPOCHS,
                             int, minimum=1)
    val_interval = training.get("val_interval", "epoch")
    if val_interval != "epoch":
        if isinstance(val_interval, bool) or not isinstance(val_interval, int) or val_interval < 1:
            raise SchemaError("training.val_interval", 'must be "epoch" or an integer >= 1')
    patience = _get_number(training, "patience", "training", DEFAULT_PATIENCE, int,
                           minimum=1)
    min_delta = _get_number(training, "min_delta", "training", 0.0, float, minimum=0.0)
    ckpt = _expect_map(training.get("checkpoint"), "training.checkpoint")
    _reject_unknown(ckpt, ("every_k",), "training.checkpoint")
    every_k = ckpt.get("every_k")
    if every_k is not None:
        every_k = _get_number(ckpt, "every_k", "training.checkpoint", None, int, minimum=1)

    evaluation = _validate_evaluation(raw.get("evaluation"), "evaluation")

    return {
        "exp_name": exp_name,
        "output_dir": output_dir,
        "seed": seed,
        "plugins": list(plugins),
        "data": data_out,
        "model": {
            "frontend": {"type": fe_type, "params": fe_params, "mode": fe_mode,
                         "aggregation": fe_agg},
            "backend": {"type": be_type, "params": be_params},
            "loss": {"type": loss_type, "params": loss_params},
        },
        "training": {
            "optimizer": optimizer, "lr": lr, "max_epochs": max_epochs,
            "val_interval": val_interval, "patience": patience,
            "min_delta": min_delta, "checkpoint": {"every_k": every_k},
        },
        "evaluation": evaluation,
    }


# ---------------------------------------------------------------------------
# the config object
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """The validated, fully defaulted experiment specification."""

    effective: dict

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.effective == other.effective

    @property
    def exp_name(self):
        return self.effective["exp_name"]

    @property
    def output_dir(self):
        return Path(self.effective["output_dir"])

    @property
    def seeds(self):
        seed = self.effective["seed"]
        return list(seed) if isinstance(seed, list) else [seed]

    @property
    def train_set_name(self):
        return dataset_display_name(self.effective["data"]["train"]["dataset"])

    @property
    def system_id(self):
        model = self.effective["model"]
        return "-".join([model["frontend"]["type"], model["backend"]["type"],
                         self.train_set_name])

    def to_yaml(self):
        return yaml.safe_dump(deepcopy(self.effective), sort_keys=True,
                              default_flow_style=False)

    @property
    def config_hash(self):
        return hashlib.sha256(self.to_yaml().encode()).hexdigest()

    def run_dir(self, seed):
        return self.output_dir / self.exp_name / f"seed_{seed}"


def dataset_display_name(dataset_cfg):
    params = dataset_cfg.get("params") or {}
    if params.get("name"):
        return params["name"]
    if params.get("path"):
        return Path(params["path"]).stem
    return dataset_cfg["type"]


def load_config(path, extra_plugins=()):
    """Parse + validate a config file; loads its plugins first."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else "?"
        raise ParseError(f"{path}: malformed YAML at line {line}: {exc.problem}") from exc
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: malformed YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: config root must be a mapping")

    plugins = list(raw.get("plugins") or []) + list(extra_plugins)
    registry.discover(plugins)
    if extra_plugins:
        raw = dict(raw)
        raw["plugins"] = plugins
    effective = validate(raw)

    # fail fast on missing table files for the built-in adapter
    for split, entry in effective["data"].items():
        ds = entry["dataset"]
        if ds["type"] == "table":
            table = ds["params"].get("path")
            if table and not Path(table).exists():
                raise DataError(f"data.{split}: metadata table not found: {table}")
    return ExperimentConfig(effective=effective)


# ---------------------------------------------------------------------------
# building runs
# ---------------------------------------------------------------------------

def _build_policy(augment_cfg):
    if not augment_cfg or not augment_cfg["items"]:
        return None
    return AugmentationPolicy(
        mode=augment_cfg["mode"],
        items=tuple(
            PolicyItem(name=i["type"], prob=i["prob"], params=i["params"])
            for i in augment_cfg["items"]
        ),
    )


def _build_loader(entry, seed, train):
    ds = registry.resolve("dataset", entry["dataset"]["type"], entry["dataset"]["params"])
    records = ds.load_records()
    t = entry["transform"]
    params = TransformParams(
        sample_rate=t["sample_rate"], duration_s=t["duration_s"],
        normalize=t["normalize"], pad_mode=t["pad_mode"],
    )
    loader = BatchLoader(
        records, params,
        policy=_build_policy(entry.get("augment_transform")) if train else None,
        batch_size=entry["loader"]["batch_size"],
        shuffle=entry["loader"]["shuffle"],
        workers=entry["loader"]["workers"],
        seed=seed,
        train=train,
    )
    loader.verify_files()
    return loader


@dataclass
class ExperimentRun:
    """One seed's run: directory prepared, components built on demand."""

    cfg: ExperimentConfig
    seed: int
    run_dir: Path

    def build(self, tracker=None):
        """seed -> loaders -> assembly -> trainer, all deterministically."""
        seed_everything(self.seed)
        data = self.cfg.effective["data"]
        loaders = {
            "train": _build_loader(data["train"], self.seed, train=True),
            "valid": _build_loader(data["valid"], self.seed, train=False),
        }
        if "test" in data:
            loaders["test"] = _build_loader(data["test"], self.seed, train=False)
        model = self.cfg.effective["model"]
        assembly = build_assembly(model["frontend"], model["backend"], model["loss"])
        trainer = Trainer(
            assembly, loaders["train"], loaders["valid"],
            self.cfg.effective["training"], self.run_dir,
            config_hash=self.cfg.config_hash, tracker=tracker,
        )
        return loaders, assembly, trainer


def build_experiment(cfg, overwrite=False, resume=False):
    """Prepare run directories (one per seed) and return their handles."""
    runs = []
    for seed in cfg.seeds:
        run_dir = cfg.run_dir(seed)
        marker = run_dir / EFFECTIVE_CONFIG_NAME
        if marker.exists() and not (overwrite or resume):
            raise RunDirExistsError(
                f"{run_dir} already holds a run for ({cfg.exp_name}, seed {seed}); "
                "pass --overwrite or --resume"
            )
        run_dir.mkdir(parents=True, exist_ok=True)
        marker.write_text(cfg.to_yaml())
        runs.append(ExperimentRun(cfg=cfg, seed=seed, run_dir=run_dir))
    return runs
