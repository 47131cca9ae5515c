"""Shared fixtures-adjacent helpers for the test suite."""

import yaml


def base_config(corpus, out_dir):
    """A fast-to-train experiment config over the session corpus."""
    return {
        "exp_name": "exp",
        "output_dir": str(out_dir),
        "seed": 3,
        "data": {
            "train": {
                "dataset": {"type": "table",
                            "params": {"path": corpus["tables"]["train"]}},
                "transform": {"duration_s": 0.3},
                "loader": {"batch_size": 8},
            },
            "valid": {
                "dataset": {"type": "table",
                            "params": {"path": corpus["tables"]["valid"]}},
                "transform": {"duration_s": 0.3},
            },
        },
        "model": {
            "frontend": {"type": "reference",
                         "params": {"feature_dim": 8, "stem_kernel": 40,
                                    "stem_stride": 32}},
            "backend": {"type": "mlp", "params": {"hidden": [8]}},
            "loss": {"type": "ce"},
        },
        "training": {"lr": 1e-3, "max_epochs": 1},
    }


def write_config(cfg, path):
    path.write_text(yaml.safe_dump(cfg))
    return path
