"""Experiment-matrix expansion: axes x template -> one config per cell.

A matrix spec is a YAML file with ``axes`` (value lists for ``frontend``,
``backend``, ``training_set``, optionally ``seed``) and ``template`` (an
experiment config whose string values may hold ``${axis}`` placeholders).
Each Cartesian-product cell is substituted, validated, and written as an
effective config named after the cell. Cell names are bijective: axis
values may not contain ``-`` so ``frontend-backend-training_set`` parses
back uniquely.
"""

import itertools
import re
from pathlib import Path

import yaml

from .. import registry
from ..config import ExperimentConfig, validate
from ..errors import ConfigError, ParseError, SchemaError

CELL_AXES = ("frontend", "backend", "training_set")
_VALUE_RE = re.compile(r"^[A-Za-z0-9_.]+$")
_PLACEHOLDER_RE = re.compile(r"\$\{([A-Za-z0-9_]+)\}")


def format_cell(frontend, backend, training_set):
    return f"{frontend}-{backend}-{training_set}"


def parse_cell(name):
    parts = name.split("-")
    if len(parts) != 3:
        raise ConfigError(
            f"{name!r} is not a cell name (expected frontend-backend-training_set)"
        )
    return tuple(parts)


def _substitute(node, bindings, used):
    if isinstance(node, dict):
        return {k: _substitute(v, bindings, used) for k, v in node.items()}
    if isinstance(node, list):
        return [_substitute(v, bindings, used) for v in node]
    if isinstance(node, str):
        def repl(match):
            axis = match.group(1)
            if axis not in bindings:
                raise SchemaError(
                    "template", f"placeholder ${{{axis}}} is not bound by any axis"
                )
            used.add(axis)
            return str(bindings[axis])

        full = _PLACEHOLDER_RE.fullmatch(node)
        if full:  # preserve non-string axis values (e.g. numbers) when alone
            axis = full.group(1)
            if axis not in bindings:
                raise SchemaError(
                    "template", f"placeholder ${{{axis}}} is not bound by any axis"
                )
            used.add(axis)
            return bindings[axis]
        return _PLACEHOLDER_RE.sub(repl, node)
    return node


def load_matrix_spec(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"matrix spec not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: malformed YAML: {exc}") from exc
    if not isinstance(raw, dict) or "axes" not in raw or "template" not in raw:
        raise SchemaError("matrix", "spec needs 'axes' and 'template' sections")
    axes = raw["axes"]
    if not isinstance(axes, dict):
        raise SchemaError("matrix.axes", "expected a mapping of axis -> value list")
    for axis in CELL_AXES:
        if axis not in axes:
            raise SchemaError(f"matrix.axes.{axis}", "missing required axis")
    for axis, values in axes.items():
        if axis not in CELL_AXES + ("seed",):
            raise SchemaError(f"matrix.axes.{axis}", "unknown axis")
        if not isinstance(values, list) or not values:
            raise SchemaError(f"matrix.axes.{axis}", "expected a non-empty list")
        if axis in CELL_AXES:
            for v in values:
                if not isinstance(v, str) or not _VALUE_RE.match(v):
                    raise SchemaError(
                        f"matrix.axes.{axis}",
                        f"value {v!r} must match [A-Za-z0-9_.]+ (no '-') "
                        "so run-directory names parse back uniquely",
                    )
    return axes, raw["template"]


def expand_matrix(spec_path, out_dir):
    """Write one validated effective config per grid cell; returns the paths."""
    axes, template = load_matrix_spec(spec_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    registry.discover(template.get("plugins") or [])
    seeds = axes.get("seed")
    paths = []
    grid = itertools.product(axes["frontend"], axes["backend"], axes["training_set"])
    for fe, be, ts in grid:
        bindings = {"frontend": fe, "backend": be, "training_set": ts}
        used = set()
        raw = _substitute(template, bindings, used)
        # the cell name binds all three axes even if the template body
        # doesn't mention one of them
        cell = format_cell(fe, be, ts)
        raw["exp_name"] = cell
        if seeds is not None:
            raw["seed"] = list(seeds)
        cfg = ExperimentConfig(effective=validate(raw))
        path = out_dir / f"{cell}.yaml"
        path.write_text(cfg.to_yaml())
        paths.append(path)
    return paths
