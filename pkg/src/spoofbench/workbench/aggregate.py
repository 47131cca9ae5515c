"""Aggregation of per-run evaluation reports into plot-ready tables.

Reads every ``<cell>/seed_<s>/eval/report.json`` under a run root and emits
plain CSV: the long-format table, the seed-mean table, the front-end x
dataset mean matrix (heatmap source), per-front-end EER distributions
(boxplot source), and per-factor marginal means. The expected grid is the
Cartesian product of the observed axis values; holes raise IncompleteGrid
with the missing cells listed instead of silently averaging around them.

Regenerating aggregates from the same reports yields identical bytes.
"""

import csv
import json
import re
from pathlib import Path

import numpy as np

from ..errors import DataError, IncompleteGridError
from .matrix import parse_cell

LONG_HEADER = ("system_id", "frontend", "backend", "training_set",
               "dataset", "seed", "eer")
_SEED_DIR_RE = re.compile(r"^seed_(\d+)$")


def collect_rows(run_root):
    """Long-format rows from every run report under ``run_root``."""
    run_root = Path(run_root)
    if not run_root.is_dir():
        raise DataError(f"run root not found: {run_root}")
    rows = []
    for cell_dir in sorted(p for p in run_root.iterdir() if p.is_dir()):
        seed_dirs = sorted(
            p for p in cell_dir.iterdir()
            if p.is_dir() and _SEED_DIR_RE.match(p.name)
        )
        reports = [p / "eval" / "report.json" for p in seed_dirs]
        reports = [p for p in reports if p.exists()]
        if not reports:
            continue
        frontend, backend, training_set = parse_cell(cell_dir.name)
        for report_path in reports:
            report = json.loads(report_path.read_text())
            seed = int(report["seed"])
            for dataset in sorted(report["datasets"]):
                eer = report["datasets"][dataset].get("eer")
                if eer is None:
                    continue
                rows.append({
                    "system_id": cell_dir.name,
                    "frontend": frontend,
                    "backend": backend,
                    "training_set": training_set,
                    "dataset": dataset,
                    "seed": seed,
                    "eer": float(eer),
                })
    if not rows:
        raise DataError(f"no evaluation reports found under {run_root}")
    return rows


def check_grid(rows):
    """The observed axis values must form a full Cartesian product."""
    fes = sorted({r["frontend"] for r in rows})
    bes = sorted({r["backend"] for r in rows})
    tss = sorted({r["training_set"] for r in rows})
    seeds = sorted({r["seed"] for r in rows})
    datasets = sorted({r["dataset"] for r in rows})
    have = {(r["frontend"], r["backend"], r["training_set"], r["seed"], r["dataset"])
            for r in rows}
    missing = []
    for fe in fes:
        for be in bes:
            for ts in tss:
                for seed in seeds:
                    for ds in datasets:
                        if (fe, be, ts, seed, ds) not in have:
                            missing.append(f"{fe}-{be}-{ts}/seed_{seed}/{ds}")
    if missing:
        raise IncompleteGridError(missing)


def seed_mean_rows(rows):
    """Collapse seeds: mean and unbiased std per (system, dataset)."""
    cells = {}
    for r in rows:
        key = (r["system_id"], r["frontend"], r["backend"], r["training_set"],
               r["dataset"])
        cells.setdefault(key, []).append(r["eer"])
    out = []
    for key in sorted(cells):
        values = cells[key]
        out.append({
            "system_id": key[0], "frontend": key[1], "backend": key[2],
            "training_set": key[3], "dataset": key[4],
            "mean_eer": float(np.mean(values)),
            "std_eer": float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
            "n_seeds": len(values),
        })
    return out


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_aggregates(run_root, out_dir, allow_incomplete=False):
    """Produce all aggregate tables; returns {table_name: path}."""
    rows = collect_rows(run_root)
    if not allow_incomplete:
        check_grid(rows)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    means = seed_mean_rows(rows)
    paths = {}

    paths["long"] = _write_csv(
        out_dir / "long.csv", LONG_HEADER,
        [[r["system_id"], r["frontend"], r["backend"], r["training_set"],
          r["dataset"], r["seed"], repr(r["eer"])]
         for r in sorted(rows, key=lambda r: (r["system_id"], r["dataset"], r["seed"]))],
    )

    paths["seed_mean"] = _write_csv(
        out_dir / "seed_mean.csv",
        ("system_id", "frontend", "backend", "training_set", "dataset",
         "mean_eer", "std_eer", "n_seeds"),
        [[m["system_id"], m["frontend"], m["backend"], m["training_set"],
          m["dataset"], repr(m["mean_eer"]), repr(m["std_eer"]), m["n_seeds"]]
         for m in means],
    )

    datasets = sorted({m["dataset"] for m in means})
    frontends = sorted({m["frontend"] for m in means})
    heat_rows = []
    for fe in frontends:
        row = [fe]
        for ds in datasets:
            vals = [m["mean_eer"] for m in means
                    if m["frontend"] == fe and m["dataset"] == ds]
            row.append(repr(float(np.mean(vals))) if vals else "")
        heat_rows.append(row)
    paths["heatmap"] = _write_csv(
        out_dir / "heatmap_frontend_by_dataset.csv", ["frontend"] + datasets, heat_rows
    )

    paths["boxplot"] = _write_csv(
        out_dir / "boxplot_frontend_eer.csv",
        ("frontend", "system_id", "backend", "training_set", "dataset", "mean_eer"),
        [[m["frontend"], m["system_id"], m["backend"], m["training_set"],
          m["dataset"], repr(m["mean_eer"])]
         for m in sorted(means, key=lambda m: (m["frontend"], m["system_id"], m["dataset"]))],
    )

    marginal_rows = []
    for factor in ("frontend", "backend", "training_set"):
        for level in sorted({m[factor] for m in means}):
            vals = [m["mean_eer"] for m in means if m[factor] == level]
            marginal_rows.append([factor, level, repr(float(np.mean(vals)))])
    paths["marginals"] = _write_csv(
        out_dir / "marginal_means.csv", ("factor", "level", "mean_eer"), marginal_rows
    )
    return paths
