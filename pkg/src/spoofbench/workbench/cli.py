"""Command-line entry points.

Subcommands: train, eval, fairness, matrix expand, aggregate, components
list. Exit codes: 0 success, 2 config error, 3 data error, 4 numeric
failure, 5 incomplete grid.
"""

import argparse
import json
import re
import sys
from pathlib import Path

from .. import registry
from ..config import (
    EFFECTIVE_CONFIG_NAME,
    ExperimentConfig,
    build_experiment,
    load_config,
)
from ..data.records import construct
from ..data.transform import TransformParams
from ..engine.assembly import build_assembly
from ..errors import ConfigError, DataError, SpoofbenchError
from ..evaluation import compute_eer, read_scores, score_dataset, write_scores
from ..fairness import (
    garbe,
    partition,
    per_language_table,
    write_fairness_report,
    write_garbe_table,
)
from ..trainer import load_checkpoint
from .aggregate import write_aggregates
from .matrix import expand_matrix

_SEED_DIR_RE = re.compile(r"seed_(\d+)")


def _print(msg):
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args):
    cfg = load_config(args.config, extra_plugins=args.plugin)
    if args.seed:
        effective = dict(cfg.effective)
        effective["seed"] = args.seed if len(args.seed) > 1 else args.seed[0]
        cfg = ExperimentConfig(effective=effective)
    runs = build_experiment(cfg, overwrite=args.overwrite, resume=args.resume)
    for run in runs:
        _, _, trainer = run.build()
        report = trainer.train(resume=args.resume, max_steps=args.max_steps)
        _print(
            f"[{cfg.exp_name} seed {run.seed}] {report.stop_reason} at step "
            f"{report.state.step}; best val loss {report.state.best_val_loss:.6f} "
            f"(validation {report.state.best_val_index})"
        )
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _find_config_for_checkpoint(ckpt_path):
    run_dir = Path(ckpt_path).parent.parent
    candidate = run_dir / EFFECTIVE_CONFIG_NAME
    if not candidate.exists():
        raise ConfigError(
            f"cannot locate {EFFECTIVE_CONFIG_NAME} next to {ckpt_path}; pass --config"
        )
    return candidate


def _seed_from_path(ckpt_path, cfg):
    match = _SEED_DIR_RE.search(str(Path(ckpt_path).parent.parent.name))
    return int(match.group(1)) if match else cfg.seeds[0]


def _eval_entry_params(cfg):
    data = cfg.effective["data"]
    entry = data.get("test") or data["valid"]
    t = entry["transform"]
    params = TransformParams(
        sample_rate=t["sample_rate"], duration_s=t["duration_s"],
        normalize=t["normalize"], pad_mode=t["pad_mode"],
    )
    return params, entry["loader"]["batch_size"], entry["loader"]["workers"]


def cmd_eval(args):
    ckpt_path = Path(args.checkpoint)
    payload = load_checkpoint(ckpt_path)
    cfg_path = Path(args.config) if args.config else _find_config_for_checkpoint(ckpt_path)
    cfg = load_config(cfg_path, extra_plugins=args.plugin)
    if payload.get("config_hash") and payload["config_hash"] != cfg.config_hash:
        msg = (f"checkpoint config hash {payload['config_hash'][:12]} does not match "
               f"{cfg_path} ({cfg.config_hash[:12]})")
        if not args.force:
            raise ConfigError(msg + "; pass --force to score anyway")
        print(f"warning: {msg}", file=sys.stderr)

    seed = args.seed if args.seed is not None else _seed_from_path(ckpt_path, cfg)
    model = cfg.effective["model"]
    assembly = build_assembly(model["frontend"], model["backend"], model["loss"])
    assembly.load_state_dict(payload["params"])

    tables = [{"name": Path(t).stem, "table": t} for t in args.table]
    if not tables:
        tables = list(cfg.effective["evaluation"]["test_sets"])
    if not tables and "test" in cfg.effective["data"]:
        ds = cfg.effective["data"]["test"]["dataset"]
        if ds["type"] == "table":
            from ..config import dataset_display_name

            tables = [{"name": dataset_display_name(ds), "table": ds["params"]["path"]}]
    if not tables:
        raise ConfigError("no test tables: pass --table or configure evaluation.test_sets")

    out_dir = Path(args.out) if args.out else ckpt_path.parent.parent / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)
    params, batch_size, workers = _eval_entry_params(cfg)

    from ..data.loader import BatchLoader

    report = {"system_id": cfg.system_id, "seed": seed,
              "config_hash": cfg.config_hash, "datasets": {}}
    for entry in tables:
        name, table = entry["name"], entry["table"]
        records = construct(table, dataset_name=name, require_label=False)
        loader = BatchLoader(records, params, batch_size=batch_size,
                             workers=workers, seed=seed)
        loader.verify_files()
        scores = score_dataset(assembly, loader, name, seed, cfg.system_id)
        write_scores(out_dir / f"scores_{name}.csv", scores)
        labelled = [s for s in scores if s.label is not None]
        if len(labelled) == len(scores) and labelled:
            eer, threshold = compute_eer(
                [s.score for s in labelled],
                [1 if s.label == "bonafide" else 0 for s in labelled],
            )
            report["datasets"][name] = {"eer": eer, "threshold": threshold,
                                        "n": len(scores)}
            _print(f"{name}: EER {100.0 * eer:.2f}% ({len(scores)} utterances)")
        else:
            report["datasets"][name] = {"eer": None, "threshold": None,
                                        "n": len(scores)}
            _print(f"{name}: scores written, EER unavailable (unlabelled table)")

    eers = [d["eer"] for d in report["datasets"].values() if d["eer"] is not None]
    report["mean_eer"] = sum(eers) / len(eers) if eers else None
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# fairness
# ---------------------------------------------------------------------------

def cmd_fairness(args):
    records = []
    for path in args.scores:
        records.extend(read_scores(path))
    labelled = [r for r in records if r.label is not None]
    if not labelled:
        raise DataError("fairness analysis needs labelled score records")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    bands = [float(b) for b in args.bands.split(",")] if args.bands else None
    systems = sorted({r.system_id for r in labelled})
    per_system = {}
    for system in systems:
        recs = [r for r in labelled if r.system_id == system]
        per_system[system] = {}
        for attribute in args.attribute:
            part = partition(recs, attribute, bands=bands, n_bands=args.n_bands)
            report = garbe(recs, part, alpha=args.alpha, mode=args.mode,
                           include_unknown=args.include_unknown)
            per_system[system][attribute] = report
            path = out_dir / f"fairness_{attribute}__{system}.json"
            write_fairness_report(report, path)
            extra = f", delta {report.delta:+.4f}" if report.delta is not None else ""
            _print(f"{system} / {attribute}: GARBE {report.garbe:.4f}{extra}")

    write_garbe_table(per_system, out_dir / "garbe_table.csv")
    if "language" in args.attribute:
        rows = per_language_table(labelled)
        with open(out_dir / "language_eer.csv", "w", newline="") as fh:
            import csv as _csv

            writer = _csv.writer(fh)
            writer.writerow(["language", "system_id", "eer", "lang_mean",
                             "lang_min", "lang_max", "n"])
            for row in rows:
                for system in sorted(row["per_system"]):
                    eer = row["per_system"][system]
                    writer.writerow([
                        row["language"], system,
                        "n/a" if eer is None else repr(eer),
                        "n/a" if row["mean"] is None else repr(row["mean"]),
                        "n/a" if row["min"] is None else repr(row["min"]),
                        "n/a" if row["max"] is None else repr(row["max"]),
                        row["n"],
                    ])
    return 0


# ---------------------------------------------------------------------------
# matrix / aggregate / components
# ---------------------------------------------------------------------------

def cmd_matrix_expand(args):
    out_dir = Path(args.out) if args.out else Path(args.spec).parent / "configs"
    paths = expand_matrix(args.spec, out_dir)
    _print(f"wrote {len(paths)} configs to {out_dir}")
    return 0


def cmd_aggregate(args):
    out_dir = Path(args.out) if args.out else Path(args.run_root) / "aggregate"
    paths = write_aggregates(args.run_root, out_dir,
                             allow_incomplete=args.allow_incomplete)
    for name in sorted(paths):
        _print(f"{name}: {paths[name]}")
    return 0


def cmd_components_list(args):
    registry.discover(args.plugin)
    kinds = [args.kind] if args.kind else list(registry.KINDS)
    for kind in kinds:
        names = registry.list_components(kind)
        _print(f"{kind}: {', '.join(names) if names else '<none>'}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="spoofbench",
        description="Configuration-driven training and evaluation of audio "
                    "deepfake detectors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train every seed of an experiment config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, action="append", default=[],
                   help="override the config seed(s); repeatable")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--overwrite", action="store_true")
    p.add_argument("--plugin", action="append", default=[])
    p.add_argument("--max-steps", type=int, default=None,
                   help="stop after this many optimization steps (smoke runs)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score test tables with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--table", action="append", default=[])
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--plugin", action="append", default=[])
    p.add_argument("--force", action="store_true",
                   help="score even if the checkpoint/config hashes differ")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fairness", help="group-fairness analysis of score files")
    p.add_argument("scores", nargs="+")
    p.add_argument("--attribute", action="append", required=True,
                   choices=("gender", "language", "quality_pesq", "quality_nisqa"))
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--mode", default="far_frr_gini",
                   choices=("far_frr_gini", "eer_gini"))
    p.add_argument("--bands", default=None,
                   help="explicit quality band edges, comma separated")
    p.add_argument("--n-bands", type=int, default=4)
    p.add_argument("--include-unknown", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fairness)

    p = sub.add_parser("matrix", help="experiment-matrix tools")
    msub = p.add_subparsers(dest="matrix_command", required=True)
    pe = msub.add_parser("expand", help="write one config per grid cell")
    pe.add_argument("spec")
    pe.add_argument("--out", default=None)
    pe.set_defaults(func=cmd_matrix_expand)

    p = sub.add_parser("aggregate", help="aggregate run reports into tables")
    p.add_argument("run_root")
    p.add_argument("--out", default=None)
    p.add_argument("--allow-incomplete", action="store_true")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("components", help="registry inspection")
    csub = p.add_subparsers(dest="components_command", required=True)
    pl = csub.add_parser("list", help="list registered component names")
    pl.add_argument("--kind", choices=registry.KINDS, default=None)
    pl.add_argument("--plugin", action="append", default=[])
    pl.set_defaults(func=cmd_components_list)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except SpoofbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
