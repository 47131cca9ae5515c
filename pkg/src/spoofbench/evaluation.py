"""Scoring and equal-error-rate evaluation.

EER convention (fixed and used everywhere, including the tests' oracles):
with FAR(t) = fraction of spoof scores >= t and FRR(t) = fraction of
bonafide scores < t, sweep t over the sorted unique scores plus one virtual
threshold above the maximum. FAR - FRR is non-increasing and starts
positive; at the first swept point where it hits exactly zero the common
value is returned directly, otherwise the crossing between the adjacent
sign-change points is linearly interpolated.

The interpolation is evaluated in integer arithmetic (counts are integers)
with a single final division, so results are exact rationals correctly
rounded once. That makes EER bit-stable under monotone score transforms
and under the label-swap/score-negation symmetry.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .errors import DataError, MissingSeedCoverageError, SingleClassError

SCORE_COLUMNS = (
    "utt_id", "score", "label", "dataset_name", "seed", "system_id",
    "gender", "language", "pesq", "nisqa_mos",
)


@dataclass(frozen=True)
class ScoreRecord:
    """One utterance's detection score plus the metadata evaluation needs."""

    utt_id: str
    score: float
    label: Optional[str]  # "bonafide"/"spoof", None when the table had no labels
    dataset_name: str
    seed: int
    system_id: str
    gender: Optional[str] = None
    language: Optional[str] = None
    pesq: Optional[float] = None
    nisqa_mos: Optional[float] = None


def _count_curve(scores, labels):
    """FAR/FRR counts at the swept thresholds.

    Returns (thresholds, far_counts, frr_counts, n_spoof, n_bona) where the
    last threshold is the virtual point above the max (FAR 0, FRR all).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.size == 0:
        raise SingleClassError("empty score set")
    if not np.all(np.isfinite(scores)):
        raise DataError("scores must be finite")
    bona = np.sort(scores[labels == 1])
    spoof = np.sort(scores[labels == 0])
    if len(bona) == 0 or len(spoof) == 0:
        raise SingleClassError(
            f"EER needs both classes, got {len(bona)} bonafide / {len(spoof)} spoof"
        )
    thr = np.unique(scores)
    frr_c = np.searchsorted(bona, thr, side="left")  # bonafide strictly below t
    far_c = len(spoof) - np.searchsorted(spoof, thr, side="left")  # spoof >= t
    thr = np.append(thr, thr[-1] + 1.0)
    frr_c = np.append(frr_c, len(bona))
    far_c = np.append(far_c, 0)
    return thr, far_c, frr_c, len(spoof), len(bona)


def compute_eer(scores, labels):
    """Equal error rate and its threshold for bonafide=1 / spoof=0 labels.

    Returns (eer, threshold) with eer as a fraction in [0, 1].
    """
    thr, far_c, frr_c, n_spoof, n_bona = _count_curve(scores, labels)
    # Integer sign of FAR - FRR; exact, so ties are detected exactly.
    diff = far_c.astype(np.int64) * n_bona - frr_c.astype(np.int64) * n_spoof
    j = int(np.argmax(diff <= 0))  # first non-positive; diff[0] > 0 always
    if diff[j] == 0:
        return int(far_c[j]) / n_spoof, float(thr[j])
    d_prev, d_next = int(diff[j - 1]), int(diff[j])
    span = d_prev - d_next
    num = int(far_c[j - 1]) * span + d_prev * (int(far_c[j]) - int(far_c[j - 1]))
    eer = num / (n_spoof * span)
    alpha = d_prev / span
    threshold = float(thr[j - 1] + alpha * (thr[j] - thr[j - 1]))
    return eer, threshold


def far_frr_at(scores, labels, threshold):
    """Operating point of a score set at a fixed threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    bona = scores[labels == 1]
    spoof = scores[labels == 0]
    if len(bona) == 0 or len(spoof) == 0:
        raise SingleClassError("FAR/FRR need both classes")
    far = int((spoof >= threshold).sum()) / len(spoof)
    frr = int((bona < threshold).sum()) / len(bona)
    return far, frr


def _labels_to_ints(records):
    labels = []
    for r in records:
        if r.label not in ("bonafide", "spoof"):
            raise SingleClassError(f"{r.utt_id}: unlabelled record cannot enter an EER")
        labels.append(1 if r.label == "bonafide" else 0)
    return np.asarray(labels)


def eer_of_records(records):
    """compute_eer over ScoreRecords; returns (eer, threshold)."""
    scores = np.asarray([r.score for r in records], dtype=np.float64)
    return compute_eer(scores, _labels_to_ints(records))


def score_dataset(assembly, loader, dataset_name, seed, system_id):
    """Score every utterance in a deterministic loader.

    One ScoreRecord per utterance, metadata copied from the loader's
    records; rerunning on the same checkpoint yields identical scores.
    """
    by_id = {r.utt_id: r for r in loader.records}
    assembly.eval()
    out = []
    with torch.no_grad():
        for batch in loader.iter_epoch(0):
            scores = assembly.score(batch.waveforms).detach().cpu().numpy()
            for utt_id, score in zip(batch.utt_ids, scores):
                rec = by_id[utt_id]
                out.append(
                    ScoreRecord(
                        utt_id=utt_id,
                        score=float(score),
                        label=rec.label,
                        dataset_name=dataset_name,
                        seed=seed,
                        system_id=system_id,
                        gender=rec.gender,
                        language=rec.language,
                        pesq=rec.pesq,
                        nisqa_mos=rec.nisqa_mos,
                    )
                )
    return out


@dataclass
class EvalReport:
    """EER tables for one system: per-dataset, pooled, and macro-average."""

    system_id: str
    seeds: list
    per_dataset: dict  # dataset -> {"per_seed": {seed: eer}, "mean", "std", "n_seeds"}
    pooled: dict = field(default_factory=dict)  # pool name -> same summary shape
    macro_avg_eer: float = float("nan")

    def to_dict(self):
        return {
            "system_id": self.system_id,
            "seeds": self.seeds,
            "per_dataset": self.per_dataset,
            "pooled": self.pooled,
            "macro_avg_eer": self.macro_avg_eer,
        }


def _summarize_seed_values(per_seed):
    values = [per_seed[s] for s in sorted(per_seed)]
    mean = float(np.mean(values))
    # unbiased estimator; a single seed reports 0 with n_seeds flagging it
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return {
        "per_seed": {int(s): float(per_seed[s]) for s in sorted(per_seed)},
        "mean": mean,
        "std": std,
        "n_seeds": len(values),
    }


def pool_and_summarize(records, pooled_sets=None):
    """Aggregate ScoreRecords into per-system EvalReports.

    Per-dataset EERs are computed per seed then averaged; pooled EERs are
    computed on the concatenated score sets (never by averaging EERs);
    macro-average is the mean of per-dataset seed-mean EERs. Every system
    must cover each of its datasets with every seed it uses.
    """
    systems = {}
    for r in records:
        systems.setdefault(r.system_id, []).append(r)

    reports = {}
    for system_id in sorted(systems):
        recs = systems[system_id]
        datasets = sorted({r.dataset_name for r in recs})
        seeds = sorted({r.seed for r in recs})
        by_cell = {}
        for r in recs:
            by_cell.setdefault((r.dataset_name, r.seed), []).append(r)
        for ds in datasets:
            for seed in seeds:
                if (ds, seed) not in by_cell:
                    raise MissingSeedCoverageError(system_id, ds, seed)
        per_dataset = {}
        for ds in datasets:
            per_seed = {
                seed: eer_of_records(by_cell[(ds, seed)])[0] for seed in seeds
            }
            per_dataset[ds] = _summarize_seed_values(per_seed)
        pools = pooled_sets or {"all": datasets}
        pooled = {}
        for pool_name, members in pools.items():
            missing = [ds for ds in members if ds not in datasets]
            if missing:
                continue
            per_seed = {}
            for seed in seeds:
                concat = [r for ds in members for r in by_cell[(ds, seed)]]
                per_seed[seed] = eer_of_records(concat)[0]
            pooled[pool_name] = _summarize_seed_values(per_seed)
        macro = float(np.mean([per_dataset[ds]["mean"] for ds in datasets]))
        reports[system_id] = EvalReport(
            system_id=system_id,
            seeds=[int(s) for s in seeds],
            per_dataset=per_dataset,
            pooled=pooled,
            macro_avg_eer=macro,
        )
    return reports


def _format_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_scores(path, records):
    """Persist ScoreRecords as CSV with the exact documented column order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORE_COLUMNS)
        for r in records:
            writer.writerow([
                r.utt_id, repr(float(r.score)), r.label or "", r.dataset_name,
                r.seed, r.system_id, r.gender or "", r.language or "",
                _format_cell(r.pesq), _format_cell(r.nisqa_mos),
            ])


def read_scores(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"score file not found: {path}")
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in SCORE_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise DataError(f"{path}: score file missing columns {missing}")
        for row in reader:
            records.append(
                ScoreRecord(
                    utt_id=row["utt_id"],
                    score=float(row["score"]),
                    label=row["label"] or None,
                    dataset_name=row["dataset_name"],
                    seed=int(row["seed"]),
                    system_id=row["system_id"],
                    gender=row["gender"] or None,
                    language=row["language"] or None,
                    pesq=float(row["pesq"]) if row["pesq"] else None,
                    nisqa_mos=float(row["nisqa_mos"]) if row["nisqa_mos"] else None,
                )
            )
    return records


def write_report(report, out_dir):
    """Emit an EvalReport as JSON plus a flat CSV table under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    json_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    csv_path = out_dir / "eer_table.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scope", "name", "seed", "eer"])
        for ds in sorted(report.per_dataset):
            summary = report.per_dataset[ds]
            for seed in sorted(summary["per_seed"]):
                writer.writerow(["dataset", ds, seed, repr(summary["per_seed"][seed])])
            writer.writerow(["dataset_mean", ds, "", repr(summary["mean"])])
        for name in sorted(report.pooled):
            writer.writerow(["pooled_mean", name, "", repr(report.pooled[name]["mean"])])
        writer.writerow(["macro_average", "", "", repr(report.macro_avg_eer)])
    return json_path, csv_path
