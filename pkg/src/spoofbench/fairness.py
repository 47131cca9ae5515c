"""Group-fairness analysis over score sets.

Groups come from utterance metadata: gender, language, or perceptual
quality bands (quantile or explicit edges over pesq / nisqa_mos). The
headline metric aggregates per-group error-rate dispersion with a
sample-corrected Gini coefficient; 0 means perfectly equitable.

Two aggregation modes are emitted because the single-number-per-attribute
convention admits both readings: ``far_frr_gini`` fixes the threshold at
the pooled-set EER point and combines Gini(FRR_g) and Gini(FAR_g) with
weight alpha, while ``eer_gini`` takes the Gini of per-group EERs.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    DataError,
    FewerThanTwoGroupsError,
    GroupMissingClassError,
    SingleValueError,
    ZeroMeanError,
)
from .evaluation import eer_of_records, far_frr_at

ATTRIBUTES = ("gender", "language", "quality_pesq", "quality_nisqa")
_ATTRIBUTE_FIELD = {
    "gender": "gender",
    "language": "language",
    "quality_pesq": "pesq",
    "quality_nisqa": "nisqa_mos",
}
UNKNOWN_GROUP = "unknown"
MODES = ("far_frr_gini", "eer_gini")


def _record_key(record):
    # utt_ids are only unique within one (dataset, seed, system) slice
    return (
        record.utt_id,
        getattr(record, "dataset_name", None),
        getattr(record, "seed", None),
        getattr(record, "system_id", None),
    )


@dataclass
class GroupPartition:
    attribute: str
    groups: dict  # group label -> list of record keys
    band_edges: Optional[list] = None  # quality attributes only

    def labeled_groups(self, include_unknown=False):
        labels = sorted(self.groups)
        if not include_unknown:
            labels = [g for g in labels if g != UNKNOWN_GROUP]
        return labels


@dataclass
class FairnessReport:
    attribute: str
    mode: str
    alpha: float
    groups: dict  # label -> {"n", "eer", "far_at_t", "frr_at_t"}
    garbe: float
    threshold: Optional[float] = None
    delta: Optional[float] = None

    def to_dict(self):
        out = {
            "attribute": self.attribute,
            "mode": self.mode,
            "alpha": self.alpha,
            "groups": self.groups,
            "garbe": self.garbe,
        }
        if self.threshold is not None:
            out["threshold"] = self.threshold
        if self.delta is not None:
            out["delta"] = self.delta
        return out


def attribute_field(attribute):
    if attribute not in ATTRIBUTES:
        raise DataError(f"unknown fairness attribute {attribute!r}; known: {ATTRIBUTES}")
    return _ATTRIBUTE_FIELD[attribute]


def partition(records, attribute, bands=None, n_bands=4):
    """Partition records by a group attribute.

    Quality attributes are banded: ``bands`` gives explicit edges, else
    quantile edges are computed from the pooled metric (quartiles by
    default). Records lacking the attribute land in the "unknown" group.
    """
    column = attribute_field(attribute)
    quality = attribute.startswith("quality_")
    values = {_record_key(r): getattr(r, column) for r in records}
    present = {k: v for k, v in values.items() if v is not None}
    if not present:
        raise DataError(f"no record carries the {column!r} column needed for {attribute}")

    groups = {}
    edges = None
    if quality:
        if bands is not None:
            edges = sorted(float(e) for e in bands)
        else:
            qs = [i / n_bands for i in range(1, n_bands)]
            edges = [float(q) for q in np.quantile(list(present.values()), qs)]
        n_groups = len(edges) + 1
        for key, value in present.items():
            idx = int(np.searchsorted(edges, value, side="left"))
            groups.setdefault(f"band_{idx + 1}_of_{n_groups}", []).append(key)
    else:
        for key, value in present.items():
            groups.setdefault(str(value), []).append(key)

    unknown = [k for k, v in values.items() if v is None]
    if unknown:
        groups[UNKNOWN_GROUP] = unknown
    usable = [g for g in groups if g != UNKNOWN_GROUP]
    if len(usable) < 2:
        raise FewerThanTwoGroupsError(
            f"attribute {attribute!r} yields {len(usable)} group(s); need >= 2"
        )
    return GroupPartition(attribute=attribute, groups=groups, band_edges=edges)


def gini(values):
    """Sample-corrected Gini coefficient of nonnegative values.

    G = n/(n-1) * sum_ij |x_i - x_j| / (2 n^2 mean), computed via the
    sorted-rank identity rather than the pairwise double sum.
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 2:
        raise SingleValueError(f"gini needs >= 2 values, got {n}")
    if np.any(x < 0):
        raise DataError("gini values must be nonnegative")
    mean = float(np.mean(x))
    if mean <= 0.0:
        raise ZeroMeanError("gini is undefined for zero-mean values")
    x = np.sort(x)
    ranks = 2.0 * np.arange(1, n + 1) - n - 1  # 1-indexed: 2k - n - 1
    pairwise_half = float(np.dot(ranks, x))  # = sum_ij |x_i - x_j| / 2
    return (n / (n - 1)) * pairwise_half / (n * n * mean)


def _gini_term(values):
    # Equal rates (including the all-zero case) are perfectly fair.
    values = np.asarray(values, dtype=np.float64)
    if float(values.max()) == float(values.min()):
        return 0.0
    return gini(values)


def _group_records(records, part, include_unknown):
    by_key = {_record_key(r): r for r in records}
    out = {}
    for label in part.labeled_groups(include_unknown):
        recs = [by_key[k] for k in part.groups[label] if k in by_key]
        if recs:
            out[label] = recs
    if len(out) < 2:
        raise FewerThanTwoGroupsError(
            f"fewer than two non-empty groups for {part.attribute!r}"
        )
    return out


def garbe(records, part, alpha=0.5, mode="far_frr_gini", include_unknown=False):
    """Gini-aggregated error-rate equitability over a partition.

    Every included group must contain both classes. The report carries
    per-group EERs regardless of mode, plus the FAR/FRR operating points
    at the pooled-EER threshold.
    """
    if mode not in MODES:
        raise DataError(f"unknown garbe mode {mode!r}; known: {MODES}")
    if not 0.0 <= alpha <= 1.0:
        raise DataError(f"alpha must be in [0, 1], got {alpha}")
    grouped = _group_records(records, part, include_unknown)
    for label, recs in grouped.items():
        labels = {r.label for r in recs}
        if not {"bonafide", "spoof"} <= labels:
            raise GroupMissingClassError(label)

    pooled = [r for label in sorted(grouped) for r in grouped[label]]
    _, threshold = eer_of_records(pooled)

    group_stats = {}
    eers, fars, frrs = [], [], []
    for label in sorted(grouped):
        recs = grouped[label]
        scores = np.asarray([r.score for r in recs])
        ints = np.asarray([1 if r.label == "bonafide" else 0 for r in recs])
        eer, _ = eer_of_records(recs)
        far, frr = far_frr_at(scores, ints, threshold)
        group_stats[label] = {
            "n": len(recs), "eer": eer, "far_at_t": far, "frr_at_t": frr,
        }
        eers.append(eer)
        fars.append(far)
        frrs.append(frr)

    if mode == "eer_gini":
        value = _gini_term(eers)
    else:
        value = alpha * _gini_term(frrs) + (1.0 - alpha) * _gini_term(fars)

    delta = None
    if part.attribute == "gender" and {"F", "M"} <= set(group_stats):
        delta = group_stats["F"]["eer"] - group_stats["M"]["eer"]
    return FairnessReport(
        attribute=part.attribute,
        mode=mode,
        alpha=alpha,
        groups=group_stats,
        garbe=value,
        threshold=threshold,
        delta=delta,
    )


def gender_gap(records, part=None):
    """EER gap female minus male: positive means female speakers fare worse."""
    if part is None:
        part = partition(records, "gender")
    grouped = _group_records(records, part, include_unknown=False)
    for needed in ("F", "M"):
        if needed not in grouped:
            raise GroupMissingClassError(needed)
    eer_f, _ = eer_of_records(grouped["F"])
    eer_m, _ = eer_of_records(grouped["M"])
    return eer_f - eer_m, eer_f, eer_m


def per_language_table(records):
    """Per-language EERs with cross-system spread, sorted by mean EER.

    Returns a list of rows {language, per_system, mean, min, max, n};
    languages where some system sees only one class get None entries
    rather than being dropped.
    """
    langs = sorted({r.language for r in records if r.language is not None})
    if not langs:
        raise DataError("no record carries the 'language' column")
    systems = sorted({r.system_id for r in records})
    rows = []
    for lang in langs:
        lrecs = [r for r in records if r.language == lang]
        per_system = {}
        for system in systems:
            srecs = [r for r in lrecs if r.system_id == system]
            if not srecs:
                continue
            try:
                per_system[system], _ = eer_of_records(srecs)
            except DataError:
                per_system[system] = None  # single-class: report n/a, don't drop
        values = [v for v in per_system.values() if v is not None]
        rows.append({
            "language": lang,
            "per_system": per_system,
            "mean": float(np.mean(values)) if values else None,
            "min": min(values) if values else None,
            "max": max(values) if values else None,
            "n": len(lrecs),
        })
    rows.sort(key=lambda row: (row["mean"] is None, row["mean"], row["language"]))
    return rows


def write_fairness_report(report, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return path


def write_garbe_table(per_system, path):
    """CSV matrix of GARBE scores: one row per system, one column per attribute."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = ["pesq", "nisqa_mos", "gender", "language"]
    attr_of = {
        "pesq": "quality_pesq", "nisqa_mos": "quality_nisqa",
        "gender": "gender", "language": "language",
    }
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["system_id"] + columns)
        for system in sorted(per_system):
            reports = per_system[system]
            row = [system]
            for col in columns:
                rep = reports.get(attr_of[col])
                row.append("" if rep is None else repr(rep.garbe))
            writer.writerow(row)
    return path
