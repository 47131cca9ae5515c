"""Metadata stage: load utterance tables into records.

Tables are Parquet (primary) or CSV (same column contract). Required
columns: ``utt_id`` (or derivable from ``audio_path``), ``audio_path``, and
``label`` for labelled splits. Optional columns ``gender``, ``language``,
``pesq``, ``nisqa_mos`` are carried through to scoring so fairness analyses
can group on them.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import pandas as pd

from ..errors import (
    DataError,
    DuplicateUttIdError,
    EmptyTableError,
    MissingColumnError,
)
from ..registry import DATASETS, Param, ParamSchema

LABELS = ("spoof", "bonafide")  # index == integer label
OPTIONAL_COLUMNS = ("gender", "language", "pesq", "nisqa_mos")


@dataclass(frozen=True)
class UtteranceRecord:
    """One row of dataset metadata."""

    utt_id: str
    audio_path: str
    label: Optional[str]  # "bonafide" / "spoof", None for unlabelled tables
    dataset_name: str
    gender: Optional[str] = None
    language: Optional[str] = None
    pesq: Optional[float] = None
    nisqa_mos: Optional[float] = None

    @property
    def label_index(self):
        """bonafide=1, spoof=0."""
        return None if self.label is None else LABELS.index(self.label)


def _clean_str(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    value = str(value).strip()
    return value or None


def _clean_float(value, column, utt_id):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    try:
        return float(value)
    except (TypeError, ValueError):
        raise DataError(f"{utt_id}: column {column!r} is not numeric: {value!r}")


def read_table(table_path):
    """Read a Parquet or CSV metadata table into a DataFrame (file order)."""
    path = Path(table_path)
    if not path.exists():
        raise DataError(f"metadata table not found: {path}")
    try:
        if path.suffix.lower() == ".csv":
            return pd.read_csv(path)
        return pd.read_parquet(path)
    except DataError:
        raise
    except Exception as exc:
        raise DataError(f"cannot read metadata table {path}: {exc}") from exc


def construct(table_path, dataset_name=None, require_label=True):
    """Load a metadata table into a list of UtteranceRecords, in file order.

    ``require_label=False`` admits evaluation-only tables without a label
    column; such records score but cannot contribute to an EER.
    """
    path = Path(table_path)
    frame = read_table(path)
    if len(frame) == 0:
        raise EmptyTableError(f"metadata table is empty: {path}")
    if "audio_path" not in frame.columns:
        raise MissingColumnError("audio_path", path)
    has_label = "label" in frame.columns
    if require_label and not has_label:
        raise MissingColumnError("label", path)
    name = dataset_name or path.stem

    if "utt_id" in frame.columns:
        ids = [_clean_str(v) for v in frame["utt_id"]]
    else:
        ids = [Path(str(p)).stem for p in frame["audio_path"]]

    records = []
    seen = set()
    for i, row in enumerate(frame.to_dict("records")):
        utt_id = ids[i]
        if not utt_id:
            raise DataError(f"{path}: row {i} has an empty utt_id")
        if utt_id in seen:
            raise DuplicateUttIdError(utt_id)
        seen.add(utt_id)
        label = _clean_str(row.get("label")) if has_label else None
        if has_label and label not in LABELS:
            raise DataError(
                f"{utt_id}: label must be one of {LABELS}, got {label!r}"
            )
        records.append(
            UtteranceRecord(
                utt_id=utt_id,
                audio_path=str(row["audio_path"]),
                label=label,
                dataset_name=name,
                gender=_clean_str(row.get("gender")),
                language=_clean_str(row.get("language")),
                pesq=_clean_float(row.get("pesq"), "pesq", utt_id),
                nisqa_mos=_clean_float(row.get("nisqa_mos"), "nisqa_mos", utt_id),
            )
        )
    return records


@DATASETS.register(
    "table",
    schema=ParamSchema(
        path=Param(str),
        name=Param(str, default=""),
        require_label=Param(bool, default=True),
    ),
)
class TableDataset:
    """Built-in dataset adapter reading a Parquet/CSV metadata table."""

    def __init__(self, path, name="", require_label=True):
        self.path = path
        self.name = name or Path(path).stem
        self.require_label = require_label

    def load_records(self):
        return construct(self.path, dataset_name=self.name, require_label=self.require_label)
