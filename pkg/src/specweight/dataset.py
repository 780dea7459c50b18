"""Cohort container and the long-format cohort CSV contract.

One subject = one sample: a variable-length sequence of fixed-width visit
feature vectors plus a binary label. The CSV layout is long format, one row
per visit, so sequences of different lengths need no padding:

    subject_id,visit,y,f_<factor...>,x_0..x_<F-1>

`visit` is 0-based and contiguous per subject; `y` and all factor columns are
constant within a subject; rows are sorted by (subject_id, visit); UTF-8 with
"." as the decimal separator. Factor columns feed graph construction only and
are never part of the model input.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .factor_graph import FactorTable


@dataclass(frozen=True)
class Subject:
    subject_id: str
    visits: np.ndarray  # (n_visits, feature_width)
    label: int

    def __post_init__(self):
        visits = np.asarray(self.visits, dtype=np.float64)
        if visits.ndim != 2 or visits.shape[0] < 1:
            raise DataError(f"subject {self.subject_id}: needs at least one visit row")
        if not np.all(np.isfinite(visits)):
            raise DataError(f"subject {self.subject_id}: non-finite feature values")
        if self.label not in (0, 1):
            raise DataError(f"subject {self.subject_id}: label must be 0 or 1")
        object.__setattr__(self, "visits", visits)


@dataclass(frozen=True)
class CohortDataset:
    subjects: tuple[Subject, ...]

    def __post_init__(self):
        subjects = tuple(self.subjects)
        if not subjects:
            raise DataError("empty cohort")
        width = subjects[0].visits.shape[1]
        for s in subjects:
            if s.visits.shape[1] != width:
                raise DataError(
                    f"subject {s.subject_id}: feature width {s.visits.shape[1]} != {width}"
                )
        ids = [s.subject_id for s in subjects]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate subject ids")
        object.__setattr__(self, "subjects", subjects)

    @property
    def n_samples(self) -> int:
        return len(self.subjects)

    @property
    def feature_width(self) -> int:
        return self.subjects[0].visits.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.subjects], dtype=np.int64)

    @property
    def subject_ids(self) -> list[str]:
        return [s.subject_id for s in self.subjects]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_cohort_csv(path, data: CohortDataset, factors: FactorTable) -> None:
    if factors.n_samples != data.n_samples:
        raise DataError("factor table and cohort sample counts differ")
    header = (["subject_id", "visit", "y"]
              + [f"f_{name}" for name in factors.factor_names]
              + [f"x_{j}" for j in range(data.feature_width)])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, subject in enumerate(data.subjects):
            fvals = [_fmt(v) for v in factors.values[i]]
            for t in range(subject.visits.shape[0]):
                writer.writerow([subject.subject_id, t, subject.label] + fvals
                                + [_fmt(v) for v in subject.visits[t]])


def read_cohort_csv(path) -> tuple[CohortDataset, FactorTable]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)

    if header[:3] != ["subject_id", "visit", "y"]:
        raise DataError(f"{path}: header must start with subject_id,visit,y")
    factor_names = [c[2:] for c in header if c.startswith("f_")]
    feature_cols = [c for c in header if c.startswith("x_")]
    n_factors = len(factor_names)
    width = len(feature_cols)
    if width < 1:
        raise DataError(f"{path}: no feature columns (x_*)")
    if header[3:] != [f"f_{n}" for n in factor_names] + feature_cols:
        raise DataError(f"{path}: columns must be subject_id,visit,y,f_*,x_*")
    if feature_cols != [f"x_{j}" for j in range(width)]:
        raise DataError(f"{path}: feature columns must be x_0..x_{width - 1} in order")
    if not rows:
        raise DataError(f"{path}: no data rows")

    subjects: list[Subject] = []
    factor_rows: list[list[float]] = []
    i = 0
    seen: set[str] = set()
    while i < len(rows):
        sid = rows[i][0]
        if sid in seen:
            raise DataError(f"{path}: rows for subject {sid} are not contiguous")
        seen.add(sid)
        block = []
        while i < len(rows) and rows[i][0] == sid:
            block.append(rows[i])
            i += 1
        try:
            visits_idx = [int(r[1]) for r in block]
            labels = {int(r[2]) for r in block}
            fvals = [[float(v) for v in r[3:3 + n_factors]] for r in block]
            feats = np.array([[float(v) for v in r[3 + n_factors:]] for r in block])
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}: malformed row for subject {sid}: {exc}") from None
        if visits_idx != list(range(len(block))):
            raise DataError(f"{path}: subject {sid}: visit indices must be 0..{len(block) - 1}")
        if len(labels) != 1:
            raise DataError(f"{path}: subject {sid}: label must be constant across visits")
        if any(fv != fvals[0] for fv in fvals[1:]):
            raise DataError(f"{path}: subject {sid}: factor values must be constant across visits")
        if feats.shape[1] != width:
            raise DataError(f"{path}: subject {sid}: wrong feature count")
        subjects.append(Subject(sid, feats, labels.pop()))
        factor_rows.append(fvals[0])

    data = CohortDataset(tuple(subjects))
    factors = FactorTable(np.array(factor_rows, dtype=np.float64), tuple(factor_names))
    return data, factors


def write_groups_csv(path, subject_ids, groups) -> None:
    """Ground-truth sidecar: subject_id, noise_group."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject_id", "noise_group"])
        for sid, grp in zip(subject_ids, groups):
            writer.writerow([sid, grp])


def read_groups_csv(path) -> dict[str, str]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["subject_id", "noise_group"]:
            raise DataError(f"{path}: expected header subject_id,noise_group")
        return {row[0]: row[1] for row in reader}
