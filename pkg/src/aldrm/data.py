"""Long-format longitudinal datasets.

A dataset is an ordered list of subjects. Each subject carries time-constant
covariates, a non-decreasing vector of observation times and the matching
responses. The canonical on-disk form is a long CSV with columns
``id, time, y`` followed by one column per covariate.
"""

import csv
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

RESERVED_COLUMNS = ("id", "time", "y")


@dataclass
class SubjectRecord:
    id: str
    covariates: dict
    times: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.y.shape:
            raise DataError(f"subject {self.id}: times and y must be 1-D and equal length")
        if self.times.size == 0:
            raise DataError(f"subject {self.id}: no observations")
        if not np.all(np.isfinite(self.times)):
            raise DataError(f"subject {self.id}: non-finite observation time")
        if np.any(np.diff(self.times) < 0):
            raise DataError(f"subject {self.id}: observation times must be non-decreasing")
        if not np.all(np.isfinite(self.y)):
            raise DataError(f"subject {self.id}: missing or non-finite response")
        self.covariates = {k: float(v) for k, v in self.covariates.items()}

    @property
    def n_obs(self):
        return self.y.size


@dataclass
class LongitudinalDataset:
    subjects: list = field(default_factory=list)

    def __post_init__(self):
        if self.subjects:
            names = set(self.subjects[0].covariates)
            for s in self.subjects[1:]:
                if set(s.covariates) != names:
                    raise DataError(f"subject {s.id}: covariate names differ from subject {self.subjects[0].id}")

    @property
    def n_subjects(self):
        return len(self.subjects)

    @property
    def n_obs(self):
        return int(sum(s.n_obs for s in self.subjects))

    @property
    def covariate_names(self):
        return list(self.subjects[0].covariates) if self.subjects else []

    def offsets(self):
        """Start index of each subject in the stacked observation vector, plus the total."""
        return np.concatenate([[0], np.cumsum([s.n_obs for s in self.subjects])]).astype(np.intp)

    def stacked(self):
        """Return ``(subject_index, time, y)`` arrays over all observations."""
        idx = np.repeat(np.arange(self.n_subjects), [s.n_obs for s in self.subjects])
        t = np.concatenate([s.times for s in self.subjects])
        y = np.concatenate([s.y for s in self.subjects])
        return idx, t, y

    def covariate_matrix(self):
        """Subject-level covariates as an ``(n_subjects, n_covariates)`` array."""
        names = self.covariate_names
        return np.array([[s.covariates[k] for k in names] for s in self.subjects], dtype=float).reshape(
            self.n_subjects, len(names)
        )

    def standardized(self, columns):
        """Copy with the named covariates z-scored across subjects."""
        missing = [c for c in columns if c not in self.covariate_names]
        if missing:
            raise DataError(f"cannot standardize unknown covariate(s): {', '.join(missing)}")
        out = []
        stats = {}
        for c in columns:
            v = np.array([s.covariates[c] for s in self.subjects])
            sd = v.std(ddof=1) if v.size > 1 else 0.0
            stats[c] = (v.mean(), sd if sd > 0 else 1.0)
        for s in self.subjects:
            cov = dict(s.covariates)
            for c, (m, sd) in stats.items():
                cov[c] = (cov[c] - m) / sd
            out.append(SubjectRecord(s.id, cov, s.times.copy(), s.y.copy()))
        return LongitudinalDataset(out)

    def to_csv(self, path=None):
        """Write the long-format CSV; returns the text when ``path`` is None."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = self.covariate_names
        writer.writerow(list(RESERVED_COLUMNS) + names)
        for s in self.subjects:
            cov = [fmt(s.covariates[k]) for k in names]
            for t, y in zip(s.times, s.y):
                writer.writerow([s.id, fmt(t), fmt(y)] + cov)
        text = buf.getvalue()
        if path is None:
            return text
        Path(path).write_text(text)
        return None

    def digest(self):
        return hashlib.sha256(self.to_csv().encode()).hexdigest()


def fmt(x):
    """Round-trip float formatting (17 significant digits)."""
    return format(float(x), ".17g")


def read_csv(path):
    """Read a long-format CSV; rows of a subject must be contiguous."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError(f"{path}: empty file") from None
    for col in RESERVED_COLUMNS:
        if col not in header:
            raise DataError(f"{path}: missing required column '{col}'")
    pos = {h: i for i, h in enumerate(header)}
    cov_names = [h for h in header if h not in RESERVED_COLUMNS]

    groups = {}
    order = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        sid = row[pos["id"]].strip()
        try:
            t = float(row[pos["time"]])
            y = float(row[pos["y"]])
            cov = {c: float(row[pos[c]]) for c in cov_names}
        except ValueError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
        if sid not in groups:
            groups[sid] = {"cov": cov, "t": [], "y": []}
            order.append(sid)
        elif order[-1] != sid:
            raise DataError(f"{path}: line {lineno}: rows of subject {sid} are not contiguous")
        g = groups[sid]
        if cov != g["cov"]:
            raise DataError(f"{path}: line {lineno}: covariates of subject {sid} vary over time")
        g["t"].append(t)
        g["y"].append(y)
    if not order:
        raise DataError(f"{path}: no observations")
    subjects = [SubjectRecord(sid, groups[sid]["cov"], groups[sid]["t"], groups[sid]["y"]) for sid in order]
    return LongitudinalDataset(subjects)
