"""Symptom feature tables: loading, correlation pruning, z-score normalization.

Stage labels are integers 0-4 (stage 4 is the combined severe category).
"""
import csv
from dataclasses import dataclass, field

import numpy as np

N_STAGES = 5


class TabularError(ValueError):
    pass


def check_stage(value: int) -> int:
    value = int(value)
    if not 0 <= value < N_STAGES:
        raise TabularError(f"stage {value} outside [0, {N_STAGES - 1}]")
    return value


@dataclass(frozen=True)
class FeatureTable:
    patient_ids: tuple
    stages: tuple
    feature_names: tuple
    values: np.ndarray  # (patients, features) float64

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise TabularError("values must be a 2-D matrix")
        if vals.shape[0] != len(self.patient_ids) or vals.shape[0] != len(self.stages):
            raise TabularError("row count does not match patient ids / stages")
        if vals.shape[1] != len(self.feature_names):
            raise TabularError("column count does not match feature names")
        if len(set(self.patient_ids)) != len(self.patient_ids):
            raise TabularError("duplicate patient_id")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise TabularError("duplicate feature name")
        for s in self.stages:
            check_stage(s)
        if not np.isfinite(vals).all():
            raise TabularError("non-finite value in feature matrix")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_patients(self):
        return self.values.shape[0]

    @property
    def n_features(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class PruneReport:
    kept: tuple
    dropped: tuple  # (dropped_name, kept_name_it_correlated_with, correlation)
    threshold: float

    def to_json_dict(self):
        return {
            "kept": list(self.kept),
            "dropped": [
                {"feature": d, "correlated_with": k, "correlation": float(r)}
                for d, k, r in self.dropped
            ],
            "threshold": float(self.threshold),
        }


@dataclass(frozen=True)
class NormStats:
    means: np.ndarray
    stddevs: np.ndarray
    constant_flags: np.ndarray = field(default=None)

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        stds = np.asarray(self.stddevs, dtype=np.float64)
        flags = self.constant_flags
        if flags is None:
            flags = stds == 0.0
        flags = np.asarray(flags, dtype=bool)
        if (stds < 0).any():
            raise TabularError("negative stddev")
        if ((stds == 0.0) != flags).any():
            raise TabularError("constant_flags inconsistent with stddevs")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stddevs", stds)
        object.__setattr__(self, "constant_flags", flags)

    def to_json_dict(self):
        return {
            "means": [float(v) for v in self.means],
            "stddevs": [float(v) for v in self.stddevs],
            "constant_flags": [bool(v) for v in self.constant_flags],
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(
            means=np.asarray(d["means"], dtype=np.float64),
            stddevs=np.asarray(d["stddevs"], dtype=np.float64),
            constant_flags=np.asarray(d["constant_flags"], dtype=bool),
        )


def load_feature_table(path) -> FeatureTable:
    """Load a feature CSV: header ``patient_id,stage,<f1>,...``; rows in file order."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TabularError(f"{path}: empty file") from None
        if len(header) < 2 or header[0] != "patient_id" or header[1] != "stage":
            raise TabularError(f"{path}: header must start with patient_id,stage")
        feature_names = header[2:]
        patient_ids, stages, rows = [], [], []
        for rownum, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise TabularError(f"{path}: row {rownum} has {len(row)} cells, expected {len(header)}")
            patient_ids.append(row[0])
            try:
                stage = int(row[1])
            except ValueError:
                raise TabularError(f"{path}: row {rownum}, column stage: not an integer: {row[1]!r}") from None
            if not 0 <= stage < N_STAGES:
                raise TabularError(f"{path}: row {rownum}: stage {stage} outside [0, {N_STAGES - 1}]")
            stages.append(stage)
            vals = []
            for name, cell in zip(feature_names, row[2:]):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise TabularError(f"{path}: row {rownum}, column {name}: not numeric: {cell!r}") from None
            rows.append(vals)
        values = np.asarray(rows, dtype=np.float64).reshape(len(patient_ids), len(feature_names))
    return FeatureTable(tuple(patient_ids), tuple(stages), tuple(feature_names), values)


def save_feature_table(table: FeatureTable, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["patient_id", "stage", *table.feature_names]) + "\n")
        for i, pid in enumerate(table.patient_ids):
            cells = [pid, str(table.stages[i])]
            cells.extend(repr(float(v)) for v in table.values[i])
            fh.write(",".join(cells) + "\n")


def pearson(x, y) -> float:
    """Pearson r; 0.0 when either input has zero variance (degenerate case)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise TabularError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise TabularError("need at least 2 samples")
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        return 0.0
    # sqrt before multiplying so tiny variances cannot underflow to 0; the
    # clip absorbs rounding at subnormal variances (same as correlation_matrix)
    r = float(dx @ dy) / (np.sqrt(vx) * np.sqrt(vy))
    return float(np.clip(r, -1.0, 1.0))


def correlation_matrix(table: FeatureTable):
    """Pairwise Pearson matrix and a per-feature constant mask.

    Rows/columns involving a constant feature are 0 (diagonal included),
    so pruning never acts on undefined correlations.
    """
    if table.n_patients < 2:
        raise TabularError("need at least 2 patients")
    vals = table.values
    centered = vals - vals.mean(axis=0)
    norms = np.sqrt((centered * centered).sum(axis=0))
    constant = norms == 0.0
    safe = np.where(constant, 1.0, norms)
    unit = centered / safe
    corr = unit.T @ unit
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    np.fill_diagonal(corr, np.where(constant, 0.0, 1.0))
    corr = np.clip(corr, -1.0, 1.0)
    corr = (corr + corr.T) / 2.0
    return corr, constant


def prune_correlated(table: FeatureTable, threshold: float = 0.5):
    """Greedy keep-first scan: drop column j iff |r(j, k)| > threshold for an
    already-kept k < j. |r| exactly equal to the threshold is kept."""
    if threshold <= 0:
        raise TabularError("threshold must be positive")
    corr, _ = correlation_matrix(table)
    kept_idx = []
    dropped = []
    for j in range(table.n_features):
        culprit = None
        for k in kept_idx:
            if abs(corr[j, k]) > threshold:
                culprit = k
                break
        if culprit is None:
            kept_idx.append(j)
        else:
            dropped.append(
                (table.feature_names[j], table.feature_names[culprit], float(corr[j, culprit]))
            )
    pruned = FeatureTable(
        table.patient_ids,
        table.stages,
        tuple(table.feature_names[j] for j in kept_idx),
        table.values[:, kept_idx],
    )
    report = PruneReport(tuple(pruned.feature_names), tuple(dropped), float(threshold))
    return pruned, report


def zscore_fit_apply(table: FeatureTable, stats: NormStats | None = None):
    """Z-score the table; fit mean/sample-stddev when stats is None.

    Constant features map to all zeros. With supplied stats the transform is
    applied as-is (test-time path)."""
    if stats is None:
        means = table.values.mean(axis=0)
        if table.n_patients < 2:
            stds = np.zeros(table.n_features)
        else:
            stds = table.values.std(axis=0, ddof=1)
        stats = NormStats(means=means, stddevs=stds)
    elif len(stats.means) != table.n_features:
        raise TabularError(
            f"stats cover {len(stats.means)} features, table has {table.n_features}"
        )
    out = apply_zscore(table.values, stats)
    normalized = FeatureTable(table.patient_ids, table.stages, table.feature_names, out)
    return normalized, stats


def apply_zscore(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """Apply stored normalization to a raw feature matrix or single row."""
    values = np.asarray(values, dtype=np.float64)
    safe = np.where(stats.constant_flags, 1.0, stats.stddevs)
    out = (values - stats.means) / safe
    if out.ndim == 1:
        out[stats.constant_flags] = 0.0
    else:
        out[:, stats.constant_flags] = 0.0
    return out
