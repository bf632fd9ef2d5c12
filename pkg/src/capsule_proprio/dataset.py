"""Recorded (sensor counts, pose) pairs: CSV I/O, splitting and scaling."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .capsule_sim import ADC_MAX, N_SENSORS, POSE_FIELDS, SENSOR_LABELS, Pose
from .errors import ConfigError, ParseError, ValidationError

HEADER = ("t",) + SENSOR_LABELS + POSE_FIELDS


@dataclass(frozen=True)
class Record:
    t: float
    counts: tuple
    pose: Pose


class Dataset:
    """Column-oriented table of records.

    ``counts`` is (N, 60) int64 ordered ``adc0_data0 .. adc3_data14``;
    ``poses`` is (N, 6) in metres and degrees.
    """

    def __init__(self, t, counts, poses):
        self.t = np.asarray(t, dtype=float).reshape(-1)
        self.counts = np.asarray(counts, dtype=np.int64).reshape(len(self.t), N_SENSORS)
        self.poses = np.asarray(poses, dtype=float).reshape(len(self.t), 6)
        if np.any((self.counts < 0) | (self.counts > ADC_MAX)):
            raise ValidationError(f"counts must lie in [0, {ADC_MAX}]")
        if not np.all(np.isfinite(self.poses)):
            raise ValidationError("non-finite pose values")

    @classmethod
    def from_records(cls, records):
        records = list(records)
        return cls(
            [r.t for r in records],
            np.array([r.counts for r in records], dtype=np.int64).reshape(-1, N_SENSORS),
            np.array([r.pose.as_array() for r in records]).reshape(-1, 6),
        )

    @classmethod
    def from_simulation(cls, result):
        return cls(result.t, result.counts, result.poses)

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i):
        return Record(float(self.t[i]), tuple(int(c) for c in self.counts[i]), Pose.from_array(self.poses[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.t[idx], self.counts[idx], self.poses[idx])

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.poses, other.poses)
        )


def write_csv(data, path):
    """Write a dataset; floats use shortest round-trip repr, counts are integers."""
    if not isinstance(data, Dataset):
        data = Dataset.from_records(data)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for t, counts, pose in zip(data.t, data.counts, data.poses):
            w.writerow([repr(float(t))] + [str(int(c)) for c in counts] + [repr(float(v)) for v in pose])


def read_csv(path):
    """Parse and validate a dataset file; errors name the offending line."""
    path = Path(path)
    ts, counts, poses = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        if tuple(h.strip() for h in header) != HEADER:
            raise ParseError(f"header does not match the {len(HEADER)}-column schema", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(HEADER):
                raise ParseError(f"expected {len(HEADER)} fields, got {len(row)}", line=lineno)
            try:
                t = float(row[0])
                c = [int(v) for v in row[1 : 1 + N_SENSORS]]
                p = [float(v) for v in row[1 + N_SENSORS :]]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            bad = [v for v in c if not 0 <= v <= ADC_MAX]
            if bad:
                raise ValidationError(f"count {bad[0]} outside [0, {ADC_MAX}]", line=lineno)
            if not all(math.isfinite(v) for v in p) or not math.isfinite(t):
                raise ValidationError("non-finite value", line=lineno)
            ts.append(t)
            counts.append(c)
            poses.append(p)
    return Dataset(ts, np.array(counts, dtype=np.int64).reshape(-1, N_SENSORS), np.array(poses).reshape(-1, 6))


# ---------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    test: np.ndarray
    test_fraction: float
    seed: int


def split(n_or_data, test_fraction=0.20, seed=0):
    """Uniform random train/test split with ``round(test_fraction * N)`` test rows."""
    n = n_or_data if isinstance(n_or_data, (int, np.integer)) else len(n_or_data)
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test fraction {test_fraction} outside (0, 1)")
    if n < 5:
        raise ConfigError(f"need at least 5 records to split, got {n}")
    n_test = int(math.floor(test_fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    return Split(np.sort(perm[n_test:]), np.sort(perm[:n_test]), test_fraction, seed)


# ---------------------------------------------------------------------------
# near-limit subsets


class Criterion(str, enum.Enum):
    TWIST = "twist"
    BEND = "bend"
    PUSHPULL = "pushpull"


TWIST_THRESHOLD = 20.0
BEND_THRESHOLD = 70.0
AXIAL_THRESHOLD = 0.002

# Subset sizes reported for the physical joint.
REFERENCE_SUBSET_SIZES = {Criterion.TWIST: 415, Criterion.BEND: 207, Criterion.PUSHPULL: 75}


def near_limit_mask(poses, criterion):
    poses = np.asarray(poses, dtype=float).reshape(-1, 6)
    criterion = Criterion(criterion)
    if criterion is Criterion.TWIST:
        return np.abs(poses[:, 3]) > TWIST_THRESHOLD
    if criterion is Criterion.BEND:
        return (np.abs(poses[:, 4]) > BEND_THRESHOLD) | (np.abs(poses[:, 5]) > BEND_THRESHOLD)
    # axial displacement is translation along the bone axis (x)
    return np.abs(poses[:, 0]) > AXIAL_THRESHOLD


def filter_near_limit(data, criterion):
    """Order-preserving subset of records beyond the criterion's threshold."""
    if isinstance(data, Dataset):
        return data.subset(np.flatnonzero(near_limit_mask(data.poses, criterion)))
    records = list(data)
    if not records:
        return []
    mask = near_limit_mask([r.pose.as_array() for r in records], criterion)
    return [r for r, keep in zip(records, mask) if keep]


# ---------------------------------------------------------------------------
# scaling


class TargetMode(str, enum.Enum):
    RAW = "raw"
    RADIANS_METERS = "radians_meters"
    STANDARDIZED = "standardized"


# Divisor floor for count channels, in ADC counts (about 10x the read noise).
# Channels that barely move, such as rail-pinned failed gauges, would otherwise
# be blown up to unit-variance noise.
DEFAULT_MIN_SCALE = 20.0


class Standardizer(TransformerMixin, BaseEstimator):
    """Per-channel z-scoring with statistics from the data passed to ``fit``.

    Zero-variance channels get a unit divisor, so a constant channel maps to 0.
    With ``min_scale`` > 0, any channel whose standard deviation does not exceed
    it is divided by ``max(min_scale, 1)`` instead.
    """

    def __init__(self, min_scale=0.0):
        self.min_scale = min_scale

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if X.shape[0] == 0:
            raise ValueError("cannot fit on an empty training split")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std > self.min_scale, std, max(self.min_scale, 1.0))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} channels, got {X.shape[1]}")
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        return np.asarray(X, dtype=float) * self.scale_ + self.mean_


class TargetScaler(TransformerMixin, BaseEstimator):
    """Converts pose targets between recorded units and training units.

    ``raw`` leaves degrees and metres untouched; ``radians_meters`` turns
    the three angle columns into radians; ``standardized`` additionally
    z-scores every output with the statistics of the targets given to ``fit``.
    """

    def __init__(self, mode="standardized"):
        self.mode = mode

    def _factor(self):
        f = np.ones(6)
        if TargetMode(self.mode) is not TargetMode.RAW:
            f[3:] = np.pi / 180.0
        return f

    def fit(self, y=None, *args):
        mode = TargetMode(self.mode)
        self.offset_ = np.zeros(6)
        self.scale_ = np.ones(6)
        if mode is TargetMode.STANDARDIZED:
            if y is None or len(y) == 0:
                raise ValueError("standardized targets need training targets to fit")
            y = np.asarray(y, dtype=float).reshape(-1, 6) * self._factor()
            std = y.std(axis=0)
            self.offset_ = y.mean(axis=0)
            self.scale_ = np.where(std > 0, std, 1.0)
        return self

    def transform(self, y):
        check_is_fitted(self, "scale_")
        return (np.asarray(y, dtype=float) * self._factor() - self.offset_) / self.scale_

    def inverse_transform(self, y):
        check_is_fitted(self, "scale_")
        return (np.asarray(y, dtype=float) * self.scale_ + self.offset_) / self._factor()


@dataclass
class ModelTensors:
    X_train: np.ndarray
    Y_train: np.ndarray
    X_test: np.ndarray
    Y_test: np.ndarray
    standardizer: Standardizer
    target_scaler: TargetScaler
    split: Split


def standardize(data, split_, mode="standardized", min_scale=DEFAULT_MIN_SCALE):
    """Model-ready arrays; input and target statistics come from training rows only."""
    if len(split_.train) == 0:
        raise ValueError("empty training split")
    counts = data.counts.astype(float)
    std = Standardizer(min_scale).fit(counts[split_.train])
    ts = TargetScaler(mode).fit(data.poses[split_.train])
    return ModelTensors(
        X_train=std.transform(counts[split_.train]),
        Y_train=ts.transform(data.poses[split_.train]),
        X_test=std.transform(counts[split_.test]),
        Y_test=ts.transform(data.poses[split_.test]),
        standardizer=std,
        target_scaler=ts,
        split=split_,
    )
