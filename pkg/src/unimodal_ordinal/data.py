"""Ordinal datasets: CSV I/O, seeded splits, and a synthetic generator.

The synthetic generator draws standard-normal features, projects them on a
random unit direction, adds Gaussian noise and counts how many thresholds
the latent value exceeds.  By default the thresholds cut the latent
distribution N(0, 1 + noise_std**2) into K equal-mass bins.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist

import numpy as np

from .errors import HeaderError, LabelRangeError, MalformedRowError, RaggedRowError


@dataclass
class OrdinalDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be an N x D matrix")
        if self.features.shape[0] != self.labels.shape[0] or self.labels.ndim != 1:
            raise ValueError("features and labels disagree on N")
        if self.features.shape[0] < 1:
            raise ValueError("dataset is empty")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if np.any((self.labels < 0) | (self.labels >= self.num_classes)):
            raise LabelRangeError(f"labels must lie in [0, {self.num_classes - 1}]")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def equal_mass_thresholds(num_classes: int, noise_std: float) -> list[float]:
    scale = math.sqrt(1.0 + noise_std**2)
    nd = NormalDist()
    return [scale * nd.inv_cdf(k / num_classes) for k in range(1, num_classes)]


@dataclass
class SyntheticSpec:
    n_samples: int = 2000
    n_features: int = 2
    num_classes: int = 5
    noise_std: float = 0.5
    seed: int = 0
    thresholds: list[float] | None = field(default=None)

    def __post_init__(self):
        if self.n_samples < 1 or self.n_features < 1:
            raise ValueError("n_samples and n_features must be positive")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if self.thresholds is None:
            self.thresholds = equal_mass_thresholds(self.num_classes, self.noise_std)
        t = np.asarray(self.thresholds, dtype=np.float64)
        if t.shape != (self.num_classes - 1,):
            raise ValueError(f"need {self.num_classes - 1} thresholds, got {t.size}")
        if np.any(np.diff(t) <= 0):
            raise ValueError("thresholds must be strictly increasing")


def projection_direction(n_features: int, seed: int) -> np.ndarray:
    """Unit vector fixed by ``seed``; first nonzero component is positive."""
    rng = np.random.default_rng([seed, 0])
    w = rng.standard_normal(n_features)
    w /= np.linalg.norm(w)
    nz = np.flatnonzero(w)
    if nz.size and w[nz[0]] < 0:
        w = -w
    return w


def generate_synthetic(spec: SyntheticSpec) -> OrdinalDataset:
    w = projection_direction(spec.n_features, spec.seed)
    rng = np.random.default_rng([spec.seed, 1])
    X = rng.standard_normal((spec.n_samples, spec.n_features))
    z = X @ w
    if spec.noise_std > 0:
        z = z + spec.noise_std * rng.standard_normal(spec.n_samples)
    labels = np.sum(z[:, None] > np.asarray(spec.thresholds)[None, :], axis=1)
    return OrdinalDataset(X, labels, spec.num_classes)


def save_csv(dataset: OrdinalDataset, path) -> None:
    D = dataset.num_features
    with open(path, "w", newline="") as fh:
        fh.write(",".join([f"f{i}" for i in range(D)] + ["label"]) + "\n")
        fh.writelines(",".join(format(x, ".17g") for x in row) + f",{int(y)}\n" for row, y in zip(dataset.features, dataset.labels))


def load_csv(path, num_classes: int | None = None) -> OrdinalDataset:
    """Read ``f0,...,f{D-1},label`` CSV.  K defaults to max label + 1."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    feats, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise HeaderError(f"{path}: line 1: missing header")
        D = len(header) - 1
        expected = [f"f{i}" for i in range(D)] + ["label"]
        if D < 1 or [h.strip() for h in header] != expected:
            raise HeaderError(f"{path}: line 1: header must be f0,...,f{{D-1}},label, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != D + 1:
                raise RaggedRowError(f"{path}: line {lineno}: expected {D + 1} fields, got {len(row)}")
            try:
                x = [float(v) for v in row[:D]]
                y = int(row[D])
            except ValueError as exc:
                raise MalformedRowError(f"{path}: line {lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in x):
                raise MalformedRowError(f"{path}: line {lineno}: non-finite feature")
            if y < 0 or (num_classes is not None and y >= num_classes):
                hi = "" if num_classes is None else f", {num_classes - 1}"
                raise LabelRangeError(f"{path}: line {lineno}: label {y} outside [0{hi}]")
            feats.append(x)
            labels.append(y)
    if not labels:
        raise MalformedRowError(f"{path}: no data rows")
    K = num_classes if num_classes is not None else max(max(labels) + 1, 2)
    return OrdinalDataset(np.array(feats, dtype=np.float64), np.array(labels, dtype=np.int64), K)


def split(dataset: OrdinalDataset, valid_fraction: float, seed: int):
    """Seeded shuffle, then hold out ``round(N * valid_fraction)`` rows."""
    if not 0.0 < valid_fraction < 1.0:
        raise ValueError(f"valid_fraction must lie in (0, 1), got {valid_fraction}")
    N = len(dataset)
    n_valid = round(N * valid_fraction)
    if n_valid < 1 or n_valid > N - 1:
        raise ValueError(f"valid_fraction {valid_fraction} leaves an empty part for N={N}")
    perm = np.random.default_rng(seed).permutation(N)
    tr, va = perm[: N - n_valid], perm[N - n_valid :]
    K = dataset.num_classes
    return (
        OrdinalDataset(dataset.features[tr], dataset.labels[tr], K),
        OrdinalDataset(dataset.features[va], dataset.labels[va], K),
    )
