"""Class rebalancing of labeled feature matrices.

All four techniques operate in vector space (sentence vectors), the only
stage of the pipeline where interpolation between samples is meaningful.
Techniques that add rows keep every original row unchanged and in place;
added rows are appended with provenance flags and the indices of the rows
they came from. Everything is deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .corpus import LABELS

ORIGINAL = 0
DUPLICATED = 1
SYNTHETIC = 2

TECHNIQUES = ("none", "under", "over", "smote", "adasyn")


class BalanceError(ValueError):
    pass


@dataclass(frozen=True)
class BalanceConfig:
    technique: str = "none"
    k_neighbors: int = 5
    beta: float = 1.0
    seed: int = 1

    def validate(self) -> None:
        if self.technique not in TECHNIQUES:
            raise BalanceError(
                f"unknown balancing technique {self.technique!r}; expected one of {TECHNIQUES}"
            )
        if self.k_neighbors < 1:
            raise BalanceError("k_neighbors must be >= 1")
        if not (0.0 < self.beta <= 1.0):
            raise BalanceError("beta must be in (0, 1]")


@dataclass
class FeatureMatrix:
    """Dense sentence vectors with aligned labels and per-row provenance.

    ``parent_rows[i]`` holds the input-row indices a row was derived from:
    (-1, -1) for originals, (src, src) for duplicates, (seed, neighbor) for
    synthetic rows.
    """

    rows: np.ndarray  # (N, dim)
    labels: np.ndarray  # (N,) ints in {-1, 0, 1}
    provenance: np.ndarray = None  # (N,) int8
    parent_rows: np.ndarray = None  # (N, 2) int64

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = len(self.labels)
        if self.rows.ndim != 2 or self.rows.shape[0] != n:
            raise BalanceError("rows and labels must have matching length")
        if not np.isfinite(self.rows).all():
            raise BalanceError("feature matrix contains non-finite entries")
        bad = set(np.unique(self.labels)) - set(LABELS)
        if bad:
            raise BalanceError(f"labels outside {{-1, 0, 1}}: {sorted(bad)}")
        if self.provenance is None:
            self.provenance = np.full(n, ORIGINAL, dtype=np.int8)
        if self.parent_rows is None:
            self.parent_rows = np.full((n, 2), -1, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def class_counts(self) -> dict[int, int]:
        return {label: int((self.labels == label).sum()) for label in LABELS}

    def take(self, indices) -> "FeatureMatrix":
        idx = np.asarray(indices)
        return FeatureMatrix(
            rows=self.rows[idx].copy(),
            labels=self.labels[idx].copy(),
            provenance=self.provenance[idx].copy(),
            parent_rows=self.parent_rows[idx].copy(),
        )


def _present_class_indices(data: FeatureMatrix) -> dict[int, np.ndarray]:
    present = {}
    for label in LABELS:  # fixed class order keeps every technique deterministic
        idx = np.flatnonzero(data.labels == label)
        if idx.size:
            present[label] = idx
    if len(present) < 2:
        raise BalanceError("rebalancing needs at least 2 classes present")
    return present


def _append(data: FeatureMatrix, rows, labels, provenance, parents) -> FeatureMatrix:
    if not rows:
        return FeatureMatrix(
            rows=data.rows.copy(),
            labels=data.labels.copy(),
            provenance=data.provenance.copy(),
            parent_rows=data.parent_rows.copy(),
        )
    return FeatureMatrix(
        rows=np.concatenate([data.rows] + rows),
        labels=np.concatenate([data.labels] + labels),
        provenance=np.concatenate([data.provenance] + provenance),
        parent_rows=np.concatenate([data.parent_rows] + parents),
    )


def random_undersample(data: FeatureMatrix, seed: int) -> FeatureMatrix:
    """Downsample every class without replacement to the minority count."""
    present = _present_class_indices(data)
    target = min(idx.size for idx in present.values())
    rng = np.random.default_rng(seed)
    kept = []
    for label, idx in present.items():
        if idx.size > target:
            kept.append(rng.choice(idx, size=target, replace=False))
        else:
            kept.append(idx)
    order = rng.permutation(np.concatenate(kept))
    return data.take(order)


def random_oversample(data: FeatureMatrix, seed: int) -> FeatureMatrix:
    """Upsample every minority class with replacement to the majority count."""
    present = _present_class_indices(data)
    target = max(idx.size for idx in present.values())
    rng = np.random.default_rng(seed)
    rows, labels, prov, parents = [], [], [], []
    for label, idx in present.items():
        deficit = target - idx.size
        if deficit <= 0:
            continue
        picks = rng.choice(idx, size=deficit, replace=True)
        rows.append(data.rows[picks])
        labels.append(np.full(deficit, label, dtype=np.int64))
        prov.append(np.full(deficit, DUPLICATED, dtype=np.int8))
        parents.append(np.stack([picks, picks], axis=1))
    return _append(data, rows, labels, prov, parents)


def _same_class_neighbors(x_class: np.ndarray, k: int) -> np.ndarray:
    """Indices (within the class) of each row's k nearest same-class rows."""
    dist = cdist(x_class, x_class)
    np.fill_diagonal(dist, np.inf)
    return np.argsort(dist, axis=1, kind="stable")[:, :k]


def _interpolate(
    data: FeatureMatrix,
    class_idx: np.ndarray,
    neighbors: np.ndarray,
    seeds: np.ndarray,
    picks: np.ndarray,
    lam: np.ndarray,
    label: int,
):
    x = data.rows[class_idx[seeds]]
    nn_local = neighbors[seeds, picks]
    x_nn = data.rows[class_idx[nn_local]]
    synth = x + lam[:, None] * (x_nn - x)
    n = len(seeds)
    parents = np.stack([class_idx[seeds], class_idx[nn_local]], axis=1)
    return (
        synth,
        np.full(n, label, dtype=np.int64),
        np.full(n, SYNTHETIC, dtype=np.int8),
        parents,
    )


def smote(data: FeatureMatrix, config: BalanceConfig) -> FeatureMatrix:
    """Equalize class counts by interpolating minority rows toward same-class
    nearest neighbors: synthetic = x + lam * (x_nn - x), lam ~ U[0, 1]."""
    config.validate()
    present = _present_class_indices(data)
    target = max(idx.size for idx in present.values())
    rng = np.random.default_rng(config.seed)
    rows, labels, prov, parents = [], [], [], []
    for label, idx in present.items():
        need = target - idx.size
        if need <= 0:
            continue
        if idx.size < 2:
            raise BalanceError(
                f"SMOTE cannot synthesize for class {label}: only 1 row (no neighbor exists)"
            )
        k = min(config.k_neighbors, idx.size - 1)
        neighbors = _same_class_neighbors(data.rows[idx], k)
        seeds = rng.integers(0, idx.size, size=need)
        picks = rng.integers(0, k, size=need)
        lam = rng.random(need)
        rows_c, labels_c, prov_c, parents_c = _interpolate(
            data, idx, neighbors, seeds, picks, lam, label
        )
        rows.append(rows_c)
        labels.append(labels_c)
        prov.append(prov_c)
        parents.append(parents_c)
    return _append(data, rows, labels, prov, parents)


def adasyn(data: FeatureMatrix, config: BalanceConfig) -> FeatureMatrix:
    """SMOTE-style synthesis with per-row generation counts proportional to
    neighborhood impurity.

    Per minority class c the budget is G = round(beta * (m_majority - m_c));
    row i gets a share proportional to the fraction of its k nearest
    neighbors (in the full data) that are not class c. When no row sits near
    a class boundary the budget is spread uniformly. Per-row rounding is
    corrected deterministically (largest shares topped up first, smallest
    trimmed first) so the totals are exact.
    """
    config.validate()
    present = _present_class_indices(data)
    target = max(idx.size for idx in present.values())
    rng = np.random.default_rng(config.seed)
    n_total = len(data)
    rows, labels, prov, parents = [], [], [], []
    for label, idx in present.items():
        deficit = target - idx.size
        if deficit <= 0:
            continue
        if idx.size < 2:
            raise BalanceError(
                f"ADASYN cannot synthesize for class {label}: only 1 row (no neighbor exists)"
            )
        budget = int(np.floor(config.beta * deficit + 0.5))
        if budget == 0:
            continue

        k_full = min(config.k_neighbors, n_total - 1)
        dist = cdist(data.rows[idx], data.rows)
        dist[np.arange(idx.size), idx] = np.inf
        nn_full = np.argsort(dist, axis=1, kind="stable")[:, :k_full]
        impurity = (data.labels[nn_full] != label).mean(axis=1)

        if impurity.sum() == 0.0:
            share = np.full(idx.size, 1.0 / idx.size)
        else:
            share = impurity / impurity.sum()

        counts = np.floor(share * budget + 0.5).astype(np.int64)
        diff = budget - int(counts.sum())
        if diff > 0:
            order = np.argsort(-share, kind="stable")
            for i in range(diff):
                counts[order[i % idx.size]] += 1
        elif diff < 0:
            order = np.argsort(share, kind="stable")
            i = 0
            while diff < 0:
                j = order[i % idx.size]
                if counts[j] > 0:
                    counts[j] -= 1
                    diff += 1
                i += 1

        k_same = min(config.k_neighbors, idx.size - 1)
        neighbors = _same_class_neighbors(data.rows[idx], k_same)
        seeds = np.repeat(np.arange(idx.size), counts)
        picks = rng.integers(0, k_same, size=len(seeds))
        lam = rng.random(len(seeds))
        rows_c, labels_c, prov_c, parents_c = _interpolate(
            data, idx, neighbors, seeds, picks, lam, label
        )
        rows.append(rows_c)
        labels.append(labels_c)
        prov.append(prov_c)
        parents.append(parents_c)
    return _append(data, rows, labels, prov, parents)


def apply_balance(data: FeatureMatrix, config: Optional[BalanceConfig]) -> FeatureMatrix:
    """Dispatch on config.technique; 'none' (or None) returns the input."""
    if config is None or config.technique == "none":
        return data
    config.validate()
    if config.technique == "under":
        return random_undersample(data, config.seed)
    if config.technique == "over":
        return random_oversample(data, config.seed)
    if config.technique == "smote":
        return smote(data, config)
    return adasyn(data, config)
