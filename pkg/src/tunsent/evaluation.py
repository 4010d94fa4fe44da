"""Metrics, decision rules, and the cross-validated grid-search protocol.

Scores are macro-averaged F1 over the three sentiment classes; the 0/0 cases
of precision/recall/F1 are defined as 0. The classifier decision is argmax
by default; the band rule (positive probability against a threshold t) is
available behind an explicit flag.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import gbdt
from .balancing import BalanceConfig, FeatureMatrix, apply_balance
from .corpus import LABELS

_LABEL_POS = {label: i for i, label in enumerate(LABELS)}


class EvaluationError(ValueError):
    pass


class GridSearchError(RuntimeError):
    pass


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (3, 3); rows = true class, cols = predicted, order [-1, 0, 1]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(y_true, y_pred) -> ConfusionMatrix:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if len(y_true) != len(y_pred):
        raise EvaluationError(
            f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted labels"
        )
    if len(y_true) == 0:
        raise EvaluationError("cannot build a confusion matrix from zero samples")
    counts = np.zeros((3, 3), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        counts[_LABEL_POS[int(t)], _LABEL_POS[int(p)]] += 1
    return ConfusionMatrix(counts=counts)


@dataclass
class EvaluationReport:
    confusion: ConfusionMatrix
    precision: dict[int, float]
    recall: dict[int, float]
    f1: dict[int, float]
    macro_f1: float
    metadata: dict = field(default_factory=dict)


def macro_f1(cm: ConfusionMatrix) -> EvaluationReport:
    """Per-class precision/recall/F1 and their unweighted mean."""
    counts = cm.counts
    precision, recall, f1 = {}, {}, {}
    for label in LABELS:
        i = _LABEL_POS[label]
        tp = counts[i, i]
        fp = counts[:, i].sum() - tp
        fn = counts[i, :].sum() - tp
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        precision[label] = float(p)
        recall[label] = float(r)
        f1[label] = float(2 * p * r / (p + r)) if p + r > 0 else 0.0
    return EvaluationReport(
        confusion=cm,
        precision=precision,
        recall=recall,
        f1=f1,
        macro_f1=sum(f1.values()) / len(LABELS),
    )


def evaluate_predictions(y_true, y_pred, **metadata) -> EvaluationReport:
    report = macro_f1(confusion(y_true, y_pred))
    report.metadata.update(metadata)
    return report


# ---------------------------------------------------------------------------
# Decision rules


@dataclass(frozen=True)
class ThresholdConfig:
    t: float = 0.7
    enabled: bool = False

    def validate(self) -> None:
        if self.enabled and not (0.5 < self.t <= 1.0):
            raise EvaluationError("threshold t must be in (0.5, 1]")


def argmax_label(probabilities) -> int:
    """Class with the highest probability (order [-1, 0, 1]); exact ties
    resolve toward the more negative label."""
    p = np.asarray(probabilities)
    return LABELS[int(np.argmax(p))]


def threshold_decide(p_positive: float, t: float) -> int:
    """Band rule on the positive-class probability: >= t is positive,
    <= 1 - t is negative, strictly inside the band is neutral."""
    if not (0.5 < t <= 1.0):
        raise EvaluationError(f"threshold t={t} must be in (0.5, 1] (bands overlap otherwise)")
    if p_positive >= t:
        return 1
    if p_positive <= 1.0 - t:
        return -1
    return 0


def tune_threshold(p_positive, y_true, candidates) -> float:
    """Candidate threshold maximizing macro-F1 of the band rule; ties take
    the smallest candidate."""
    cands = sorted(set(float(t) for t in candidates))
    if not cands:
        raise EvaluationError("no threshold candidates given")
    p_positive = np.asarray(p_positive, dtype=np.float64)
    best_t, best_score = None, -1.0
    for t in cands:
        preds = [threshold_decide(p, t) for p in p_positive]
        score = macro_f1(confusion(y_true, preds)).macro_f1
        if score > best_score:
            best_t, best_score = t, score
    return best_t


# ---------------------------------------------------------------------------
# Splits


def train_test_split(labels, test_fraction: float = 0.30, seed: int = 0):
    """Stratified disjoint split; per-class test counts are within one sample
    of test_fraction. Returns sorted (train_indices, test_indices)."""
    if not (0.0 < test_fraction < 1.0):
        raise EvaluationError("test_fraction must be in (0, 1)")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for label in LABELS:
        idx = np.flatnonzero(labels == label)
        if idx.size == 0:
            continue
        if idx.size < 2:
            raise EvaluationError(f"class {label} has fewer than 2 members; cannot split")
        n_test = int(np.floor(test_fraction * idx.size + 0.5))
        n_test = min(max(n_test, 1), idx.size - 1)
        perm = rng.permutation(idx)
        test_parts.append(perm[:n_test])
        train_parts.append(perm[n_test:])
    return (
        np.sort(np.concatenate(train_parts)),
        np.sort(np.concatenate(test_parts)),
    )


def kfold(labels, k: int, seed: int = 0):
    """Stratified k-fold: validation folds partition the indices, fold sizes
    differ by at most one, per-class proportions hold within one sample."""
    if k < 2:
        raise EvaluationError("k must be >= 2")
    labels = np.asarray(labels)
    n = len(labels)
    rng = np.random.default_rng(seed)
    fold_of = np.full(n, -1, dtype=np.int64)
    loads = np.zeros(k, dtype=np.int64)
    for label in LABELS:
        idx = np.flatnonzero(labels == label)
        if idx.size == 0:
            continue
        if idx.size < k:
            raise EvaluationError(f"class {label} has {idx.size} members, fewer than k={k}")
        idx = rng.permutation(idx)
        base, rem = divmod(idx.size, k)
        counts = np.full(k, base, dtype=np.int64)
        if rem:
            # extra samples go to the currently least-loaded folds so overall
            # fold sizes stay within one of each other
            order = np.lexsort((np.arange(k), loads))
            counts[order[:rem]] += 1
        loads += counts
        start = 0
        for f in range(k):
            fold_of[idx[start : start + counts[f]]] = f
            start += counts[f]
    pairs = []
    for f in range(k):
        val = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        pairs.append((train, val))
    return pairs


# ---------------------------------------------------------------------------
# Grid search


@dataclass
class ParamGrid:
    params: dict[str, list]  # insertion order defines enumeration order
    k: int = 5
    scoring: str = "macro_f1"

    def validate(self) -> None:
        if not self.params:
            raise EvaluationError("parameter grid is empty")
        for name, values in self.params.items():
            if not values:
                raise EvaluationError(f"parameter {name!r} has an empty candidate list")
        gbdt_fields = {f.name for f in fields(gbdt.GbdtConfig)}
        unknown = set(self.params) - gbdt_fields
        if unknown:
            raise EvaluationError(f"unknown grid parameters: {sorted(unknown)}")

    def combinations(self) -> list[dict]:
        names = list(self.params)
        return [
            dict(zip(names, values))
            for values in itertools.product(*(self.params[n] for n in names))
        ]


@dataclass
class FitRecord:
    """Audit trail of one cross-validation fit (for leakage checks)."""

    combo_index: int
    fold_index: int
    train_indices: np.ndarray
    val_indices: np.ndarray
    n_train_original: int
    n_train_added: int


@dataclass
class GridSearchResult:
    best_params: dict
    best_score: float
    results: list[dict]  # per combination: params, mean score, fold scores
    fit_count: int
    records: list[FitRecord]


def _fit_seed(seed: int, combo_index: int, fold_index: int) -> int:
    ss = np.random.SeedSequence([int(seed) % (2**32), combo_index, fold_index])
    return int(ss.generate_state(1)[0])


def grid_search(
    features: FeatureMatrix,
    grid: ParamGrid,
    base_config: gbdt.GbdtConfig,
    balance: BalanceConfig | None = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> GridSearchResult:
    """Evaluate every parameter combination with stratified k-fold CV.

    Balancing, when configured, is applied to each training fold only —
    validation rows never feed the balancer. Every fit's config and seed are
    a pure function of (master seed, combination index, fold index), so the
    result is independent of scheduling. Ties between combinations resolve
    to the first in enumeration order.
    """
    grid.validate()
    combos = grid.combinations()
    folds = kfold(features.labels, grid.k, seed)

    def run_fit(task):
        ci, fi = task
        params = combos[ci]
        train_idx, val_idx = folds[fi]
        fit_seed = _fit_seed(seed, ci, fi)
        try:
            train = features.take(train_idx)
            balanced = apply_balance(
                train, replace(balance, seed=fit_seed) if balance is not None else None
            )
            config = replace(base_config, **params, seed=fit_seed)
            model = gbdt.fit(balanced, config)
            preds = gbdt.predict_label(model, features.rows[val_idx])
            score = macro_f1(confusion(features.labels[val_idx], preds)).macro_f1
        except Exception as exc:
            raise GridSearchError(
                f"fit failed for combination {params} (fold {fi}): {exc}"
            ) from exc
        record = FitRecord(
            combo_index=ci,
            fold_index=fi,
            train_indices=train_idx,
            val_indices=val_idx,
            n_train_original=len(train),
            n_train_added=len(balanced) - len(train),
        )
        return ci, fi, score, record

    tasks = [(ci, fi) for ci in range(len(combos)) for fi in range(len(folds))]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(run_fit, tasks))
    else:
        outcomes = [run_fit(t) for t in tasks]

    scores = np.zeros((len(combos), len(folds)))
    records: list[FitRecord] = []
    for ci, fi, score, record in sorted(outcomes, key=lambda o: (o[0], o[1])):
        scores[ci, fi] = score
        records.append(record)

    results = []
    best_index, best_score = 0, -1.0
    for ci, params in enumerate(combos):
        mean_score = float(scores[ci].mean())
        results.append(
            {
                **params,
                "mean_macro_f1": mean_score,
                "fold_scores": [float(s) for s in scores[ci]],
            }
        )
        if mean_score > best_score:
            best_index, best_score = ci, mean_score

    return GridSearchResult(
        best_params=combos[best_index],
        best_score=best_score,
        results=results,
        fit_count=len(tasks),
        records=records,
    )
