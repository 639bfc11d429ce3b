"""Loss metrics, the cross-validation harness, and average ranks.

Metrics are averaged per label (divide by N*L), and the harness computes
them on the standardized scale: each fold fits scalers on its training
split and transforms both splits before fitting and scoring.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Scaler, kfold, scale_dataset
from .methods import DEFAULT_CONFIG, MethodConfig, fit_method


def _check_shapes(Y, Yhat):
    Y = np.asarray(Y, dtype=float)
    Yhat = np.asarray(Yhat, dtype=float)
    if Y.shape != Yhat.shape or Y.ndim != 2:
        raise ValueError(f"shape mismatch: {Y.shape} vs {Yhat.shape}")
    return Y, Yhat


def mse(Y, Yhat) -> float:
    """Per-label mean squared error."""
    Y, Yhat = _check_shapes(Y, Yhat)
    return float(np.mean((Y - Yhat) ** 2))


def mae(Y, Yhat) -> float:
    """Per-label mean absolute error."""
    Y, Yhat = _check_shapes(Y, Yhat)
    return float(np.mean(np.abs(Y - Yhat)))


def zero_one_approx(Y, Yhat, c: float = 0.1) -> float:
    """Fraction of instances whose prediction misses the true vector.

    An instance scores 0 iff the Euclidean distance between prediction and
    truth is strictly below ``c``, else 1; distances exactly equal to ``c``
    count as misses.
    """
    if c <= 0:
        raise ValueError("c must be > 0")
    Y, Yhat = _check_shapes(Y, Yhat)
    dist = np.linalg.norm(Yhat - Y, axis=1)
    return float(np.mean(dist >= c))


@dataclass(frozen=True)
class FoldMetrics:
    mse: float
    mae: float
    zero_one: float


@dataclass(frozen=True)
class MetricReport:
    """Cross-validated metrics: the fold means plus every per-fold triple."""

    mse: float
    mae: float
    zero_one: float
    c: float
    per_fold: tuple

    @classmethod
    def from_folds(cls, folds, c):
        folds = tuple(folds)
        return cls(
            mse=float(np.mean([f.mse for f in folds])),
            mae=float(np.mean([f.mae for f in folds])),
            zero_one=float(np.mean([f.zero_one for f in folds])),
            c=c,
            per_fold=folds,
        )


def _fold_seed_sequence(seed: int, method_key: str, fold: int) -> np.random.SeedSequence:
    # Stable across processes: the method key enters through crc32.
    return np.random.SeedSequence((seed, zlib.crc32(method_key.encode()), fold))


def cross_validate(data: Dataset, method_key: str, k: int = 10, seed: int = 0,
                   config: MethodConfig = DEFAULT_CONFIG, c: float = 0.1) -> MetricReport:
    """k-fold cross validation of one method on one dataset.

    Per fold: standardize by the training split, fit, predict the test
    split, and compute all three metrics on the standardized scale.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    plan = kfold(data.n_instances, k, seed)
    folds = []
    for fold in range(k):
        tr = data.subset(plan.train_indices(fold))
        te = data.subset(plan.test_indices(fold))
        if tr.n_instances < 2:
            raise ValueError(f"fold {fold} leaves fewer than 2 training instances")
        xs, ys = Scaler.fit(tr.X), Scaler.fit(tr.Y)
        tr_s = scale_dataset(tr, xs, ys)
        te_s = scale_dataset(te, xs, ys)
        ss = _fold_seed_sequence(seed, method_key, fold)
        fit_ss, predict_ss = ss.spawn(2)
        fitted = fit_method(tr_s, method_key, config,
                            seed=int(fit_ss.generate_state(1)[0]))
        yhat = fitted.predict(te_s.X, rng=np.random.default_rng(predict_ss))
        folds.append(FoldMetrics(mse(te_s.Y, yhat), mae(te_s.Y, yhat),
                                 zero_one_approx(te_s.Y, yhat, c)))
    return MetricReport.from_folds(folds, c)


def _row_ranks(values) -> np.ndarray:
    """Ranks 1..n with ties averaged."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(v.size, dtype=float)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def avg_rank(values, lower_is_better: bool = True) -> np.ndarray:
    """Average per-column rank across rows (datasets), ties averaged."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise ValueError("expected a datasets x methods matrix")
    if not np.isfinite(v).all():
        raise ValueError("rank matrix has missing cells")
    rows = v if lower_is_better else -v
    ranks = np.vstack([_row_ranks(row) for row in rows])
    return ranks.mean(axis=0)
