"""Failure-detection scoring and AUROC evaluation.

Every method produces a per-sample confidence where higher means more likely
correct; AUROC treats correct predictions as the positive class and is
computed from the rank statistic (pairwise-probability form, ties worth 0.5),
never from an approximated curve. Correctness is always recomputed from
logits and labels, never read from files.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import rankdata

from .agreement import AgreementVector, bundle_agreement, bundle_space_pair, select_models
from .arraystore import Bundle
from .calibration import CalibrationModel, apply, confidence, fit, softmax
from .errors import (
    KOutOfRange,
    LengthMismatch,
    MissingClassInPool,
    NonFiniteLogit,
    SingleClassDegenerate,
    SizeOutOfRange,
)

DEFAULT_K_GRID = (10, 20, 50, 100, 200, 500, 1000)

TRUSTSCORE_CAP = 1e6
_DIST_FLOOR = 1e-12

_TRUSTSCORE_NOTE = (
    "trustscore computed as nearest other-class over nearest predicted-class "
    "distance, without density filtering"
)


@dataclass(frozen=True)
class MethodScore:
    method_id: str
    scores: np.ndarray


def _checked(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NonFiniteLogit("logits contain NaN or Inf")
    return z


def score_msp(logits: np.ndarray) -> MethodScore:
    return MethodScore("msp", softmax(_checked(logits)).max(axis=1))


def score_entropy(logits: np.ndarray) -> MethodScore:
    p = softmax(_checked(logits))
    entropy = -(p * np.log(np.maximum(p, 1e-300))).sum(axis=1)
    return MethodScore("entropy", -entropy)


def score_energy(logits: np.ndarray) -> MethodScore:
    return MethodScore("energy", logsumexp(_checked(logits), axis=1))


def score_maxlogit(logits: np.ndarray) -> MethodScore:
    return MethodScore("maxlogit", _checked(logits).max(axis=1))


def _min_class_distances(test_feats: np.ndarray, pool_feats: np.ndarray,
                         pool_labels: np.ndarray, classes: np.ndarray) -> np.ndarray:
    """n_test x n_classes matrix of nearest-pool-point Euclidean distances."""
    out = np.empty((test_feats.shape[0], classes.shape[0]))
    pool_sq = (pool_feats ** 2).sum(axis=1)
    block = 512
    for start in range(0, test_feats.shape[0], block):
        t = test_feats[start:start + block]
        sq = ((t ** 2).sum(axis=1)[:, None] + pool_sq[None, :] - 2.0 * (t @ pool_feats.T))
        np.maximum(sq, 0.0, out=sq)
        d = np.sqrt(sq)
        for j, c in enumerate(classes):
            out[start:start + t.shape[0], j] = d[:, pool_labels == c].min(axis=1)
    return out


def score_trustscore(test_feats: np.ndarray, predicted_labels: np.ndarray,
                     pool_feats: np.ndarray, pool_labels: np.ndarray) -> MethodScore:
    """Distance ratio: nearest other-class over nearest predicted-class point.

    Works on raw (unnormalized) classifier features; distances are floored at
    1e-12 and the ratio capped at 1e6.
    """
    test_feats = np.asarray(test_feats, dtype=np.float64)
    pool_feats = np.asarray(pool_feats, dtype=np.float64)
    pool_labels = np.asarray(pool_labels).reshape(-1)
    predicted = np.asarray(predicted_labels).reshape(-1)
    classes = np.unique(pool_labels)
    if classes.shape[0] < 2:
        raise MissingClassInPool("trustscore needs pool points from at least two classes")
    missing = np.setdiff1d(np.unique(predicted), classes)
    if missing.size:
        raise MissingClassInPool(f"predicted class {missing[0]} has no pool points")
    dists = _min_class_distances(test_feats, pool_feats, pool_labels, classes)
    col = np.searchsorted(classes, predicted)
    d_pred = dists[np.arange(dists.shape[0]), col]
    masked = dists.copy()
    masked[np.arange(dists.shape[0]), col] = np.inf
    d_other = masked.min(axis=1)
    ratio = np.maximum(d_other, _DIST_FLOOR) / np.maximum(d_pred, _DIST_FLOOR)
    return MethodScore("trustscore", np.minimum(ratio, TRUSTSCORE_CAP))


def auroc(scores: np.ndarray | MethodScore, correctness: np.ndarray) -> float:
    """P(score of a random correct sample > score of a random incorrect one).

    Rank-statistic (Mann-Whitney) form with average ranks, so ties count 0.5;
    equals exhaustive pairwise counting exactly.
    """
    s = scores.scores if isinstance(scores, MethodScore) else np.asarray(scores)
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    y = np.asarray(correctness).reshape(-1).astype(bool)
    if s.shape[0] != y.shape[0]:
        raise LengthMismatch(f"{s.shape[0]} scores for {y.shape[0]} outcomes")
    pos = int(y.sum())
    neg = int(y.shape[0] - pos)
    if pos == 0 or neg == 0:
        raise SingleClassDegenerate("need at least one correct and one incorrect sample")
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - pos * (pos + 1) / 2.0
    return float(u / (pos * neg))


# -- end-to-end evaluation ----------------------------------------------------


@dataclass
class EvalReport:
    dataset_id: str
    rows: list[dict]
    seed: int
    notes: str
    timestamp: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))

    def to_dict(self) -> dict:
        return {"dataset_id": self.dataset_id, "rows": self.rows, "seed": self.seed,
                "notes": self.notes, "timestamp": self.timestamp}

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["method", "auroc", "k", "m", "n"])
            for row in self.rows:
                writer.writerow([row["method"], f"{row['auroc']:.10g}", row["k"],
                                 row["m"], row["n"]])

    def auroc_of(self, method: str) -> float:
        for row in self.rows:
            if row["method"] == method:
                return row["auroc"]
        raise KeyError(method)


def baseline_scores(test: Bundle, pool: Bundle) -> list[MethodScore]:
    predicted = np.argmax(test.logits, axis=1)
    return [
        score_msp(test.logits),
        score_entropy(test.logits),
        score_energy(test.logits),
        score_maxlogit(test.logits),
        score_trustscore(test.classifier_features, predicted,
                         pool.classifier_features, pool.labels),
    ]


def run_pipeline(pool: Bundle, val: Bundle, test: Bundle, k: int,
                 models: str | Sequence[str] | None = None,
                 dataset_id: str | None = None) -> EvalReport:
    """Score every method on the test split and report per-method AUROC.

    Calibration parameters come from the validation split only; the test
    split is touched once, for scoring.
    """
    if not 1 <= k <= pool.n:
        raise KOutOfRange(f"k={k} outside [1, {pool.n}]")
    ids = select_models(pool, models)
    as_val = bundle_agreement(pool, val, k, ids)
    as_test = bundle_agreement(pool, test, k, ids)

    vanilla = fit(val.logits, val.labels, variant="vanilla")
    agreement_model = fit(val.logits, val.labels, as_val.scores, variant="agreement")

    scored = baseline_scores(test, pool)
    scored.append(MethodScore("ts_vanilla", confidence(apply(vanilla, test.logits))))
    agreement_method = "ts_agreement_single" if len(ids) == 1 else "ts_agreement_multi"
    scored.append(MethodScore(
        agreement_method,
        confidence(apply(agreement_model, test.logits, as_test.scores)),
    ))

    correct = test.correctness()
    rows = [
        {"method": m.method_id, "auroc": auroc(m, correct), "k": k,
         "m": len(ids), "n": int(correct.shape[0])}
        for m in scored
    ]
    if dataset_id is None:
        dataset_id = pool.path.stem if pool.path is not None else "unnamed"
    return EvalReport(dataset_id=dataset_id, rows=rows, seed=pool.seed,
                      notes=_TRUSTSCORE_NOTE)


def _agreement_auroc_on_val(val: Bundle, as_val: AgreementVector) -> float:
    model = fit(val.logits, val.labels, as_val.scores, variant="agreement")
    scores = confidence(apply(model, val.logits, as_val.scores))
    return auroc(scores, val.correctness())


def sweep_k(pool: Bundle, val: Bundle, grid: Sequence[int] = DEFAULT_K_GRID,
            models: str | Sequence[str] | None = None) -> tuple[int, list[dict]]:
    """Validation AUROC of the agreement-scaled method for each k in the grid.

    k values larger than the pool are recorded as skipped rather than failing;
    the winner is the smallest k attaining the maximum AUROC.
    """
    pair = bundle_space_pair(pool, val, models)
    table = []
    for k in grid:
        if k > pool.n:
            table.append({"k": int(k), "auroc": None, "skipped": True})
            continue
        value = _agreement_auroc_on_val(val, pair.scores_at(int(k)))
        table.append({"k": int(k), "auroc": value, "skipped": False})
    scored_rows = [row for row in table if not row["skipped"]]
    if not scored_rows:
        raise KOutOfRange("every k in the grid exceeds the pool size")
    best = max(row["auroc"] for row in scored_rows)
    best_k = min(row["k"] for row in scored_rows if row["auroc"] == best)
    return best_k, table


def _subsample_bundle(bundle: Bundle, idx: np.ndarray) -> Bundle:
    return Bundle(
        classifier_features=bundle.classifier_features[idx],
        foundation_features=[(mid, feats[idx]) for mid, feats in bundle.foundation_features],
        logits=bundle.logits[idx],
        labels=bundle.labels[idx],
        split=bundle.split,
        seed=bundle.seed,
        path=bundle.path,
    )


def sweep_pool_size(pool: Bundle, val: Bundle, sizes: Sequence[int], seed: int,
                    grid: Sequence[int] = DEFAULT_K_GRID,
                    models: str | Sequence[str] | None = None) -> list[dict]:
    """Inner k-sweep at each seeded uniform pool subsample size."""
    rows = []
    for size in sizes:
        size = int(size)
        if not 1 <= size <= pool.n:
            raise SizeOutOfRange(f"pool size {size} outside [1, {pool.n}]")
        if size == pool.n:
            idx = np.arange(pool.n)
        else:
            idx = np.sort(np.random.default_rng([seed, size]).choice(pool.n, size, replace=False))
        best_k, table = sweep_k(_subsample_bundle(pool, idx), val, grid, models)
        for row in table:
            rows.append({"n": size, **row, "best_k": best_k})
    return rows


def sweep_table_to_csv(rows: list[dict], path: str | Path) -> None:
    keys = list(rows[0].keys()) if rows else ["k", "auroc", "skipped"]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(keys)
        for row in rows:
            writer.writerow([
                "" if row[key] is None else
                (f"{row[key]:.10g}" if isinstance(row[key], float) else row[key])
                for key in keys
            ])
