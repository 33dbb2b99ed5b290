"""Cosine-similarity neighborhood ranking over a fixed feature pool.

A Pool holds L2-normalized rows, so ranking a query reduces to one matrix
product. Similarities are accumulated in float64 and ties are broken by
ascending pool index, which keeps every ranking deterministic regardless of
block size or thread count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    KOutOfRange,
    MissingPoolLabels,
    ZeroNormQuery,
    ZeroNormRow,
)

_QUERY_BLOCK = 256


def thread_cap() -> int:
    """Worker cap for batch fan-out, from the LATA_THREADS environment variable."""
    try:
        return max(1, int(os.environ.get("LATA_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Pool:
    """Reference sample set whose embeddings define neighborhoods.

    ``features`` rows are unit-norm; ``ids`` keeps the original sample indices
    so subsampled pools stay traceable. ``labels`` is optional and only needed
    by the kNN proxy and by TrustScore-style consumers.
    """

    features: np.ndarray
    ids: np.ndarray
    labels: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def make_pool(features: np.ndarray, labels: np.ndarray | None = None,
              ids: np.ndarray | None = None) -> Pool:
    """Normalize rows and build a Pool; rejects zero-norm rows outright."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 1:
        raise DimensionMismatch(f"pool features must be a non-empty 2-D matrix, got {feats.shape}")
    norms = np.linalg.norm(feats, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ZeroNormRow(f"pool row {bad} has zero norm")
    feats = feats / norms[:, None]
    if ids is None:
        ids = np.arange(feats.shape[0])
    else:
        ids = np.asarray(ids)
    if labels is not None:
        labels = np.asarray(labels).reshape(-1)
        if labels.shape[0] != feats.shape[0]:
            raise DimensionMismatch("labels length does not match pool rows")
    return Pool(features=feats, ids=ids, labels=labels)


@dataclass(frozen=True)
class Permutation:
    """Pool indices ordered nearest-first, with the cosine values alongside."""

    order: np.ndarray
    similarities: np.ndarray

    @property
    def n(self) -> int:
        return self.order.shape[0]


@dataclass(frozen=True)
class NeighborSet:
    indices: np.ndarray

    @property
    def k(self) -> int:
        return int(self.indices.shape[0])


def _normalize_query(query: np.ndarray, dim: int) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    if q.shape[0] != dim:
        raise DimensionMismatch(f"query has dimension {q.shape[0]}, pool has {dim}")
    norm = np.linalg.norm(q)
    if norm == 0.0:
        raise ZeroNormQuery("query has zero norm")
    return q / norm


def rank(query: np.ndarray, pool: Pool) -> Permutation:
    """Order all pool indices by descending cosine similarity to ``query``."""
    q = _normalize_query(query, pool.dim)
    sims = pool.features @ q
    order = np.argsort(-sims, kind="stable")
    return Permutation(order=order, similarities=sims[order])


def similarity_matrix(queries: np.ndarray, pool: Pool) -> np.ndarray:
    """q x n cosine similarities in float64, computed in query blocks."""
    qs = np.asarray(queries, dtype=np.float64)
    if qs.ndim != 2:
        raise DimensionMismatch(f"queries must be 2-D, got shape {qs.shape}")
    if qs.shape[0] == 0:
        return np.empty((0, pool.n))
    if qs.shape[1] != pool.dim:
        raise DimensionMismatch(f"queries have dimension {qs.shape[1]}, pool has {pool.dim}")
    norms = np.linalg.norm(qs, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ZeroNormQuery(f"query row {bad} has zero norm")
    qs = qs / norms[:, None]
    sims = np.empty((qs.shape[0], pool.n))
    starts = range(0, qs.shape[0], _QUERY_BLOCK)

    def fill(start: int) -> None:
        block = qs[start:start + _QUERY_BLOCK]
        sims[start:start + block.shape[0]] = block @ pool.features.T

    workers = thread_cap()
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(fill, starts))
    else:
        for start in starts:
            fill(start)
    return sims


def rank_batch(queries: np.ndarray, pool: Pool) -> list[Permutation]:
    """Per-query rank(), vectorized; output order matches query order."""
    sims = similarity_matrix(queries, pool)
    orders = np.argsort(-sims, kind="stable", axis=1)
    return [
        Permutation(order=orders[i], similarities=sims[i, orders[i]])
        for i in range(sims.shape[0])
    ]


def order_batch(queries: np.ndarray, pool: Pool) -> np.ndarray:
    """q x n matrix of nearest-first pool indices (no similarity payload).

    Processes query blocks so the full q x n similarity matrix never
    materializes; indices are int32, which covers every supported pool size.
    """
    qs = np.asarray(queries, dtype=np.float64)
    if qs.ndim != 2:
        raise DimensionMismatch(f"queries must be 2-D, got shape {qs.shape}")
    out = np.empty((qs.shape[0], pool.n), dtype=np.int32)
    for start in range(0, qs.shape[0], _QUERY_BLOCK):
        sims = similarity_matrix(qs[start:start + _QUERY_BLOCK], pool)
        out[start:start + sims.shape[0]] = np.argsort(-sims, kind="stable", axis=1)
    return out


def top_k(perm: Permutation, k: int) -> NeighborSet:
    if not 1 <= k <= perm.n:
        raise KOutOfRange(f"k={k} outside [1, {perm.n}]")
    return NeighborSet(indices=perm.order[:k])


def knn_proxy_accuracy(pool: Pool, eval_features: np.ndarray,
                       eval_labels: np.ndarray, k: int) -> float:
    """Accuracy of a similarity-weighted k-nearest-neighbor vote on the pool.

    Per sample the predicted class maximizes the summed cosine similarity of
    its top-k neighbors; class-index ties go to the smaller class id.
    """
    if pool.labels is None:
        raise MissingPoolLabels("kNN proxy needs a labeled pool")
    if not 1 <= k <= pool.n:
        raise KOutOfRange(f"k={k} outside [1, {pool.n}]")
    eval_labels = np.asarray(eval_labels).reshape(-1)
    sims = similarity_matrix(eval_features, pool)
    if sims.shape[0] != eval_labels.shape[0]:
        raise DimensionMismatch("eval features and labels disagree on sample count")
    num_classes = int(pool.labels.max()) + 1
    correct = 0
    for i in range(sims.shape[0]):
        top = np.argsort(-sims[i], kind="stable")[:k]
        votes = np.zeros(num_classes)
        np.add.at(votes, pool.labels[top], sims[i, top])
        correct += int(np.argmax(votes) == eval_labels[i])
    return correct / max(1, sims.shape[0])
