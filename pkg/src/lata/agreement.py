"""Ranking agreement between latent spaces.

The central quantity is a normalized discounted cumulative gain between two
nearest-first permutations of the same pool: the classifier's ranking defines
which pool samples matter (the importance function), and the score measures
how well another space's ranking preserves their placement,

    ndcg = [sum_i r(prime_i) / log2(i+1)] / [sum_i r(star_i) / log2(i+1)].

The per-sample agreement score averages this over the foundation spaces.
Positions use 1-based indexing inside the discount, so the first position is
discounted by 1/log2(2) = 1. Log base 2 is conventional; the ratio is
base-invariant. All accumulation happens in float64.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .arraystore import Bundle, write_container
from .errors import (
    DegenerateFeatures,
    DimensionMismatch,
    EmptyModelList,
    KOutOfRange,
    LataError,
    LengthMismatch,
    ManifestError,
    NonPositiveIdealDCG,
    PermutationDomainMismatch,
    ZeroVariance,
)
from .neighborhood import Permutation, Pool, make_pool, order_batch

MIN_DISTANCE = 1e-12


@dataclass(frozen=True)
class Importance:
    """Per-pool-sample importance, non-increasing along the ideal ranking.

    ``indicator(k)`` marks the ideal top-k with weight 1; ``reciprocal_distance``
    weighs each pool sample by the inverse of its distance to the query.
    """

    kind: str
    k: int | None = None
    weights: np.ndarray | None = None

    @classmethod
    def indicator(cls, k: int) -> "Importance":
        if k < 1:
            raise KOutOfRange(f"k={k} must be positive")
        return cls(kind="indicator", k=int(k))

    @classmethod
    def reciprocal_distance(cls, distances: np.ndarray) -> "Importance":
        d = np.asarray(distances, dtype=np.float64).reshape(-1)
        if np.any(d < MIN_DISTANCE):
            raise LataError(
                "reciprocal-distance importance is undefined for pool points "
                f"within {MIN_DISTANCE} of the query"
            )
        return cls(kind="reciprocal_distance", weights=1.0 / d)

    def relevance(self, pi_star: Permutation) -> np.ndarray:
        """Importance of each pool index, anchored on the ideal permutation."""
        n = pi_star.n
        if self.kind == "indicator":
            if not 1 <= self.k <= n:
                raise KOutOfRange(f"k={self.k} outside [1, {n}]")
            r = np.zeros(n)
            r[pi_star.order[: self.k]] = 1.0
            return r
        if self.weights.shape[0] != n:
            raise PermutationDomainMismatch(
                f"importance covers {self.weights.shape[0]} samples, permutation has {n}"
            )
        along_star = self.weights[pi_star.order]
        if np.any(np.diff(along_star) > 1e-9):
            raise LataError("importance is not non-increasing along the ideal permutation")
        return self.weights


def _check_domains(pi_star: Permutation, pi_prime: Permutation) -> int:
    if pi_star.n != pi_prime.n:
        raise PermutationDomainMismatch(f"sizes differ: {pi_star.n} vs {pi_prime.n}")
    n = pi_star.n
    idx = np.arange(n)
    if not (np.array_equal(np.sort(pi_star.order), idx)
            and np.array_equal(np.sort(pi_prime.order), idx)):
        raise PermutationDomainMismatch("orders are not permutations of the same index set")
    return n


def discounts(n: int) -> np.ndarray:
    """1/log2(i+1) for positions i = 1..n."""
    return 1.0 / np.log2(np.arange(1, n + 1) + 1.0)


def ndcg(pi_star: Permutation, pi_prime: Permutation, importance: Importance) -> float:
    """Ranking quality of ``pi_prime`` against ideal ``pi_star`` in (0, 1]."""
    n = _check_domains(pi_star, pi_prime)
    r = importance.relevance(pi_star)
    disc = discounts(n)
    num = float(r[pi_prime.order] @ disc)
    den = float(r[pi_star.order] @ disc)
    if den <= 0.0:
        raise NonPositiveIdealDCG("ideal DCG is not positive; importance is corrupt")
    return num / den


def agreement_score(classifier_perm: Permutation,
                    foundation_perms: Sequence[Permutation], k: int) -> float:
    """Mean indicator-NDCG of each foundation ranking against the classifier's."""
    if len(foundation_perms) == 0:
        raise EmptyModelList("agreement needs at least one foundation model")
    imp = Importance.indicator(k)
    return float(np.mean([ndcg(classifier_perm, p, imp) for p in foundation_perms]))


@dataclass(frozen=True)
class AgreementVector:
    """Per-query agreement scores plus the single-model score matrix behind them."""

    scores: np.ndarray
    model_ids: list[str]
    k: int
    per_model: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.scores.shape[0])

    def model_scores(self, model_id: str) -> np.ndarray:
        if self.per_model is None or model_id not in self.model_ids:
            raise KeyError(model_id)
        return self.per_model[self.model_ids.index(model_id)]


def _inverse_orders(orders: np.ndarray) -> np.ndarray:
    q, n = orders.shape
    inv = np.empty_like(orders)
    inv[np.arange(q)[:, None], orders] = np.arange(n, dtype=orders.dtype)[None, :]
    return inv


def _indicator_ndcg_rows(star_orders: np.ndarray, prime_inv: np.ndarray,
                         k: int, disc: np.ndarray) -> np.ndarray:
    top = star_orders[:, :k]
    pos = np.take_along_axis(prime_inv, top, axis=1)
    return disc[pos].sum(axis=1) / disc[:k].sum()


class SpacePair:
    """Shared ranking state for one (pool, queries) pair across several k values."""

    def __init__(self, classifier_pool: Pool, classifier_queries: np.ndarray,
                 foundation: Sequence[tuple[str, Pool, np.ndarray]]):
        if len(foundation) == 0:
            raise EmptyModelList("agreement needs at least one foundation model")
        n = classifier_pool.n
        for mid, pool, _ in foundation:
            if pool.n != n:
                raise PermutationDomainMismatch(
                    f"foundation pool {mid!r} has {pool.n} rows, classifier pool has {n}"
                )
        self.n = n
        self.model_ids = [mid for mid, _, _ in foundation]
        self.star_orders = order_batch(classifier_queries, classifier_pool)
        self.prime_invs = [
            _inverse_orders(order_batch(queries, pool)) for _, pool, queries in foundation
        ]
        self.disc = discounts(n)

    def scores_at(self, k: int) -> AgreementVector:
        if not 1 <= k <= self.n:
            raise KOutOfRange(f"k={k} outside [1, {self.n}]")
        per_model = np.stack([
            _indicator_ndcg_rows(self.star_orders, inv, k, self.disc)
            for inv in self.prime_invs
        ])
        return AgreementVector(
            scores=per_model.mean(axis=0),
            model_ids=list(self.model_ids),
            k=k,
            per_model=per_model,
        )


def agreement_batch(classifier_pool: Pool, classifier_queries: np.ndarray,
                    foundation: Sequence[tuple[str, Pool, np.ndarray]],
                    k: int) -> AgreementVector:
    """Agreement score for every query row.

    ``foundation`` pairs each model id with its own pool and query features;
    row i of every query matrix must describe the same sample.
    """
    return SpacePair(classifier_pool, classifier_queries, foundation).scores_at(k)


def select_models(bundle: Bundle, models: str | Sequence[str] | None) -> list[str]:
    """Resolve a model-selection directive against a bundle's declared encoders.

    ``"single"`` takes the first declared encoder, ``"multiple"``/None all of
    them; anything else is an explicit id list.
    """
    available = bundle.model_ids
    if not available:
        raise EmptyModelList(f"{bundle.path}: manifest declares no foundation features")
    if models is None or models == "multiple":
        return available
    if models == "single":
        return available[:1]
    chosen = list(models)
    for mid in chosen:
        if mid not in available:
            raise ManifestError(f"model {mid!r} not declared in {bundle.path}")
    if not chosen:
        raise EmptyModelList("explicit model list is empty")
    return chosen


def bundle_agreement(pool_bundle: Bundle, query_bundle: Bundle, k: int,
                     models: str | Sequence[str] | None = None) -> AgreementVector:
    """Agreement scores for a query bundle against a pool bundle."""
    if not 1 <= k <= pool_bundle.n:
        raise KOutOfRange(f"k={k} outside [1, {pool_bundle.n}]")
    ids = select_models(pool_bundle, models)
    query_feats = dict(query_bundle.foundation_features)
    for mid in ids:
        if mid not in query_feats:
            raise ManifestError(f"model {mid!r} missing from query manifest {query_bundle.path}")
    classifier_pool = make_pool(pool_bundle.classifier_features)
    pool_feats = dict(pool_bundle.foundation_features)
    foundation = [(mid, make_pool(pool_feats[mid]), query_feats[mid]) for mid in ids]
    return agreement_batch(classifier_pool, query_bundle.classifier_features, foundation, k)


def bundle_space_pair(pool_bundle: Bundle, query_bundle: Bundle,
                      models: str | Sequence[str] | None = None) -> SpacePair:
    """Precomputed rankings reusable across several k values (for sweeps)."""
    ids = select_models(pool_bundle, models)
    query_feats = dict(query_bundle.foundation_features)
    for mid in ids:
        if mid not in query_feats:
            raise ManifestError(f"model {mid!r} missing from query manifest {query_bundle.path}")
    classifier_pool = make_pool(pool_bundle.classifier_features)
    pool_feats = dict(pool_bundle.foundation_features)
    foundation = [(mid, make_pool(pool_feats[mid]), query_feats[mid]) for mid in ids]
    return SpacePair(classifier_pool, query_bundle.classifier_features, foundation)


# -- alternative agreement measures ------------------------------------------

def spearman_agreement(pi_star: Permutation, pi_prime: Permutation) -> float:
    """Spearman rho between the two rank positions of every pool index."""
    n = _check_domains(pi_star, pi_prime)
    if n < 2:
        raise ZeroVariance("Spearman needs at least two samples")
    pos_star = np.empty(n); pos_star[pi_star.order] = np.arange(n)
    pos_prime = np.empty(n); pos_prime[pi_prime.order] = np.arange(n)
    d2 = float(((pos_star - pos_prime) ** 2).sum())
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0))


def jaccard_agreement(pi_star: Permutation, pi_prime: Permutation, k: int) -> float:
    """Overlap of the two top-k neighbor sets."""
    n = _check_domains(pi_star, pi_prime)
    if not 1 <= k <= n:
        raise KOutOfRange(f"k={k} outside [1, {n}]")
    a = set(pi_star.order[:k].tolist())
    b = set(pi_prime.order[:k].tolist())
    return len(a & b) / len(a | b)


def _rbf_gram(x: np.ndarray, sigma: float | None) -> np.ndarray:
    sq = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
    if sigma is None:
        dists = np.sqrt(sq[np.triu_indices_from(sq, k=1)])
        sigma = float(np.median(dists))
    if sigma <= 0.0:
        raise DegenerateFeatures("zero RBF bandwidth: all rows identical")
    return np.exp(-sq / (2.0 * sigma * sigma))


def cka_agreement(feats_a: np.ndarray, feats_b: np.ndarray,
                  kernel: str = "linear", sigma: float | None = None) -> float:
    """Centered kernel alignment between two row-aligned feature matrices."""
    x = np.asarray(feats_a, dtype=np.float64)
    y = np.asarray(feats_b, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"row-aligned 2-D matrices required, got {x.shape} and {y.shape}")
    if x.shape[0] < 2:
        raise DegenerateFeatures("CKA needs at least two rows")
    if kernel == "linear":
        x = x - x.mean(axis=0)
        y = y - y.mean(axis=0)
        num = float(np.linalg.norm(y.T @ x) ** 2)
        den = float(np.linalg.norm(x.T @ x) * np.linalg.norm(y.T @ y))
    elif kernel == "rbf":
        n = x.shape[0]
        h = np.eye(n) - np.full((n, n), 1.0 / n)
        kc = h @ _rbf_gram(x, sigma) @ h
        lc = h @ _rbf_gram(y, sigma) @ h
        num = float((kc * lc).sum())
        den = float(np.linalg.norm(kc) * np.linalg.norm(lc))
    else:
        raise LataError(f"unknown CKA kernel {kernel!r}")
    if den == 0.0:
        raise DegenerateFeatures("degenerate features: zero kernel norm")
    return num / den


def pairwise_model_correlation(scores_a: np.ndarray, scores_b: np.ndarray) -> float:
    """Pearson correlation between two per-sample single-model score vectors."""
    a = np.asarray(scores_a, dtype=np.float64).reshape(-1)
    b = np.asarray(scores_b, dtype=np.float64).reshape(-1)
    if a.shape[0] != b.shape[0]:
        raise LengthMismatch(f"lengths differ: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 2:
        raise LengthMismatch("correlation needs at least two samples")
    a = a - a.mean()
    b = b - b.mean()
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    if denom == 0.0:
        raise ZeroVariance("constant score vector")
    return float(a @ b) / denom


def agreement_accuracy_curve(scores: np.ndarray, correctness: np.ndarray,
                             bins: int) -> list[tuple[float, float | None, int]]:
    """Mean correctness inside equal-width agreement bins.

    Empty bins come back with count 0 and accuracy None.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    c = np.asarray(correctness, dtype=np.float64).reshape(-1)
    if s.shape[0] != c.shape[0]:
        raise LengthMismatch(f"lengths differ: {s.shape[0]} vs {c.shape[0]}")
    if bins < 1:
        raise LataError(f"bins={bins} must be at least 1")
    lo, hi = float(s.min()), float(s.max())
    width = (hi - lo) / bins
    if width == 0.0:
        idx = np.zeros(s.shape[0], dtype=int)
    else:
        idx = np.clip(((s - lo) / width).astype(int), 0, bins - 1)
    out = []
    for b in range(bins):
        mask = idx == b
        count = int(mask.sum())
        center = lo + (b + 0.5) * width if width > 0.0 else lo
        acc = float(c[mask].mean()) if count else None
        out.append((center, acc, count))
    return out


# -- serialization ------------------------------------------------------------

def agreement_to_container(vec: AgreementVector, path: str | Path) -> None:
    write_container(vec.scores.astype(np.float32).reshape(-1, 1), path)


def agreement_to_csv(vec: AgreementVector, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample_id", "score"])
        for i, s in enumerate(vec.scores):
            writer.writerow([i, f"{s:.10g}"])
