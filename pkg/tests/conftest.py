"""Shared oracles and fixture builders.

The oracles here are deliberately naive re-implementations (plain loops,
explicit formulas) so the fast library paths are checked against something
independent.
"""
import math

import numpy as np
import pytest

from lata.neighborhood import Permutation


def perm_from_order(order) -> Permutation:
    """Permutation with synthetic non-increasing similarities, for metric tests."""
    order = np.asarray(order)
    n = order.shape[0]
    return Permutation(order=order, similarities=np.linspace(1.0, 0.0, n))


def naive_ndcg(star_order, prime_order, relevance, base: float = 2.0) -> float:
    """Literal discounted-gain ratio, scalar loop, arbitrary log base."""
    n = len(star_order)
    num = sum(relevance[prime_order[i - 1]] / (math.log(i + 1) / math.log(base))
              for i in range(1, n + 1))
    den = sum(relevance[star_order[i - 1]] / (math.log(i + 1) / math.log(base))
              for i in range(1, n + 1))
    return num / den


def indicator_relevance(star_order, k) -> np.ndarray:
    r = np.zeros(len(star_order))
    r[np.asarray(star_order)[:k]] = 1.0
    return r


def pairwise_auroc(scores, correctness) -> float:
    """O(P*N) pair counting with ties worth 0.5."""
    scores = np.asarray(scores, dtype=float)
    correctness = np.asarray(correctness).astype(bool)
    pos = scores[correctness]
    neg = scores[~correctness]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else (0.5 if a == b else 0.0)
    return total / (len(pos) * len(neg))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_orthogonal(rng, dim):
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))
