"""Synthetic classification bundles for tests, demos and the bundled fixture.

The construction places unit-norm class clusters in the classifier space and
maps them into each foundation space through a random inner-product-preserving
embedding, so an undistorted foundation space ranks neighborhoods exactly like
the classifier. Queries the linear head misclassifies get their foundation
vectors perturbed much harder than correctly classified ones, which plants the
signal the agreement score is supposed to pick up.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .arraystore import save_bundle


def _semi_orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """rows x cols matrix with orthonormal columns (rows >= cols)."""
    q, r = np.linalg.qr(rng.normal(size=(rows, cols)))
    return q * np.sign(np.diag(r))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def generate_bundles(
    out_dir: str | Path,
    n_pool: int = 10_000,
    n_val: int = 1_000,
    n_test: int = 2_000,
    dim: int = 64,
    num_classes: int = 10,
    m_foundations: int = 2,
    foundation_dim: int = 96,
    spread: float = 0.45,
    head_scale: float = 8.0,
    pool_noise: float = 0.03,
    correct_noise: float = 0.12,
    wrong_noise: float = 1.2,
    seed: int = 0,
) -> dict[str, Path]:
    """Write pool/validation/test manifests under ``out_dir``.

    ``spread`` sets intra-class scatter (and with it the error rate);
    ``correct_noise``/``wrong_noise`` set how strongly foundation query
    vectors are perturbed for correct and misclassified samples, and
    ``pool_noise`` jitters every foundation pool row, which scrambles
    fine-grained neighbor order everywhere.
    """
    rng = np.random.default_rng(seed)
    centers = _unit_rows(rng.normal(size=(num_classes, dim)))
    head = head_scale * centers

    def sample_split(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        labels = rng.integers(0, num_classes, size=n)
        feats = _unit_rows(centers[labels] + spread * rng.normal(size=(n, dim)))
        logits = feats @ head.T
        return feats, logits, labels

    pool_feats, pool_logits, pool_labels = sample_split(n_pool)
    val_feats, val_logits, val_labels = sample_split(n_val)
    test_feats, test_logits, test_labels = sample_split(n_test)

    embeddings = [
        _semi_orthogonal(rng, foundation_dim, dim) for _ in range(m_foundations)
    ]
    model_ids = [f"synthetic-encoder-{i}" for i in range(m_foundations)]

    def foundation_pool(a: np.ndarray) -> np.ndarray:
        jittered = pool_feats
        if pool_noise > 0.0:
            jittered = _unit_rows(pool_feats + pool_noise * rng.normal(size=pool_feats.shape))
        return jittered @ a.T

    def foundation_queries(a: np.ndarray, feats: np.ndarray, logits: np.ndarray,
                           labels: np.ndarray) -> np.ndarray:
        correct = np.argmax(logits, axis=1) == labels
        strength = np.where(correct, correct_noise, wrong_noise)
        strength = strength * rng.uniform(0.7, 1.3, size=feats.shape[0])
        perturbed = _unit_rows(feats + strength[:, None] * rng.normal(size=feats.shape))
        return perturbed @ a.T

    out_dir = Path(out_dir)
    manifests = {}
    manifests["pool"] = save_bundle(
        out_dir / "pool",
        pool_feats,
        [(mid, foundation_pool(a)) for mid, a in zip(model_ids, embeddings)],
        pool_logits, pool_labels, split="pool", seed=seed,
    )
    for split, name, feats, logits, labels in [
        ("validation", "val", val_feats, val_logits, val_labels),
        ("test", "test", test_feats, test_logits, test_labels),
    ]:
        manifests[split] = save_bundle(
            out_dir / name,
            feats,
            [(mid, foundation_queries(a, feats, logits, labels))
             for mid, a in zip(model_ids, embeddings)],
            logits, labels, split=split, seed=seed,
        )
    return manifests
