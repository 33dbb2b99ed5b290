"""Executable checks of the two analytical guarantees on synthetic instances.

First guarantee: in a regression setting with unit-norm trained features, an
orthogonal alignment map U between the spaces, and a foundation head whose
aligned weights sit within C of the trained head, a foundation model that
predicts a sample exactly bounds the trained model's error by
(C + ||w0||) * ||B0(x) - U H(x)|| + C.

Second guarantee: if a map multiplies every distance from the query to its k
nearest points by a factor inside (1/delta, delta), the reciprocal-distance
NDCG between the rankings before and after the map is at least 1/delta^2.

Both benches construct instances that satisfy the premises, then
check the conclusion numerically. Distances here are Euclidean, unlike the
cosine ranking of the main pipeline.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agreement import Importance, ndcg
from .errors import ConstructionViolated, DegenerateFeatures, LataError, ResampleBudgetExceeded
from .neighborhood import Permutation

TOL = 1e-9
RESAMPLE_BUDGET = 100


def _orthogonal(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))


@dataclass(frozen=True)
class SyntheticRegression:
    """Regression instance where the foundation predictor is exact by construction."""

    b0_features: np.ndarray
    foundation_features: np.ndarray
    w0: np.ndarray
    w_h: np.ndarray
    u_h: np.ndarray
    delta_head: np.ndarray
    c_bound: float
    targets: np.ndarray

    @property
    def n(self) -> int:
        return self.b0_features.shape[0]

    def residuals(self) -> np.ndarray:
        """Per-sample alignment residual ||B0(x) - U H(x)||."""
        return np.linalg.norm(self.b0_features - self.foundation_features @ self.u_h.T, axis=1)


def gen_regression(n: int, k: int, c: float, noise: float, seed) -> SyntheticRegression:
    """Sample an instance with controllable alignment residuals in [0, noise]."""
    if k < 2:
        raise LataError(f"latent dimension k={k} must be at least 2")
    if c < 0 or noise < 0:
        raise LataError("c and noise must be non-negative")
    rng = np.random.default_rng(seed)
    b0 = rng.normal(size=(n, k))
    b0 /= np.linalg.norm(b0, axis=1, keepdims=True)
    u_h = _orthogonal(rng, k)
    w0 = rng.normal(size=k)

    delta = rng.normal(size=k)
    delta *= (c * rng.uniform()) / max(np.linalg.norm(delta), 1e-300)
    # head defined through its aligned form: w_h^T U^{-1} = w0^T + delta^T
    w_h = u_h.T @ (w0 + delta)

    directions = rng.normal(size=(n, k))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    magnitudes = rng.uniform(0.0, noise, size=n) if noise > 0 else np.zeros(n)
    perturbed = b0 + directions * magnitudes[:, None]
    foundation = perturbed @ u_h  # U^{-1} v = U^T v, as rows: v @ U
    targets = foundation @ w_h
    return SyntheticRegression(
        b0_features=b0, foundation_features=foundation, w0=w0, w_h=w_h,
        u_h=u_h, delta_head=delta, c_bound=float(c), targets=targets,
    )


@dataclass(frozen=True)
class BoundCheck:
    lhs: np.ndarray
    rhs: np.ndarray
    holds: np.ndarray

    @property
    def violations(self) -> int:
        return int((~self.holds).sum())

    def slack(self) -> np.ndarray:
        return self.rhs - self.lhs


def check_prop1(instance: SyntheticRegression) -> BoundCheck:
    """Evaluate the prediction-error bound on every sample of an instance."""
    foundation_loss = np.abs(
        instance.foundation_features @ instance.w_h - instance.targets
    )
    if foundation_loss.max(initial=0.0) > TOL:
        raise ConstructionViolated(
            f"foundation loss {foundation_loss.max():.3g} is not zero"
        )
    lhs = np.abs(instance.b0_features @ instance.w0 - instance.targets)
    rhs = (instance.c_bound + np.linalg.norm(instance.w0)) * instance.residuals() \
        + instance.c_bound
    return BoundCheck(lhs=lhs, rhs=rhs, holds=lhs <= rhs + TOL)


@dataclass(frozen=True)
class DistortionField:
    """Pool plus a map certified to distort k-neighborhood distances within delta."""

    base_points: np.ndarray
    query: np.ndarray
    mapped_points: np.ndarray
    mapped_query: np.ndarray
    neighbor_idx: np.ndarray
    ratios: np.ndarray
    delta: float

    def verify(self) -> bool:
        """Recheck the certified ratio bound from the stored coordinates."""
        base_d = np.linalg.norm(self.base_points[self.neighbor_idx] - self.query, axis=1)
        mapped_d = np.linalg.norm(
            self.mapped_points[self.neighbor_idx] - self.mapped_query, axis=1
        )
        return bool(np.all(_ratio_ok(mapped_d / base_d, self.delta)))


def _ratio_ok(ratios: np.ndarray, delta: float) -> np.ndarray:
    if delta == 1.0:
        return np.abs(ratios - 1.0) <= 1e-12
    return (ratios > 1.0 / delta) & (ratios < delta)


def gen_distortion(n: int, d: int, k: int, delta: float, seed,
                   base_points: np.ndarray | None = None,
                   query: np.ndarray | None = None) -> DistortionField:
    """Build a certified distortion field around a query.

    The map composes a random orthogonal transform with a per-point radial
    rescaling drawn inside (1/delta', delta') for delta' = 0.99*delta + 0.01,
    then certifies the ratio bound on the k base-space nearest neighbors.
    """
    if delta < 1.0:
        raise LataError(f"delta={delta} must be at least 1")
    rng = np.random.default_rng(seed)
    if query is None:
        query = rng.normal(size=d)
    else:
        query = np.asarray(query, dtype=np.float64)
    if base_points is None:
        base_points = query + rng.normal(size=(n, d))
    else:
        base_points = np.asarray(base_points, dtype=np.float64)
    if not 1 <= k <= base_points.shape[0]:
        raise LataError(f"k={k} outside [1, {base_points.shape[0]}]")
    base_d_all = np.linalg.norm(base_points - query, axis=1)
    if base_d_all.min() < 1e-12:
        raise DegenerateFeatures("pool contains a point coinciding with the query")

    delta_prime = 0.99 * delta + 0.01
    neighbor_idx = np.argsort(base_d_all, kind="stable")[:k]
    for _ in range(RESAMPLE_BUDGET):
        rotation = _orthogonal(rng, base_points.shape[1])
        ratios_all = rng.uniform(1.0 / delta_prime, delta_prime, size=base_points.shape[0])
        mapped_query = np.zeros(base_points.shape[1])
        mapped_points = (base_points - query) @ rotation.T * ratios_all[:, None]
        ratios = ratios_all[neighbor_idx]
        if np.all(_ratio_ok(ratios, delta)):
            return DistortionField(
                base_points=base_points, query=query,
                mapped_points=mapped_points, mapped_query=mapped_query,
                neighbor_idx=neighbor_idx, ratios=ratios, delta=float(delta),
            )
    raise ResampleBudgetExceeded(f"no certified field after {RESAMPLE_BUDGET} attempts")


def check_prop2(field: DistortionField) -> tuple[float, float, bool]:
    """Reciprocal-distance NDCG over the certified neighborhood vs 1/delta^2."""
    if not field.verify():
        raise ConstructionViolated("stored field fails its own ratio certificate")
    base_d = np.linalg.norm(field.base_points[field.neighbor_idx] - field.query, axis=1)
    mapped_d = np.linalg.norm(
        field.mapped_points[field.neighbor_idx] - field.mapped_query, axis=1
    )
    star = np.argsort(base_d, kind="stable")
    prime = np.argsort(mapped_d, kind="stable")
    pi_star = Permutation(order=star, similarities=-base_d[star])
    pi_prime = Permutation(order=prime, similarities=-mapped_d[prime])
    value = ndcg(pi_star, pi_prime, Importance.reciprocal_distance(base_d))
    bound = 1.0 / (field.delta * field.delta)
    return value, bound, value >= bound - TOL


# -- randomized benches -------------------------------------------------------

def run_prop1_bench(trials: int, c_values=(0.0, 0.1, 1.0), n: int = 64,
                    k: int = 8, noise: float = 1.0, seed: int = 0):
    """Randomized sweep of the error bound; returns (summary, per-trial rows)."""
    rows = []
    violations = 0
    slack_max, slack_min = -np.inf, np.inf
    for i in range(trials):
        c = c_values[i % len(c_values)]
        instance = gen_regression(n, k, c, noise, seed=[seed, i])
        result = check_prop1(instance)
        violations += result.violations
        slack = result.slack()
        slack_max = max(slack_max, float(slack.max()))
        slack_min = min(slack_min, float(slack.min()))
        rows.append({"trial": i, "c": c, "samples": instance.n,
                     "violations": result.violations,
                     "min_slack": float(slack.min())})
    summary = {"trials": trials, "violations": violations,
               "max_slack": slack_max, "min_slack": slack_min}
    return summary, rows


def run_prop2_bench(trials: int, deltas=(1.1, 1.5, 2.0, 5.0), n: int = 200,
                    d: int = 8, k: int = 20, seed: int = 0):
    """Randomized sweep of the NDCG lower bound; returns (summary, per-trial rows)."""
    rows = []
    violations = 0
    slack_max, slack_min = -np.inf, np.inf
    for i in range(trials):
        delta = deltas[i % len(deltas)]
        field = gen_distortion(n, d, k, delta, seed=[seed, i])
        value, bound, holds = check_prop2(field)
        violations += int(not holds)
        slack = value - bound
        slack_max = max(slack_max, slack)
        slack_min = min(slack_min, slack)
        rows.append({"trial": i, "delta": delta, "ndcg": value, "bound": bound,
                     "slack": slack, "holds": holds})
    summary = {"trials": trials, "violations": violations,
               "max_slack": slack_max, "min_slack": slack_min}
    return summary, rows
