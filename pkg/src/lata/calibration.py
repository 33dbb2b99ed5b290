"""Temperature scaling with an input-dependent temperature.

The temperature of a sample is an affine function of its agreement score,
tau(x) = t + t_s * AS(x); the vanilla variant pins t_s at 0. Probabilities are
softmax(logits / tau(x)), which keeps rows normalized and never changes the
argmax as long as tau stays positive, so tau is clamped at a small floor.
Fitting minimizes mean NLL on a validation split with a deterministic
log-spaced grid followed by Nelder-Mead refinement from the best cell.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .errors import (
    DegenerateLogits,
    EmptyValidationSet,
    LabelOutOfRange,
    LataError,
    LengthMismatch,
    NonFiniteLogit,
)

TAU_FLOOR = 1e-3
PROB_FLOOR = 1e-12

_GRID_T = np.logspace(np.log10(0.05), np.log10(10.0), 60)
_GRID_TS = np.linspace(-5.0, 5.0, 61)


@dataclass(frozen=True)
class CalibrationModel:
    variant: str
    t: float
    t_s: float = 0.0
    tau_floor: float = TAU_FLOOR

    def temperatures(self, agreement: np.ndarray | None, n: int) -> np.ndarray:
        if self.variant == "vanilla":
            tau = np.full(n, self.t)
        else:
            if agreement is None:
                raise LengthMismatch("agreement variant needs agreement scores")
            agreement = np.asarray(agreement, dtype=np.float64).reshape(-1)
            if agreement.shape[0] != n:
                raise LengthMismatch(
                    f"{agreement.shape[0]} agreement scores for {n} samples"
                )
            tau = self.t + self.t_s * agreement
        return np.maximum(tau, self.tau_floor)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "t": self.t, "t_s": self.t_s,
                "tau_floor": self.tau_floor}

    @classmethod
    def from_dict(cls, doc: dict) -> "CalibrationModel":
        return cls(variant=doc["variant"], t=float(doc["t"]),
                   t_s=float(doc["t_s"]), tau_floor=float(doc["tau_floor"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_logits(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] < 2:
        raise LataError(f"logits must be n x C with C >= 2, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NonFiniteLogit("logits contain NaN or Inf")
    return z


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def apply(model: CalibrationModel, logits: np.ndarray,
          agreement: np.ndarray | None = None) -> np.ndarray:
    """Recalibrated probabilities softmax(logits / tau(x)); argmax preserved."""
    z = _check_logits(logits)
    tau = model.temperatures(agreement, z.shape[0])
    return softmax(z / tau[:, None])


def nll(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the true class."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels).reshape(-1)
    if p.shape[0] != y.shape[0]:
        raise LengthMismatch(f"{p.shape[0]} probability rows for {y.shape[0]} labels")
    if y.size and (y.min() < 0 or y.max() >= p.shape[1]):
        raise LabelOutOfRange(f"labels outside [0, {p.shape[1]})")
    picked = p[np.arange(p.shape[0]), y]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


def confidence(probabilities: np.ndarray) -> np.ndarray:
    """Maximum predicted probability per sample."""
    return np.asarray(probabilities, dtype=np.float64).max(axis=1)


def _nll_of(z: np.ndarray, y: np.ndarray, tau: np.ndarray) -> float:
    zt = z / tau[:, None]
    zt = zt - zt.max(axis=1, keepdims=True)
    logprob = zt - np.log(np.exp(zt).sum(axis=1, keepdims=True))
    picked = logprob[np.arange(z.shape[0]), y]
    return float(-np.maximum(picked, np.log(PROB_FLOOR)).mean())


def _grid_nll(z: np.ndarray, y: np.ndarray, a: np.ndarray,
              t_grid: np.ndarray, ts_grid: np.ndarray) -> np.ndarray:
    """Mean NLL for every (t, t_s) grid cell, one t row at a time.

    Same objective as _nll_of; tau is clamped at the floor inside the grid
    exactly as during application.
    """
    n, c = z.shape
    shift = z.max(axis=1)
    picked = z[np.arange(n), y]
    out = np.empty((t_grid.shape[0], ts_grid.shape[0]))
    for i, t in enumerate(t_grid):
        tau = np.maximum(t + a[:, None] * ts_grid[None, :], TAU_FLOOR)
        acc = np.zeros((n, ts_grid.shape[0]))
        for cls in range(c):
            acc += np.exp((z[:, cls] - shift)[:, None] / tau)
        logprob = (picked - shift)[:, None] / tau - np.log(acc)
        out[i] = -np.maximum(logprob, np.log(PROB_FLOOR)).mean(axis=0)
    return out


def fit(logits_val: np.ndarray, labels_val: np.ndarray,
        agreement_val: np.ndarray | None = None,
        variant: str = "vanilla") -> CalibrationModel:
    """Fit (t, t_s) by grid search plus Nelder-Mead refinement.

    Deterministic: no randomness anywhere, and the identity parameters (1, 0)
    are always kept as a candidate so the fitted NLL never exceeds the
    uncalibrated one. For the agreement variant the fitted vanilla model is
    also kept as a candidate, making vanilla a true subset of the search.
    """
    if variant not in ("vanilla", "agreement"):
        raise LataError(f"unknown variant {variant!r}")
    z = _check_logits(logits_val)
    n = z.shape[0]
    if n == 0:
        raise EmptyValidationSet("validation split is empty")
    y = np.asarray(labels_val).reshape(-1)
    if y.shape[0] != n:
        raise LengthMismatch(f"{n} logit rows for {y.shape[0]} labels")
    if y.min() < 0 or y.max() >= z.shape[1]:
        raise LabelOutOfRange(f"labels outside [0, {z.shape[1]})")
    if np.all(z == z[0]):
        raise DegenerateLogits("all validation logit rows identical")
    if variant == "agreement":
        if agreement_val is None:
            raise LengthMismatch("agreement variant needs agreement scores")
        a = np.asarray(agreement_val, dtype=np.float64).reshape(-1)
        if a.shape[0] != n:
            raise LengthMismatch(f"{a.shape[0]} agreement scores for {n} samples")
    else:
        a = np.zeros(n)

    def objective(params: np.ndarray) -> float:
        t, ts = (params[0], 0.0) if variant == "vanilla" else (params[0], params[1])
        tau = np.maximum(t + ts * a, TAU_FLOOR)
        return _nll_of(z, y, tau)

    ts_grid = np.array([0.0]) if variant == "vanilla" else _GRID_TS
    grid = _grid_nll(z, y, a, _GRID_T, ts_grid)
    it, its = np.unravel_index(int(np.argmin(grid)), grid.shape)
    best_params = (float(_GRID_T[it]), float(ts_grid[its]))
    best_val = objective(np.array(best_params))

    x0 = np.array(best_params[:1] if variant == "vanilla" else best_params)
    res = minimize(objective, x0, method="Nelder-Mead",
                   options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": 500})

    candidates = [
        (np.array([1.0, 0.0]), objective(np.array([1.0, 0.0]))),
        (np.array(list(best_params)), best_val),
        (np.append(res.x, 0.0)[:2], float(res.fun)),
    ]
    if variant == "agreement":
        vanilla = fit(logits_val, labels_val, variant="vanilla")
        candidates.append(
            (np.array([vanilla.t, 0.0]), objective(np.array([vanilla.t, 0.0])))
        )
    params, _ = min(candidates, key=lambda c: c[1])
    t_fit = float(params[0])
    ts_fit = 0.0 if variant == "vanilla" else float(params[1])
    return CalibrationModel(variant=variant, t=t_fit, t_s=ts_fit, tau_floor=TAU_FLOOR)
