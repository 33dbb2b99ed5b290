import json
import math

import numpy as np
import pytest

from lata.calibration import CalibrationModel, apply, confidence, fit, nll, softmax
from lata.errors import (
    DegenerateLogits,
    EmptyValidationSet,
    LabelOutOfRange,
    LengthMismatch,
    NonFiniteLogit,
)


def sample_calibrated(rng, n, c, scale=2.0):
    """Logits whose labels are drawn from their own softmax, so t=1 is optimal."""
    logits = rng.normal(scale=scale, size=(n, c))
    probs = softmax(logits)
    cum = probs.cumsum(axis=1)
    u = rng.uniform(size=(n, 1))
    labels = (u > cum).sum(axis=1)
    return logits, labels


def test_apply_identity_recovers_softmax(rng):
    logits = rng.normal(size=(30, 5))
    model = CalibrationModel(variant="vanilla", t=1.0)
    np.testing.assert_allclose(apply(model, logits), softmax(logits), atol=1e-15)


def test_apply_scalar_fixture():
    model = CalibrationModel(variant="vanilla", t=2.0)
    probs = apply(model, np.array([[2.0, 0.0]]))
    np.testing.assert_allclose(
        probs[0], [0.7310585786300049, 0.2689414213699951], atol=1e-12
    )


def test_apply_rows_sum_to_one(rng):
    logits = rng.normal(scale=30.0, size=(200, 8))
    agreement = rng.uniform(0.2, 1.0, size=200)
    model = CalibrationModel(variant="agreement", t=0.7, t_s=1.3)
    probs = apply(model, logits, agreement)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_apply_argmax_preserved(rng):
    logits = rng.normal(scale=5.0, size=(5000, 12))
    agreement = rng.uniform(0.0, 1.0, size=5000)
    for _ in range(10):
        t = rng.uniform(-2.0, 6.0)
        ts = rng.uniform(-4.0, 4.0)
        model = CalibrationModel(variant="agreement", t=t, t_s=ts)
        probs = apply(model, logits, agreement)
        np.testing.assert_array_equal(
            np.argmax(probs, axis=1), np.argmax(logits, axis=1)
        )


def test_apply_tau_floor_clamps():
    # negative temperature would flip the argmax; the floor prevents it
    model = CalibrationModel(variant="agreement", t=-5.0, t_s=0.1)
    probs = apply(model, np.array([[3.0, 0.0]]), np.array([0.5]))
    assert np.argmax(probs[0]) == 0


def test_apply_errors(rng):
    model = CalibrationModel(variant="agreement", t=1.0, t_s=1.0)
    logits = rng.normal(size=(4, 3))
    with pytest.raises(LengthMismatch):
        apply(model, logits, np.ones(3))
    with pytest.raises(NonFiniteLogit):
        apply(CalibrationModel(variant="vanilla", t=1.0),
              np.array([[np.nan, 0.0, 1.0]]))


def test_nll_fixtures():
    one_hot = np.eye(4)[[0, 1, 2, 3]]
    assert nll(one_hot, np.arange(4)) == pytest.approx(0.0, abs=1e-9)
    uniform = np.full((6, 4), 0.25)
    assert nll(uniform, np.zeros(6, dtype=int)) == pytest.approx(math.log(4), abs=1e-12)
    halves = np.column_stack([np.full(5, 0.5), np.full(5, 0.5)])
    assert nll(halves, np.zeros(5, dtype=int)) == pytest.approx(math.log(2), abs=1e-12)
    with pytest.raises(LabelOutOfRange):
        nll(uniform, np.array([0, 1, 2, 3, 4, 0]))


def test_nll_floors_zero_probability():
    probs = np.array([[1.0, 0.0]])
    assert nll(probs, np.array([1])) == pytest.approx(-math.log(1e-12))


def test_confidence():
    probs = np.array([[0.7311, 0.2689], [0.1, 0.9]])
    np.testing.assert_allclose(confidence(probs), [0.7311, 0.9])


def test_fit_recovers_identity_temperature(rng):
    logits, labels = sample_calibrated(rng, 10_000, 10)
    model = fit(logits, labels, variant="vanilla")
    assert model.t == pytest.approx(1.0, abs=0.1)
    assert model.t_s == 0.0


def test_fit_recovers_scale_three(rng):
    logits, labels = sample_calibrated(rng, 10_000, 10)
    model = fit(3.0 * logits, labels, variant="vanilla")
    assert model.t == pytest.approx(3.0, abs=0.15)


def test_fit_never_worse_than_identity(rng):
    logits = rng.normal(scale=4.0, size=(500, 6))
    labels = rng.integers(0, 6, size=500)
    model = fit(logits, labels, variant="vanilla")
    fitted = nll(apply(model, logits), labels)
    identity = nll(softmax(logits), labels)
    assert fitted <= identity + 1e-12


def test_fit_agreement_nests_vanilla(rng):
    logits, labels = sample_calibrated(rng, 2000, 8)
    agreement = rng.uniform(0.3, 1.0, size=2000)
    vanilla = fit(logits, labels, variant="vanilla")
    agreement_model = fit(logits, labels, agreement, variant="agreement")
    nll_v = nll(apply(vanilla, logits), labels)
    nll_a = nll(apply(agreement_model, logits, agreement), labels)
    assert nll_a <= nll_v + 1e-9


def test_fit_independent_agreement_gains_nothing(rng):
    logits, labels = sample_calibrated(rng, 4000, 6)
    agreement = rng.uniform(0.4, 1.0, size=4000)  # independent of correctness
    vanilla = fit(logits, labels, variant="vanilla")
    agreement_model = fit(logits, labels, agreement, variant="agreement")
    assert abs(agreement_model.t_s) < 0.5
    nll_v = nll(apply(vanilla, logits), labels)
    nll_a = nll(apply(agreement_model, logits, agreement), labels)
    assert nll_v - nll_a < 1e-3


def test_fit_is_local_minimum(rng):
    logits, labels = sample_calibrated(rng, 2000, 5)
    agreement = rng.uniform(0.2, 1.0, size=2000)
    model = fit(logits, labels, agreement, variant="agreement")
    base = nll(apply(model, logits, agreement), labels)
    for dt in (-0.1, 0.0, 0.1):
        for dts in (-0.1, 0.0, 0.1):
            if dt == dts == 0.0:
                continue
            perturbed = CalibrationModel(
                variant="agreement",
                t=model.t * (1 + dt),
                t_s=model.t_s * (1 + dts) if model.t_s else model.t_s + dts * 0.0,
            )
            value = nll(apply(perturbed, logits, agreement), labels)
            assert value >= base - 1e-6


def test_fit_deterministic(rng):
    logits, labels = sample_calibrated(rng, 1000, 4)
    agreement = rng.uniform(0.2, 1.0, size=1000)
    a = fit(logits, labels, agreement, variant="agreement")
    b = fit(logits, labels, agreement, variant="agreement")
    assert a == b


def test_fit_errors(rng):
    with pytest.raises(EmptyValidationSet):
        fit(np.empty((0, 3)), np.empty(0, dtype=int), variant="vanilla")
    constant = np.tile(np.array([[1.0, 2.0, 0.5]]), (10, 1))
    with pytest.raises(DegenerateLogits):
        fit(constant, np.zeros(10, dtype=int), variant="vanilla")
    logits = rng.normal(size=(10, 3))
    with pytest.raises(LengthMismatch):
        fit(logits, np.zeros(10, dtype=int), np.ones(9), variant="agreement")
    with pytest.raises(LabelOutOfRange):
        fit(logits, np.full(10, 3), variant="vanilla")


def test_model_json_round_trip(tmp_path):
    model = CalibrationModel(variant="agreement", t=1.25, t_s=-0.5)
    path = tmp_path / "cal.json"
    model.save(path)
    doc = json.loads(path.read_text())
    assert set(doc) == {"variant", "t", "t_s", "tau_floor"}
    assert CalibrationModel.load(path) == model
