import numpy as np
import pytest

from logitprod.calibration import (
    TAU_MAX,
    TAU_MIN,
    CalibrationState,
    apply_temperatures,
    fit_temperatures,
)
from logitprod.core import ExpertPoolMeta, Label, LogitRecord, TaskKind, softmax

CLS2 = TaskKind("classification", 2)


def two_class_records(logits_per_expert, labels):
    """logits_per_expert: (N, M, 2) array; labels 1-based."""
    arr = np.asarray(logits_per_expert, dtype=float)
    return [
        LogitRecord(f"s{i}", arr[i], Label(int(labels[i])), split_role="calibration")
        for i in range(arr.shape[0])
    ]


def grid_scan_nll(logits, labels0, taus):
    """Independent oracle: brute-force grid over tau for one expert."""
    out = []
    for tau in taus:
        p = softmax(logits / tau)
        out.append(-np.log(p[np.arange(len(labels0)), labels0]).mean())
    return np.array(out)


def symmetric_pool(n=400, a=1.2, seed=0, scale=1.0):
    """Pointwise-calibrated 2-class toy set: logits +/-a, label matches the
    sign with probability softmax(a)."""
    rng = np.random.default_rng(seed)
    conf = float(softmax(np.array([a, -a]))[0])
    labels = []
    logits = []
    for _ in range(n):
        cls = rng.integers(0, 2)
        correct = rng.random() < conf
        pred = cls if correct else 1 - cls
        row = np.array([a, -a]) if pred == 0 else np.array([-a, a])
        logits.append(scale * row[None, :])
        labels.append(cls + 1)
    return two_class_records(np.array(logits), labels)


class TestFitTemperatures:
    def test_calibrated_expert_tau_near_one(self):
        records = symmetric_pool(n=2000, seed=1)
        state = fit_temperatures(records, CLS2)
        assert 0.9 <= state.temperatures[0] <= 1.1
        # grid-scan oracle confirms the minimizer sits near 1
        logits = np.array([r.logits[0] for r in records])
        y = np.array([r.label.value - 1 for r in records])
        taus = np.linspace(TAU_MIN, TAU_MAX, 400)
        best = taus[grid_scan_nll(logits, y, taus).argmin()]
        assert abs(best - state.temperatures[0]) < 0.1

    def test_inflated_logits_scale_temperature(self):
        base = symmetric_pool(n=2000, seed=2)
        inflated = [
            LogitRecord(r.sample_id, 3.0 * r.logits, r.label, split_role="calibration")
            for r in base
        ]
        t_base = fit_temperatures(base, CLS2).temperatures[0]
        t_infl = fit_temperatures(inflated, CLS2).temperatures[0]
        assert t_infl == pytest.approx(3.0 * t_base, rel=0.05)

    def test_single_record_single_expert(self):
        rec = LogitRecord("s0", np.array([[1.0, -1.0]]), Label(1), split_role="calibration")
        state = fit_temperatures([rec], CLS2)
        assert state.n_experts == 1
        assert state.n_calibration_samples == 1

    def test_empty_split_errors(self):
        with pytest.raises(ValueError):
            fit_temperatures([], CLS2)

    def test_single_class_forces_tau_one(self):
        records = two_class_records(np.ones((5, 1, 2)), [1] * 5)
        state = fit_temperatures(records, CLS2)
        assert state.temperatures[0] == 1.0
        assert state.warnings

    def test_monotone_safety(self):
        # fitted NLL never worse than tau=1, on several random pools
        rng = np.random.default_rng(4)
        for trial in range(5):
            logits = rng.normal(size=(100, 3, 4)) * rng.uniform(0.5, 5)
            labels = rng.integers(1, 5, size=100)
            records = [
                LogitRecord(f"s{i}", logits[i], Label(int(labels[i])),
                            split_role="calibration")
                for i in range(100)
            ]
            state = fit_temperatures(records, TaskKind("classification", 4))
            assert np.all(state.nll_after <= state.nll_before + 1e-6)

    def test_scale_identity_at_c2(self):
        base = symmetric_pool(n=3000, seed=5)
        doubled = [
            LogitRecord(r.sample_id, 2.0 * r.logits, r.label, split_role="calibration")
            for r in base
        ]
        t0 = fit_temperatures(base, CLS2).temperatures
        t2 = fit_temperatures(doubled, CLS2).temperatures
        np.testing.assert_allclose(t2, np.clip(2.0 * t0, TAU_MIN, TAU_MAX), rtol=0.05)

    def test_survival_fit_runs_and_is_safe(self):
        rng = np.random.default_rng(6)
        records = [
            LogitRecord(
                f"s{i}",
                rng.normal(size=(2, 3)) * 4.0,
                Label(int(rng.integers(1, 4)), event=int(rng.integers(0, 2))),
                split_role="calibration",
            )
            for i in range(80)
        ]
        state = fit_temperatures(records, TaskKind("survival", 3))
        assert np.all(state.nll_after <= state.nll_before + 1e-6)
        assert np.all((state.temperatures >= TAU_MIN) & (state.temperatures <= TAU_MAX))


class TestApplyTemperatures:
    def test_identity_at_tau_one(self):
        rec = LogitRecord("s0", np.array([[2.0, 0.0], [1.0, 3.0]]), Label(1))
        state = CalibrationState(np.ones(2), np.zeros(2), np.zeros(2), 1)
        np.testing.assert_array_equal(apply_temperatures(rec, state), rec.logits)

    def test_halved_logits(self):
        rec = LogitRecord("s0", np.array([[2.0, 0.0]]), Label(1))
        state = CalibrationState(np.array([2.0]), np.zeros(1), np.zeros(1), 1)
        z = apply_temperatures(rec, state)
        np.testing.assert_allclose(z, [[1.0, 0.0]])
        np.testing.assert_allclose(softmax(z[0]), [0.731059, 0.268941], atol=1e-6)

    def test_large_tau_flattens(self):
        rec = LogitRecord("s0", np.array([[2.0, 0.0]]), Label(1))
        state = CalibrationState(np.array([20.0]), np.zeros(1), np.zeros(1), 1)
        p = softmax(apply_temperatures(rec, state)[0])
        np.testing.assert_allclose(p, [0.524979, 0.475021], atol=1e-6)

    def test_dimension_mismatch(self):
        rec = LogitRecord("s0", np.zeros((2, 3)), Label(1))
        state = CalibrationState(np.ones(3), np.zeros(3), np.zeros(3), 1)
        with pytest.raises(ValueError):
            apply_temperatures(rec, state)

    def test_argmax_invariance(self):
        rng = np.random.default_rng(7)
        logits = rng.normal(size=(50, 3, 4)) * 6
        state = CalibrationState(
            np.array([0.3, 1.7, 9.0]), np.zeros(3), np.zeros(3), 1
        )
        for i in range(50):
            rec = LogitRecord(f"s{i}", logits[i], Label(1))
            z = apply_temperatures(rec, state)
            assert np.array_equal(z.argmax(axis=1), logits[i].argmax(axis=1))


def test_state_json_round_trip(tmp_path):
    state = CalibrationState(
        np.array([1.5, 0.7]), np.array([0.9, 1.1]), np.array([0.8, 1.0]), 42
    )
    path = tmp_path / "calib.json"
    state.save(path)
    back = CalibrationState.load(path)
    np.testing.assert_array_equal(back.temperatures, state.temperatures)
    assert back.n_calibration_samples == 42
