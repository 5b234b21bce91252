import numpy as np
import pytest

from logitprod.calibration import CalibrationState
from logitprod.core import Label, LogitRecord
from logitprod.cues import (
    build_gating_input,
    disagreement,
    expert_cues,
    gating_inputs,
    survival_gate_inputs,
    write_cue_csv,
)


def identity_calib(m):
    return CalibrationState(np.ones(m), np.zeros(m), np.zeros(m), 1)


class TestExpertCues:
    def test_derived_example(self):
        s, gamma, h = expert_cues(np.array([0.5, 0.3, 0.2]))
        assert s == pytest.approx(0.5)
        assert gamma == pytest.approx(0.2)
        assert h == pytest.approx(1.029653, abs=1e-6)

    def test_one_hot(self):
        s, gamma, h = expert_cues(np.array([0.0, 1.0, 0.0]))
        assert (s, gamma, h) == (1.0, 1.0, 0.0)

    def test_uniform_k4(self):
        s, gamma, h = expert_cues(np.full(4, 0.25))
        assert s == pytest.approx(0.25)
        assert gamma == pytest.approx(0.0)
        assert h == pytest.approx(np.log(4), abs=1e-9)

    def test_k1_rejected(self):
        with pytest.raises(ValueError):
            expert_cues(np.array([1.0]))


class TestDisagreement:
    def test_identical_experts(self):
        p = np.tile([0.6, 0.3, 0.1], (4, 1))
        h_bar, p_bar, u = disagreement(p)
        assert u == 0.0
        np.testing.assert_allclose(p_bar, [0.6, 0.3, 0.1])

    def test_derived_example(self):
        h_bar, p_bar, u = disagreement(np.array([[0.9, 0.1], [0.1, 0.9]]))
        assert h_bar == pytest.approx(0.325083, abs=1e-6)
        assert u == pytest.approx(0.368064, abs=1e-6)

    def test_maximal_confident_disagreement(self):
        _, _, u = disagreement(np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert u == pytest.approx(np.log(2), abs=1e-9)

    def test_jensen_bound_random_pools(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            m = rng.integers(1, 6)
            k = rng.integers(2, 7)
            pool = rng.dirichlet(np.full(k, 0.4), size=m)
            _, _, u = disagreement(pool)
            assert 0.0 <= u <= np.log(k) + 1e-9

    def test_monotone_in_confident_split(self):
        # two experts on opposite 2-class corners: u grows with confidence
        qs = np.linspace(0.5, 1.0 - 1e-9, 50)
        us = []
        for q in qs:
            _, _, u = disagreement(np.array([[q, 1 - q], [1 - q, q]]))
            us.append(u)
        assert all(b >= a - 1e-12 for a, b in zip(us, us[1:]))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        pool = rng.dirichlet(np.ones(3), size=4)
        h1, _, u1 = disagreement(pool)
        h2, _, u2 = disagreement(pool[::-1])
        assert h1 == pytest.approx(h2) and u1 == pytest.approx(u2)


class TestBuildGatingInput:
    def test_dimension_3m_plus_2(self):
        rng = np.random.default_rng(2)
        for m in (1, 2, 9):
            rec = LogitRecord("s0", rng.normal(size=(m, 3)), Label(1))
            gi = build_gating_input(rec, identity_calib(m))
            assert len(gi.x) == 3 * m + 2

    def test_single_expert_no_disagreement(self):
        rec = LogitRecord("s0", np.array([[2.0, 0.0, -1.0]]), Label(1))
        gi = build_gating_input(rec, identity_calib(1))
        assert gi.disagreement == 0.0

    def test_identical_experts_derived_vector(self):
        # both experts emit p = (0.7, 0.3) after identity calibration
        logit = np.log(0.7 / 0.3)
        rec = LogitRecord("s0", np.array([[logit, 0.0], [logit, 0.0]]), Label(1))
        gi = build_gating_input(rec, identity_calib(2))
        np.testing.assert_allclose(
            gi.x,
            [0.7, 0.7, 0.4, 0.4, 0.610864, 0.610864, 0.610864, 0.0],
            atol=1e-6,
        )

    def test_expert_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(size=(4, 5))
        rec = LogitRecord("s0", logits, Label(1))
        perm = [2, 0, 3, 1]
        rec_p = LogitRecord("s0", logits[perm], Label(1))
        gi = build_gating_input(rec, identity_calib(4))
        gi_p = build_gating_input(rec_p, identity_calib(4))
        np.testing.assert_allclose(gi_p.confidences, gi.confidences[perm])
        np.testing.assert_allclose(gi_p.margins, gi.margins[perm])
        np.testing.assert_allclose(gi_p.entropies, gi.entropies[perm])
        assert gi_p.mean_entropy == pytest.approx(gi.mean_entropy)
        assert gi_p.disagreement == pytest.approx(gi.disagreement)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(4)
        logits = rng.normal(size=(10, 3, 4)) * 3
        calib = identity_calib(3)
        from logitprod.core import softmax

        batch = gating_inputs(softmax(logits))
        for i in range(10):
            rec = LogitRecord(f"s{i}", logits[i], Label(1))
            np.testing.assert_allclose(batch[i], build_gating_input(rec, calib).x)


def test_survival_gate_inputs_shape():
    rng = np.random.default_rng(5)
    hazards = rng.uniform(0.05, 0.95, size=(7, 3, 4))
    x = survival_gate_inputs(hazards)
    assert x.shape == (7, 4, 3 * 3 + 2)
    # per-bin disagreement nonneg
    assert np.all(x[..., -1] >= 0)


def test_cue_csv_columns(tmp_path):
    rng = np.random.default_rng(6)
    records = [LogitRecord(f"s{i}", rng.normal(size=(2, 3)), Label(1)) for i in range(3)]
    path = tmp_path / "cues.csv"
    write_cue_csv(records, identity_calib(2), path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "id,expert,s,gamma,h,h_bar,u"
    assert len(lines) == 1 + 3 * 2
