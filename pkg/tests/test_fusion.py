import numpy as np
import pytest

from logitprod.calibration import CalibrationState
from logitprod.core import Label, LogitRecord, clamp_probs
from logitprod.fusion import (
    FusionMode,
    fuse_record,
    majority_vote,
    mean_fuse,
    product_fuse,
)
from logitprod.gate import HIDDEN_UNITS, GateParameters


def identity_calib(m):
    return CalibrationState(np.ones(m), np.zeros(m), np.zeros(m), 1)


def zero_gate(d_in, m):
    return GateParameters(
        np.zeros((HIDDEN_UNITS, d_in)),
        np.zeros(HIDDEN_UNITS),
        np.zeros((m, HIDDEN_UNITS)),
        np.zeros(m),
    )


class TestProductFuse:
    def test_identical_experts(self):
        pool = np.tile([0.7, 0.3], (2, 1))
        fp = product_fuse(pool, np.array([0.3, 0.7]))
        np.testing.assert_allclose(fp.distribution, [0.7, 0.3], atol=1e-12)
        assert fp.normalizer == pytest.approx(1.0, abs=1e-12)

    def test_one_hot_selection(self):
        rng = np.random.default_rng(0)
        pool = clamp_probs(rng.dirichlet(np.ones(4), size=3))
        w = np.array([0.0, 1.0, 0.0])
        fp = product_fuse(pool, w)
        np.testing.assert_allclose(fp.distribution, pool[1], atol=1e-12)

    def test_derived_geometric_mean(self):
        pool = np.array([[0.8, 0.2], [0.6, 0.4]])
        fp = product_fuse(pool, np.array([0.5, 0.5]))
        assert fp.normalizer == pytest.approx(0.975663, abs=1e-6)
        np.testing.assert_allclose(fp.distribution, [0.710102, 0.289898], atol=1e-6)
        assert fp.normalizer <= 1.0

    def test_normalizer_bound_random(self):
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            m = rng.integers(1, 7)
            k = rng.integers(2, 8)
            pool = rng.dirichlet(np.full(k, 0.3), size=m)
            w = rng.dirichlet(np.ones(m))
            assert product_fuse(pool, w).normalizer <= 1 + 1e-12

    def test_sharpens_consensus(self):
        # agreeing experts: fused top prob >= min of the experts' top probs
        rng = np.random.default_rng(2)
        for _ in range(500):
            k = rng.integers(2, 6)
            top = rng.integers(0, k)
            pool = rng.dirichlet(np.ones(k), size=2)
            for row in pool:  # force agreement on argmax
                row[[row.argmax(), top]] = row[[top, row.argmax()]]
            w = rng.dirichlet(np.ones(2))
            fused = product_fuse(pool, w).distribution
            assert fused[top] >= min(pool[0][top], pool[1][top]) - 1e-12

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        pool = rng.dirichlet(np.ones(4), size=3)
        w = rng.dirichlet(np.ones(3))
        perm = [2, 0, 1]
        a = product_fuse(pool, w).distribution
        b = product_fuse(pool[perm], w[perm]).distribution
        np.testing.assert_allclose(a, b, atol=1e-14)

    def test_hard_zero_survives_clamping(self):
        pool = np.array([[1.0, 0.0], [0.5, 0.5]])
        fp = product_fuse(pool, np.array([0.5, 0.5]))
        assert np.all(np.isfinite(fp.distribution))


class TestMeanFuse:
    def test_identical(self):
        pool = np.tile([0.2, 0.8], (3, 1))
        np.testing.assert_allclose(mean_fuse(pool), [0.2, 0.8])

    def test_uniform(self):
        pool = np.array([[0.8, 0.2], [0.6, 0.4]])
        np.testing.assert_allclose(mean_fuse(pool), [0.7, 0.3])

    def test_weighted(self):
        pool = np.array([[0.8, 0.2], [0.6, 0.4]])
        np.testing.assert_allclose(mean_fuse(pool, np.array([0.75, 0.25])), [0.75, 0.25])


class TestMajorityVote:
    def test_plurality(self):
        pool = np.array([[0.1, 0.9, 0.0], [0.2, 0.8, 0.0], [0.0, 0.1, 0.9]])
        assert majority_vote(pool) == 1

    def test_tie_broken_by_mean(self):
        pool = np.array([[0.6, 0.4], [0.1, 0.9]])  # votes split, mean favors 1
        assert majority_vote(pool) == 1

    def test_single_expert(self):
        assert majority_vote(np.array([[0.3, 0.7]])) == 1


class TestFuseRecord:
    def setup_method(self):
        self.logits = np.array([[2.0, 0.0], [1.0, 0.5]])
        self.rec = LogitRecord("s0", self.logits, Label(1))
        self.calib = identity_calib(2)

    def test_uniform_product_dispatch(self):
        from logitprod.core import softmax

        fp = fuse_record(self.rec, self.calib, "uniform_product")
        expect = product_fuse(clamp_probs(softmax(self.logits)), np.full(2, 0.5))
        np.testing.assert_allclose(fp.distribution, expect.distribution)

    def test_learnable_requires_gates(self):
        with pytest.raises(ValueError):
            fuse_record(self.rec, self.calib, FusionMode.LOGITPROD)

    def test_logitprod_single_expert_degenerate(self):
        from logitprod.core import softmax

        rec = LogitRecord("s0", self.logits[:1], Label(1))
        calib = identity_calib(1)
        gate = zero_gate(5, 1)  # 3*1+2 cue inputs
        fp = fuse_record(rec, calib, "logitprod", [gate])
        np.testing.assert_allclose(
            fp.distribution, clamp_probs(softmax(self.logits[:1]))[0], atol=1e-12
        )

    def test_zero_gate_gives_uniform_weights(self):
        gate = zero_gate(8, 2)  # 3*2+2 cues
        fp = fuse_record(self.rec, self.calib, "logitprod", [gate])
        np.testing.assert_allclose(fp.weights, [0.5, 0.5])

    def test_learnable_product_uses_flat_logits(self):
        gate = zero_gate(4, 2)  # M*K flattened input
        fp = fuse_record(self.rec, self.calib, "learnable_product", [gate])
        np.testing.assert_allclose(fp.weights, [0.5, 0.5])

    def test_majority_one_hot_distribution(self):
        fp = fuse_record(self.rec, self.calib, "majority_vote")
        assert fp.distribution.tolist() == [1.0, 0.0]

    def test_near_one_hot_gate_tracks_selected_expert(self):
        # a gate hugely biased toward expert 0 reproduces p_0 within 1e-3
        from logitprod.core import softmax

        gate = zero_gate(8, 2)
        gate.b2[:] = [10.0, -10.0]
        fp = fuse_record(self.rec, self.calib, "logitprod", [gate])
        p0 = clamp_probs(softmax(self.logits))[0]
        np.testing.assert_allclose(fp.distribution, p0, atol=1e-3)
