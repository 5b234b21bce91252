import itertools

import numpy as np
import pytest

from logitprod.metrics import (
    CostProfile,
    PerfSummary,
    accuracy,
    auc,
    c_index,
    eff_score,
    f1,
    macro_auc,
    rank_table,
)


def brute_force_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else (0.5 if p == n else 0.0)
    return total / (len(pos) * len(neg))


class TestAUC:
    def test_perfect_separation(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_reversed(self):
        assert auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0

    def test_all_tied_half(self):
        assert auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == 0.5

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(4, 40))
            scores = rng.choice([0.1, 0.3, 0.5, 0.7, 0.9], size=n)
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert auc(scores, labels) == pytest.approx(
                brute_force_auc(scores, labels), abs=1e-12
            )

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.normal(size=50)
        labels = rng.integers(0, 2, size=50)
        labels[:2] = [0, 1]
        assert auc(np.exp(scores), labels) == pytest.approx(
            auc(scores, labels), abs=1e-12
        )

    def test_single_class_undefined(self):
        with pytest.raises(ValueError):
            auc([0.1, 0.9], [1, 1])

    def test_macro_ovr(self):
        p = np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.2, 0.2, 0.6], [0.5, 0.4, 0.1]])
        labels = np.array([0, 1, 2, 1])
        per_class = [
            auc(p[:, c], (labels == c).astype(int)) for c in range(3)
        ]
        assert macro_auc(p, labels) == pytest.approx(np.mean(per_class), abs=1e-12)

    def test_macro_skips_absent_class(self):
        p = np.array([[0.9, 0.05, 0.05], [0.2, 0.7, 0.1]])
        labels = np.array([0, 1])  # class 2 never appears
        assert macro_auc(p, labels) == 1.0


class TestF1Accuracy:
    def test_perfect(self):
        assert f1([0, 1, 2], [0, 1, 2]) == 1.0
        assert accuracy([0, 1, 2], [0, 1, 2]) == 1.0

    def test_hand_computed_macro(self):
        # class 0: tp=1 fp=1 fn=0 -> 2/3; class 1: tp=1 fp=0 fn=1 -> 2/3
        assert f1([0, 0, 1], [0, 1, 1]) == pytest.approx(2 / 3, abs=1e-12)

    def test_absent_class_excluded(self):
        # class 2 appears in neither preds nor labels -> not averaged in
        assert f1([0, 1], [0, 1]) == 1.0

    def test_predicted_only_class_counts_as_zero(self):
        # class 2 predicted but never true: precision 0 -> f1 0 enters average
        val = f1([0, 2], [0, 1])
        assert val == pytest.approx((1.0 + 0.0 + 0.0) / 3, abs=1e-12)

    def test_accuracy_fraction(self):
        assert accuracy([1, 1, 0, 0], [1, 0, 0, 0]) == 0.75


def brute_force_c_index(risks, labels):
    num = den = 0.0
    for (r_i, (t_i, d_i)), (r_j, (t_j, _)) in itertools.permutations(
        zip(risks, labels), 2
    ):
        if t_i < t_j and d_i == 1:
            den += 1
            num += 1.0 if r_i > r_j else (0.5 if r_i == r_j else 0.0)
    return num / den


class TestCIndex:
    def test_hand_case(self):
        # pairs: (a,b) concordant, (a,c) discordant, (b,c) censored-first so
        # not comparable via b; (a,c) and (a,b) plus (b,c) with delta_b=1
        risks = [3.0, 2.0, 2.5]
        labels = [(1, 1), (2, 1), (3, 0)]
        # comparable: (0,1) 3>2 ok, (0,2) 3>2.5 ok, (1,2) 2<2.5 bad -> 2/3
        assert c_index(risks, labels) == pytest.approx(2 / 3, abs=1e-12)

    def test_ties_half(self):
        assert c_index([1.0, 1.0], [(1, 1), (2, 0)]) == 0.5

    def test_censored_not_comparable(self):
        with pytest.raises(ValueError):
            c_index([1.0, 2.0], [(1, 0), (2, 0)])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(5, 60))
            risks = rng.choice(np.linspace(0, 1, 7), size=n)
            t = rng.integers(1, 6, size=n)
            d = rng.integers(0, 2, size=n)
            labels = list(zip(t.tolist(), d.tolist()))
            if not any(d_i == 1 and (t > t_i).any() for t_i, d_i in labels):
                continue
            assert c_index(risks, labels) == pytest.approx(
                brute_force_c_index(risks, labels), abs=1e-12
            )


class TestEffScore:
    def test_reference_scores_one(self):
        prof = CostProfile(2.0, 3.0, 4.0)
        cost, eff = eff_score((prof, 0.9), (prof, 0.9))
        assert cost == 1.0 and eff == 1.0

    def test_hand_computed(self):
        cand = (CostProfile(8.0, 1.0, 1.0), 0.9)
        ref = (CostProfile(1.0, 1.0, 1.0), 0.9)
        cost, eff = eff_score(cand, ref)
        assert cost == pytest.approx(2.0, abs=1e-12)
        assert eff == pytest.approx(0.5, abs=1e-12)

    def test_unit_scale_invariance(self):
        # rescaling all cost components of both methods leaves scores alone
        cand = (CostProfile(3.0, 2.0, 5.0), 0.85)
        ref = (CostProfile(1.5, 4.0, 2.0), 0.92)
        scaled = (
            (CostProfile(30.0, 0.2, 500.0), 0.85),
            (CostProfile(15.0, 0.4, 200.0), 0.92),
        )
        np.testing.assert_allclose(eff_score(cand, ref), eff_score(*scaled), atol=1e-12)

    def test_perf_summary_mean(self):
        assert PerfSummary(0.9, 0.6, 0.3).perf == pytest.approx(0.6, abs=1e-12)

    def test_nonpositive_cost_rejected(self):
        with pytest.raises(ValueError):
            CostProfile(0.0, 1.0, 1.0)


class TestRankTable:
    def test_dense_ranks_with_ties(self):
        scores = np.array([[0.9, 0.5], [0.8, 0.5], [0.9, 0.7]])
        ranks, mean = rank_table(scores)
        np.testing.assert_array_equal(ranks, [[1, 2], [2, 2], [1, 1]])
        np.testing.assert_allclose(mean, [1.5, 2.0, 1.0])

    def test_higher_is_better(self):
        ranks, _ = rank_table(np.array([[1.0], [3.0], [2.0]]))
        np.testing.assert_array_equal(ranks.ravel(), [3, 1, 2])
