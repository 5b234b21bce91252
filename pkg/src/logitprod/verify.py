"""Numerical certification of the product-fusion guarantees: the
cross-entropy decomposition, the normalizer bound Z(w) <= 1, and the
simplex-search oracles showing an optimal weighting is never worse than the
best single expert (classification per-pool, survival per-bin)."""

from __future__ import annotations

import json
from itertools import combinations_with_replacement
from pathlib import Path

import numpy as np

from .core import clamp_probs
from .fusion import product_fuse
from .survival import survival_nll

GRID_STEP_DEFAULT = 0.05
MAX_GRID_EXPERTS = 4


def cross_entropy(p_data: np.ndarray, q: np.ndarray) -> float:
    """H(p_data, q) = E_{Y~p_data}[-ln q(Y)], with q clamped."""
    q = clamp_probs(q)
    return float(-(np.asarray(p_data) * np.log(q)).sum())


def ce_decomposition_check(
    p_data: np.ndarray, pool_probs: np.ndarray, w: np.ndarray
) -> float:
    """Residual of H(p_data, p_w) = sum_m w_m H(p_data, p_m) + ln Z(w)."""
    pool = clamp_probs(pool_probs)
    fused = product_fuse(pool, w)
    lhs = cross_entropy(p_data, fused.distribution)
    rhs = sum(
        float(wi) * cross_entropy(p_data, pool[m]) for m, wi in enumerate(w)
    ) + fused.log_normalizer
    return abs(lhs - rhs)


def simplex_grid(n_experts: int, step: float) -> np.ndarray:
    """All weight vectors on the simplex with coordinates that are multiples
    of `step`, in lexicographic order; vertices are always included."""
    units = round(1.0 / step)
    if abs(units * step - 1.0) > 1e-9:
        raise ValueError("grid_step must divide 1")
    rows = []
    for cuts in combinations_with_replacement(range(units + 1), n_experts - 1):
        parts = np.diff([0, *cuts, units])
        rows.append(parts / units)
    grid = np.unique(np.array(rows), axis=0)
    # lexicographic ascending by construction of unique
    return grid


def optimal_weighting_oracle(
    p_data: np.ndarray,
    pool_probs: np.ndarray,
    grid_step: float = GRID_STEP_DEFAULT,
) -> tuple[np.ndarray, float, float]:
    """Exhaustive simplex-grid search for the best fixed fusion weighting.

    Returns (w*, CE at w*, best single-expert CE). Because the grid contains
    every vertex, the minimum never exceeds the best expert's cross-entropy.
    Ties go to the lexicographically smallest w.
    """
    pool = clamp_probs(pool_probs)
    m = pool.shape[0]
    if m > MAX_GRID_EXPERTS:
        raise ValueError(
            f"grid search supports M <= {MAX_GRID_EXPERTS}; use stochastic search"
        )
    expert_ce = np.array([cross_entropy(p_data, pool[i]) for i in range(m)])
    log_pool = np.log(pool)  # (M, K)
    best_ce = np.inf
    best_w = None
    for w in simplex_grid(m, grid_step):
        log_mass = w @ log_pool
        top = log_mass.max()
        lse = np.log(np.exp(log_mass - top).sum()) + top
        ce = float(w @ expert_ce + lse)  # decomposition form, exact
        if ce < best_ce:
            best_ce = ce
            best_w = w
    return best_w, best_ce, float(expert_ce.min())


def binwise_selection_oracle(
    expert_hazards: np.ndarray,
    labels: list[tuple[int, int]],
    grid_step: float = GRID_STEP_DEFAULT,
) -> dict:
    """Bin-wise simplex search on a survival pool.

    expert_hazards is (M, K): each expert's hazard curve, shared across the
    pool. Per bin, the empirical at-risk event frequency plays the data
    distribution and the experts contribute their (event, survive)
    Bernoullis. Reports summed bin-wise optima against the best single
    expert's total NLL, plus the one-hot-restricted (pure selection) optimum.
    """
    h = np.clip(np.asarray(expert_hazards, dtype=np.float64), 1e-12, 1 - 1e-12)
    m, k = h.shape
    t = np.array([lab[0] for lab in labels])
    delta = np.array([lab[1] for lab in labels])

    expert_total = np.array(
        [sum(survival_nll(h[j], lab) for lab in labels) for j in range(m)]
    )
    optimal_total = 0.0
    onehot_total = 0.0
    per_bin = []
    for kb in range(1, k + 1):
        at_risk = int((t >= kb).sum())
        if at_risk == 0:
            continue
        events = int(((t == kb) & (delta == 1)).sum())
        p_data = np.array([events / at_risk, 1.0 - events / at_risk])
        pool = np.stack([h[:, kb - 1], 1.0 - h[:, kb - 1]], axis=1)  # (M, 2)
        w_star, ce_star, best_expert_ce = optimal_weighting_oracle(p_data, pool, grid_step)
        optimal_total += at_risk * ce_star
        onehot_total += at_risk * min(
            cross_entropy(p_data, pool[j]) for j in range(m)
        )
        per_bin.append(
            {
                "bin": kb,
                "at_risk": at_risk,
                "events": events,
                "w_star": w_star.tolist(),
                "ce_star": ce_star,
                "best_expert_ce": best_expert_ce,
            }
        )
    best_expert_total = float(expert_total.min())
    return {
        "per_bin": per_bin,
        "optimal_total_nll": float(optimal_total),
        "onehot_total_nll": float(onehot_total),
        "best_expert_total_nll": best_expert_total,
        "holds": bool(onehot_total <= best_expert_total + 1e-9),
    }


def _complementary_pool(rng: np.random.Generator, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Two experts confident on opposite halves of the label space, with a
    mixed data distribution: product fusion has an interior optimum."""
    conf = rng.uniform(0.85, 0.95)
    p1 = np.full(k, (1 - conf) / (k - 1))
    p2 = np.full(k, (1 - conf) / (k - 1))
    p1[0] = conf
    p2[-1] = conf
    p_data = np.zeros(k)
    p_data[0] = p_data[-1] = 0.5
    return p_data, np.stack([p1, p2])


def run_certificate(
    seed: int = 0,
    n_bound_trials: int = 10_000,
    n_weighting: int = 100,
    n_binwise: int = 50,
    grid_step: float = GRID_STEP_DEFAULT,
) -> dict:
    """Full verification sweep; returns a pass/fail certificate with worst
    residuals and any counterexamples."""
    rng = np.random.default_rng(seed)

    # Normalizer bound and decomposition residual on random pools
    worst_z = -np.inf
    worst_residual = 0.0
    counterexamples = []
    for _ in range(n_bound_trials):
        m = int(rng.integers(1, 6))
        k = int(rng.integers(2, 7))
        pool = clamp_probs(rng.dirichlet(np.full(k, 0.5), size=m))
        w = rng.dirichlet(np.ones(m))
        p_data = rng.dirichlet(np.ones(k))
        fused = product_fuse(pool, w)
        worst_z = max(worst_z, fused.normalizer)
        residual = ce_decomposition_check(p_data, pool, w)
        worst_residual = max(worst_residual, residual)
        if fused.normalizer > 1 + 1e-12 or residual >= 1e-9:
            counterexamples.append(
                {"pool": pool.tolist(), "w": w.tolist(), "z": fused.normalizer}
            )

    # Optimal-weighting guarantee: half random, half complementary-constructed
    weighting_holds = 0
    strict_improvements = 0
    for i in range(n_weighting):
        k = int(rng.choice([2, 5]))
        if i % 2 == 0:
            p_data, pool = _complementary_pool(rng, k)
        else:
            m = int(rng.choice([2, 3]))
            pool = rng.dirichlet(np.full(k, 0.7), size=m)
            p_data = rng.dirichlet(np.ones(k))
        _, ce_star, best_expert = optimal_weighting_oracle(p_data, pool, grid_step)
        if ce_star <= best_expert + 1e-12:
            weighting_holds += 1
        if best_expert - ce_star > 1e-3:
            strict_improvements += 1

    # Bin-wise selection on random survival pools
    binwise_holds = 0
    for _ in range(n_binwise):
        m = int(rng.integers(2, 5))
        k = int(rng.integers(2, 6))
        hazards = rng.uniform(0.05, 0.6, size=(m, k))
        true_h = rng.uniform(0.1, 0.5, size=k)
        labels = []
        for _ in range(100):
            t_event, delta = k, 0
            for kb in range(1, k + 1):
                if rng.random() < true_h[kb - 1]:
                    t_event, delta = kb, 1
                    break
            if rng.random() < 0.3 and t_event > 1:
                t_event, delta = int(rng.integers(1, t_event)), 0
            labels.append((t_event, delta))
        report = binwise_selection_oracle(hazards, labels, grid_step)
        if report["holds"]:
            binwise_holds += 1

    cert = {
        "normalizer_bound": {
            "trials": n_bound_trials,
            "worst_z": worst_z,
            "worst_residual": worst_residual,
            "passed": worst_z <= 1 + 1e-12 and worst_residual < 1e-9,
        },
        "optimal_weighting": {
            "instances": n_weighting,
            "holds": weighting_holds,
            "strict_improvements": strict_improvements,
            "passed": weighting_holds == n_weighting,
        },
        "binwise_selection": {
            "instances": n_binwise,
            "holds": binwise_holds,
            "passed": binwise_holds == n_binwise,
        },
        "counterexamples": counterexamples,
    }
    cert["passed"] = all(
        cert[key]["passed"] for key in ("normalizer_bound", "optimal_weighting", "binwise_selection")
    )
    return cert


def write_certificate(cert: dict, path: str | Path):
    Path(path).write_text(json.dumps(cert, indent=2, sort_keys=True))
