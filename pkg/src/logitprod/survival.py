"""Discrete-time survival: bin-wise Bernoulli hazards, the survival NLL,
risk scores, and per-bin product fusion with independent gates."""

from __future__ import annotations

import numpy as np

from .core import Label, LogitRecord, clamp_probs

HAZARD_FLOOR = 1e-12


def logits_to_hazards(expert_logits: np.ndarray) -> np.ndarray:
    """Per-bin conditional event probability via the logistic link, clamped
    away from {0, 1} so every NLL stays finite."""
    z = np.asarray(expert_logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("hazard logits must be finite")
    with np.errstate(over="ignore"):  # exp overflow just saturates to h=0
        h = 1.0 / (1.0 + np.exp(-z))
    return np.clip(h, HAZARD_FLOOR, 1.0 - HAZARD_FLOOR)


def survival_nll(hazards: np.ndarray, label: Label | tuple[int, int]) -> float:
    """Negative log-likelihood of a discrete-time label under a hazard curve.

    Event at bin t (delta=1): -ln h_t - sum_{j<t} ln(1 - h_j).
    Censored at bin t (delta=0): -sum_{j<=t} ln(1 - h_j).
    """
    if isinstance(label, Label):
        t, delta = label.value, label.event
    else:
        t, delta = label
    h = np.clip(np.asarray(hazards, dtype=np.float64), HAZARD_FLOOR, 1.0 - HAZARD_FLOOR)
    if not (1 <= t <= h.shape[-1]):
        raise ValueError(f"event bin {t} outside [1, {h.shape[-1]}]")
    log_surv = np.log1p(-h)
    if delta == 1:
        return float(-np.log(h[t - 1]) - log_surv[: t - 1].sum())
    return float(-log_surv[:t].sum())


def risk_score(hazards: np.ndarray) -> float:
    """Cumulative log-survival risk: -sum_k ln(1 - h_k).

    Strictly increasing in every hazard, which is all the C-index needs.
    """
    h = np.clip(np.asarray(hazards, dtype=np.float64), HAZARD_FLOOR, 1.0 - HAZARD_FLOOR)
    return float(-np.log1p(-h).sum())


def bin_bernoullis(hazards: np.ndarray) -> np.ndarray:
    """Per-bin two-outcome distributions (event, survive) from hazards.

    hazards (..., K) -> (..., K, 2) with [..., 0] = event probability.
    """
    h = np.asarray(hazards, dtype=np.float64)
    return clamp_probs(np.stack([h, 1.0 - h], axis=-1))


def fuse_survival(record: LogitRecord, calib, gates, mode: str = "logitprod") -> np.ndarray:
    """Fuse a survival record's expert hazards bin by bin.

    Each bin k gets its own gate: build the M per-bin Bernoullis, compute the
    bin's cues, let gate k emit simplex weights, product-fuse, and take the
    fused event probability as the bin's hazard. Returns the fused K-vector.
    """
    from .calibration import apply_temperatures
    from .cues import survival_gate_inputs
    from .fusion import product_fuse
    from .gate import gate_forward

    if record.label.event is None:
        raise ValueError("fuse_survival requires a survival record")
    calibrated = apply_temperatures(record, calib)
    hazards = logits_to_hazards(calibrated)  # (M, K)
    m_experts, k_bins = hazards.shape
    if len(gates) != k_bins:
        raise ValueError(f"need {k_bins} gates, got {len(gates)}")
    bern = bin_bernoullis(hazards)  # (M, K, 2)
    if mode == "learnable_product" or mode == "logitprod":
        if mode == "logitprod":
            xbins = survival_gate_inputs(hazards[None])[0]  # (K, 3M+2)
        else:
            flat = calibrated.reshape(-1)
            xbins = np.tile(flat, (k_bins, 1))
        fused = np.empty(k_bins)
        for k in range(k_bins):
            w = gate_forward(xbins[k], gates[k])
            fused[k] = product_fuse(bern[:, k, :], w).distribution[0]
        return fused
    raise ValueError(f"unsupported survival fusion mode here: {mode!r}")
