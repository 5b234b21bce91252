"""Weighted product-of-experts fusion in log-space, plus the non-learned and
learnable baseline fusion rules (majority vote, mean, uniform product,
learnable sum/product)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .calibration import CalibrationState, apply_temperatures
from .core import LogitRecord, check_probability_vector, clamp_probs, softmax
from .cues import build_gating_input
from .gate import GateParameters, gate_forward


class FusionMode(str, Enum):
    MAJORITY_VOTE = "majority_vote"
    MEAN = "mean"
    UNIFORM_PRODUCT = "uniform_product"
    LEARNABLE_SUM = "learnable_sum"
    LEARNABLE_PRODUCT = "learnable_product"
    LOGITPROD = "logitprod"

    @property
    def is_learnable(self) -> bool:
        return self in (
            FusionMode.LEARNABLE_SUM,
            FusionMode.LEARNABLE_PRODUCT,
            FusionMode.LOGITPROD,
        )


@dataclass(frozen=True)
class FusedPrediction:
    distribution: np.ndarray  # (K,)
    weights: np.ndarray  # (M,) simplex weights
    normalizer: float  # in (0, 1]
    log_normalizer: float  # <= 0

    def __post_init__(self):
        assert check_probability_vector(self.distribution)
        assert self.normalizer <= 1 + 1e-12


def product_fuse(pool_probs: np.ndarray, w: np.ndarray) -> FusedPrediction:
    """Normalized weighted geometric mean of the expert distributions.

    Computed entirely in log-space: log q(y) = sum_m w_m log p_m(y), with a
    log-sum-exp normalizer. The normalizer never exceeds 1 (AM-GM).
    """
    p = clamp_probs(pool_probs)
    w = np.asarray(w, dtype=np.float64)
    if p.shape[0] != w.shape[0]:
        raise ValueError("weights and pool shapes differ")
    log_mass = w @ np.log(p)  # (K,), all entries <= 0
    top = log_mass.max()
    lse = float(np.log(np.exp(log_mass - top).sum()) + top)
    dist = np.exp(log_mass - lse)
    return FusedPrediction(
        distribution=dist / dist.sum(),
        weights=w,
        normalizer=float(np.exp(lse)),
        log_normalizer=lse,
    )


def mean_fuse(pool_probs: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """Arithmetic mixture sum_m w_m p_m (uniform weights when absent)."""
    p = np.asarray(pool_probs, dtype=np.float64)
    if w is None:
        return p.mean(axis=0)
    return np.asarray(w, dtype=np.float64) @ p


def majority_vote(pool_probs: np.ndarray) -> int:
    """Plurality over per-expert argmax classes (0-based); ties broken by the
    mean-probability rule among the tied classes."""
    p = np.asarray(pool_probs, dtype=np.float64)
    votes = np.bincount(p.argmax(axis=1), minlength=p.shape[1])
    top = votes.max()
    tied = np.flatnonzero(votes == top)
    if len(tied) == 1:
        return int(tied[0])
    mean_p = mean_fuse(p)
    return int(tied[np.argmax(mean_p[tied])])


def fuse_record(
    record: LogitRecord,
    calib: CalibrationState,
    mode: FusionMode | str,
    gates: list[GateParameters] | None = None,
) -> FusedPrediction:
    """Dispatch one classification record through the requested fusion rule.

    Majority vote is wrapped as a one-hot FusedPrediction on the voted class
    so every mode shares a prediction type.
    """
    mode = FusionMode(mode)
    probs = clamp_probs(softmax(apply_temperatures(record, calib)))
    m = probs.shape[0]
    uniform = np.full(m, 1.0 / m)
    if mode.is_learnable and not gates:
        raise ValueError(f"mode {mode.value} requires gate parameters")

    if mode is FusionMode.UNIFORM_PRODUCT:
        return product_fuse(probs, uniform)
    if mode is FusionMode.MEAN:
        return FusedPrediction(mean_fuse(probs), uniform, 1.0, 0.0)
    if mode is FusionMode.MAJORITY_VOTE:
        dist = np.zeros(probs.shape[1])
        dist[majority_vote(probs)] = 1.0
        return FusedPrediction(dist, uniform, 1.0, 0.0)
    if mode is FusionMode.LEARNABLE_PRODUCT:
        x = apply_temperatures(record, calib).reshape(-1)
    else:  # logitprod / learnable_sum gate on the cue vector
        x = build_gating_input(record, calib).x
    w = gate_forward(x, gates[0])
    if mode is FusionMode.LEARNABLE_SUM:
        return FusedPrediction(clamp_probs(mean_fuse(probs, w)), w, 1.0, 0.0)
    return product_fuse(probs, w)


def write_predictions_jsonl(
    path: str | Path, rows: list[tuple[str, str, FusedPrediction]]
):
    """Dump (sample_id, mode, prediction) rows one JSON object per line."""
    with Path(path).open("w") as fh:
        for sample_id, mode, pred in rows:
            fh.write(
                json.dumps(
                    {
                        "id": sample_id,
                        "mode": mode,
                        "weights": pred.weights.tolist(),
                        "dist": pred.distribution.tolist(),
                        "log_normalizer": pred.log_normalizer,
                    }
                )
                + "\n"
            )
