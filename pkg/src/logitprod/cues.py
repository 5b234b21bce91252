"""Logit-derived gating cues: per-expert confidence, top-2 margin, and
entropy, plus the pool-level disagreement statistic

    u = H(mean distribution) - mean entropy,

all concatenated into the gating input x = (s, gamma, h, h_bar, u) of
length 3M+2. Entropy is in nats throughout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import CalibrationState, apply_temperatures, apply_temperatures_batch
from .core import LogitRecord, clamp_probs, softmax

U_NEG_TOL = 1e-9


@dataclass(frozen=True)
class GatingInput:
    confidences: np.ndarray  # s, (M,)
    margins: np.ndarray  # gamma, (M,)
    entropies: np.ndarray  # h, (M,), nats
    mean_entropy: float  # h_bar
    disagreement: float  # u

    @property
    def x(self) -> np.ndarray:
        return np.concatenate(
            [
                self.confidences,
                self.margins,
                self.entropies,
                [self.mean_entropy, self.disagreement],
            ]
        )


def _entropy(p: np.ndarray) -> np.ndarray:
    """Shannon entropy along the last axis with 0 ln 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


def expert_cues(p: np.ndarray) -> tuple[float, float, float]:
    """(max probability, top-2 margin, entropy) for one distribution.

    Ties in the top-2 are broken by lowest index.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] < 2:
        raise ValueError("expert_cues requires K >= 2")
    order = np.argsort(-p, kind="stable")  # stable sort = lowest index wins ties
    s = float(p[order[0]])
    gamma = float(p[order[0]] - p[order[1]])
    return s, gamma, float(_entropy(p))


def disagreement(pool_probs: np.ndarray) -> tuple[float, np.ndarray, float]:
    """(mean entropy, mean distribution, disagreement u) for an M-expert pool.

    u = H(p_bar) - h_bar is nonnegative by Jensen; tiny negative values from
    roundoff are clamped to 0.
    """
    p = np.asarray(pool_probs, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError("pool_probs must be (M, K)")
    h_bar = float(_entropy(p).mean())
    p_bar = p.mean(axis=0)
    u = float(_entropy(p_bar)) - h_bar
    if u < 0:
        if u < -U_NEG_TOL:
            raise AssertionError(f"disagreement u={u} violates Jensen bound")
        u = 0.0
    return h_bar, p_bar, u


def gating_inputs(pool_probs: np.ndarray) -> np.ndarray:
    """Vectorized cue construction: (N, M, K) probabilities -> (N, 3M+2)."""
    p = np.asarray(pool_probs, dtype=np.float64)
    if p.ndim == 2:
        p = p[None]
    top2 = -np.sort(-p, axis=-1, kind="stable")[..., :2]
    s = top2[..., 0]  # (N, M)
    gamma = top2[..., 0] - top2[..., 1]
    h = _entropy(p)  # (N, M)
    h_bar = h.mean(axis=1, keepdims=True)
    u = _entropy(p.mean(axis=1)) - h_bar[:, 0]
    u = np.maximum(u, 0.0)
    return np.concatenate([s, gamma, h, h_bar, u[:, None]], axis=1)


def build_gating_input(record: LogitRecord, calib: CalibrationState) -> GatingInput:
    """Calibrate, soften, and summarize one record into its gating cues."""
    probs = softmax(apply_temperatures(record, calib))
    m = probs.shape[0]
    s = np.empty(m)
    gamma = np.empty(m)
    h = np.empty(m)
    for i in range(m):
        s[i], gamma[i], h[i] = expert_cues(probs[i])
    if m == 1:
        h_bar, u = float(h[0]), 0.0
    else:
        h_bar, _, u = disagreement(probs)
    return GatingInput(
        confidences=s, margins=gamma, entropies=h, mean_entropy=h_bar, disagreement=u
    )


def survival_gate_inputs(hazards: np.ndarray) -> np.ndarray:
    """Per-bin cue vectors for survival pools.

    hazards (N, M, K) -> (N, K, 3M+2): each bin contributes the same cue
    construction over its M two-outcome (event, survive) distributions.
    """
    h = np.asarray(hazards, dtype=np.float64)
    n, m, k = h.shape
    bern = clamp_probs(np.stack([h, 1.0 - h], axis=-1))  # (N, M, K, 2)
    per_bin = np.transpose(bern, (0, 2, 1, 3)).reshape(n * k, m, 2)
    return gating_inputs(per_bin).reshape(n, k, 3 * m + 2)


def write_cue_csv(
    records: list[LogitRecord], calib: CalibrationState, path: str | Path
):
    """Inspection dump: one row per (sample, expert) with the pool-level
    h_bar and u repeated per sample."""
    from .core import stacked_logits

    probs = softmax(apply_temperatures_batch(stacked_logits(records), calib))
    x = gating_inputs(probs)
    m = probs.shape[1]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "expert", "s", "gamma", "h", "h_bar", "u"])
        for rec, row in zip(records, x):
            for j in range(m):
                writer.writerow(
                    [
                        rec.sample_id,
                        j,
                        f"{row[j]:.9g}",
                        f"{row[m + j]:.9g}",
                        f"{row[2 * m + j]:.9g}",
                        f"{row[3 * m]:.9g}",
                        f"{row[3 * m + 1]:.9g}",
                    ]
                )
