"""Per-expert scalar temperature scaling fitted on the calibration split.

Each expert gets one tau_m > 0 minimizing its mean task NLL over the
calibration records, found by golden-section search in log-temperature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import sqrt
from pathlib import Path

import numpy as np

from .core import LogitRecord, TaskKind, labels_array, softmax, stacked_logits
from .survival import logits_to_hazards, survival_nll

TAU_MIN = 0.05
TAU_MAX = 20.0
LOG_TAU_TOL = 1e-4
MAX_GOLDEN_ITERS = 200

_INVPHI = (sqrt(5.0) - 1.0) / 2.0


@dataclass
class CalibrationState:
    temperatures: np.ndarray  # (M,), each in [TAU_MIN, TAU_MAX]
    nll_before: np.ndarray  # mean NLL at tau=1, per expert
    nll_after: np.ndarray  # mean NLL at fitted tau, per expert
    n_calibration_samples: int
    warnings: list[str] = field(default_factory=list)

    @property
    def n_experts(self) -> int:
        return len(self.temperatures)

    def to_json(self) -> dict:
        return {
            "temperatures": self.temperatures.tolist(),
            "nll_before": self.nll_before.tolist(),
            "nll_after": self.nll_after.tolist(),
            "n": self.n_calibration_samples,
            "warnings": self.warnings,
        }

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))

    @classmethod
    def from_json(cls, obj: dict) -> "CalibrationState":
        return cls(
            temperatures=np.asarray(obj["temperatures"], dtype=np.float64),
            nll_before=np.asarray(obj["nll_before"], dtype=np.float64),
            nll_after=np.asarray(obj["nll_after"], dtype=np.float64),
            n_calibration_samples=int(obj["n"]),
            warnings=list(obj.get("warnings", [])),
        )

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationState":
        return cls.from_json(json.loads(Path(path).read_text()))


def _golden_section(fn, lo: float, hi: float, tol: float = LOG_TAU_TOL) -> float:
    """Minimize a unimodal function on [lo, hi]; returns the midpoint of the
    final bracket."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(MAX_GOLDEN_ITERS):
        if b - a <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def _classification_nll(logits: np.ndarray, y: np.ndarray, tau: float) -> float:
    """Mean NLL of one expert's scaled logits. logits (N, K), y 0-based."""
    p = softmax(logits / tau)
    picked = np.clip(p[np.arange(len(y)), y], 1e-300, None)
    return float(-np.log(picked).mean())


def _survival_expert_nll(logits: np.ndarray, records: list[LogitRecord], tau: float) -> float:
    total = 0.0
    for z, rec in zip(logits, records):
        total += survival_nll(logits_to_hazards(z / tau), rec.label)
    return total / len(records)


def fit_temperatures(records: list[LogitRecord], task: TaskKind) -> CalibrationState:
    """Fit tau_m per expert by golden-section search over log tau.

    Experts are independent; the fit is deterministic. If the fitted optimum
    is (within search slack) worse than tau=1, tau=1 is kept, so the
    monotone-safety invariant nll_after <= nll_before holds exactly.
    """
    if not records:
        raise ValueError("empty calibration split")
    all_logits = stacked_logits(records)  # (N, M, K)
    n, m_experts, _ = all_logits.shape
    temperatures = np.ones(m_experts)
    nll_before = np.zeros(m_experts)
    nll_after = np.zeros(m_experts)
    warnings: list[str] = []

    degenerate = False
    if not task.is_survival:
        y = labels_array(records)
        degenerate = len(np.unique(y)) < 2
        if degenerate:
            warnings.append(
                "single-class calibration split: temperatures forced to 1"
            )

    lo, hi = np.log(TAU_MIN), np.log(TAU_MAX)
    for m in range(m_experts):
        logits_m = all_logits[:, m, :]
        if task.is_survival:
            obj = lambda lt: _survival_expert_nll(logits_m, records, float(np.exp(lt)))
        else:
            obj = lambda lt: _classification_nll(logits_m, y, float(np.exp(lt)))
        base = obj(0.0)
        nll_before[m] = base
        if degenerate:
            nll_after[m] = base
            continue
        log_tau = _golden_section(obj, lo, hi)
        fitted = obj(log_tau)
        if fitted <= base:
            temperatures[m] = float(np.exp(log_tau))
            nll_after[m] = fitted
        else:
            nll_after[m] = base
    return CalibrationState(
        temperatures=temperatures,
        nll_before=nll_before,
        nll_after=nll_after,
        n_calibration_samples=n,
        warnings=warnings,
    )


def apply_temperatures(record: LogitRecord, state: CalibrationState) -> np.ndarray:
    """Divide each expert row by its temperature; argmax per row is unchanged."""
    if record.n_experts != state.n_experts:
        raise ValueError(
            f"record has {record.n_experts} experts, state has {state.n_experts}"
        )
    return record.logits / state.temperatures[:, None]


def apply_temperatures_batch(logits: np.ndarray, state: CalibrationState) -> np.ndarray:
    """Vectorized form for (N, M, K) stacks."""
    if logits.shape[1] != state.n_experts:
        raise ValueError("expert-count mismatch")
    return logits / state.temperatures[None, :, None]
