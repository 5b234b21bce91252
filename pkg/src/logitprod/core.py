"""Domain types, validation, and the JSONL logit-exchange format.

A dataset is a pool of frozen experts' output logits: one record per sample,
each holding an M x K logit matrix (row m = expert m), a label, a fold tag,
and a split role. Everything downstream (calibration, cues, gating, fusion)
consumes these records.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PROB_FLOOR = 1e-12
SPLIT_ROLES = ("train", "calibration", "validation", "test")


@dataclass(frozen=True)
class TaskKind:
    """Prediction task: K-class classification or K-bin discrete-time survival."""

    kind: str  # "classification" | "survival"
    n_outputs: int  # K: classes or time bins

    def __post_init__(self):
        if self.kind not in ("classification", "survival"):
            raise ValueError(f"unknown task kind: {self.kind!r}")
        if self.n_outputs < 2:
            raise ValueError("K must be >= 2")

    @property
    def is_survival(self) -> bool:
        return self.kind == "survival"


@dataclass(frozen=True)
class Label:
    """Classification: class index in 1..K (event is None).
    Survival: event bin in 1..K plus 0/1 event indicator."""

    value: int
    event: int | None = None

    def __post_init__(self):
        if self.event is not None and self.event not in (0, 1):
            raise ValueError("event indicator must be 0 or 1")


@dataclass(frozen=True)
class LogitRecord:
    """One sample's stacked expert logits plus label and split tags.

    `logits` is an M x K float array, made read-only at construction; records
    are immutable value objects and safe to share across threads.
    """

    sample_id: str
    logits: np.ndarray
    label: Label
    fold: int = 0
    split_role: str = "train"

    def __post_init__(self):
        arr = np.asarray(self.logits, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"logits for {self.sample_id!r} must be 2-D (M x K)")
        arr.flags.writeable = False
        object.__setattr__(self, "logits", arr)
        if self.fold < 0:
            raise ValueError("fold must be >= 0")
        if self.split_role not in SPLIT_ROLES:
            raise ValueError(f"unknown split role: {self.split_role!r}")

    @property
    def n_experts(self) -> int:
        return self.logits.shape[0]


@dataclass(frozen=True)
class ExpertPoolMeta:
    """Names of the M experts plus the shared task definition."""

    expert_names: tuple[str, ...]
    task: TaskKind

    def __post_init__(self):
        names = tuple(self.expert_names)
        object.__setattr__(self, "expert_names", names)
        if len(set(names)) != len(names):
            raise ValueError("expert names must be unique")

    @property
    def n_experts(self) -> int:
        return len(self.expert_names)


@dataclass
class ValidationReport:
    violations: list[tuple[str, str]] = field(default_factory=list)  # (sample_id, message)

    @property
    def passed(self) -> bool:
        return not self.violations

    def add(self, sample_id: str, message: str):
        self.violations.append((sample_id, message))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax along the last axis.

    Raises on non-finite input; preserves the argmax.
    """
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax input contains non-finite values")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def clamp_probs(p: np.ndarray) -> np.ndarray:
    """Clip probabilities to [1e-12, 1] and renormalize along the last axis.

    Prevents -inf logs in product fusion when a member emits a hard zero.
    """
    q = np.clip(np.asarray(p, dtype=np.float64), PROB_FLOOR, 1.0)
    return q / q.sum(axis=-1, keepdims=True)


def check_probability_vector(p: np.ndarray, tol: float = 1e-9) -> bool:
    p = np.asarray(p)
    return bool(
        np.all(p >= -tol) and np.all(p <= 1 + tol) and abs(float(p.sum()) - 1.0) <= tol
    )


def validate_dataset(records: list[LogitRecord], meta: ExpertPoolMeta) -> ValidationReport:
    """Check every record against the pool invariants; passes iff zero violations."""
    if not records:
        raise ValueError("no records")
    report = ValidationReport()
    m, k = meta.n_experts, meta.task.n_outputs
    seen_ids = set()
    for rec in records:
        if rec.sample_id in seen_ids:
            report.add(rec.sample_id, "duplicate sample_id")
        seen_ids.add(rec.sample_id)
        if rec.logits.shape[0] != m:
            report.add(rec.sample_id, f"expected {m} expert rows, got {rec.logits.shape[0]}")
        if rec.logits.shape[1] != k:
            report.add(rec.sample_id, f"expected K={k} columns, got {rec.logits.shape[1]}")
        if not np.all(np.isfinite(rec.logits)):
            report.add(rec.sample_id, "non-finite logit")
        lab = rec.label
        if meta.task.is_survival:
            if lab.event is None:
                report.add(rec.sample_id, "survival record missing event indicator")
            if not (1 <= lab.value <= k):
                report.add(rec.sample_id, f"event bin {lab.value} outside [1, {k}]")
        else:
            if lab.event is not None:
                report.add(rec.sample_id, "classification record carries event indicator")
            if not (1 <= lab.value <= k):
                report.add(rec.sample_id, f"class index {lab.value} outside [1, {k}]")
    return report


# ---------------------------------------------------------------------------
# JSONL exchange format
#
# Header line : {"meta": {"task": "classification|survival", "K": int,
#                          "experts": [...]}}
# Record line : {"id": str, "fold": int, "role": str,
#                "label": int | {"bin": int, "event": 0|1},
#                "logits": [[float x K] x M]}
# ---------------------------------------------------------------------------


def _label_to_json(label: Label):
    if label.event is None:
        return label.value
    return {"bin": label.value, "event": label.event}


def _label_from_json(obj) -> Label:
    if isinstance(obj, dict):
        return Label(value=int(obj["bin"]), event=int(obj["event"]))
    return Label(value=int(obj))


def write_jsonl(path: str | Path, records: list[LogitRecord], meta: ExpertPoolMeta):
    path = Path(path)
    with path.open("w") as fh:
        header = {
            "meta": {
                "task": meta.task.kind,
                "K": meta.task.n_outputs,
                "experts": list(meta.expert_names),
            }
        }
        fh.write(json.dumps(header) + "\n")
        for rec in records:
            obj = {
                "id": rec.sample_id,
                "fold": rec.fold,
                "role": rec.split_role,
                "label": _label_to_json(rec.label),
                "logits": rec.logits.tolist(),
            }
            fh.write(json.dumps(obj) + "\n")


def read_jsonl(path: str | Path) -> tuple[list[LogitRecord], ExpertPoolMeta]:
    path = Path(path)
    records: list[LogitRecord] = []
    meta: ExpertPoolMeta | None = None
    with path.open() as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if i == 0:
                if "meta" not in obj:
                    raise ValueError("first line must be the dataset header")
                m = obj["meta"]
                meta = ExpertPoolMeta(
                    expert_names=tuple(m["experts"]),
                    task=TaskKind(kind=m["task"], n_outputs=int(m["K"])),
                )
                continue
            records.append(
                LogitRecord(
                    sample_id=obj["id"],
                    logits=np.array(obj["logits"], dtype=np.float64),
                    label=_label_from_json(obj["label"]),
                    fold=int(obj["fold"]),
                    split_role=obj["role"],
                )
            )
    if meta is None:
        raise ValueError("no records")
    return records, meta


def labels_array(records: list[LogitRecord]) -> np.ndarray:
    """Class indices (or event bins) as a 0-based int array."""
    return np.array([r.label.value - 1 for r in records], dtype=np.int64)


def events_array(records: list[LogitRecord]) -> np.ndarray:
    return np.array([r.label.event for r in records], dtype=np.int64)


def stacked_logits(records: list[LogitRecord]) -> np.ndarray:
    """All records' logits as an (N, M, K) array."""
    return np.stack([r.logits for r in records])
