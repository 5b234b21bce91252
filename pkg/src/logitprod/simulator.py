"""Synthetic heterogeneous expert-pool generator.

Produces pools with controllable per-expert accuracy, injected
miscalibration temperatures, and correlated error events, so fusion claims
can be exercised at desk scale. The mechanism is incidental; tests assert
the contracts (marginal accuracy, error correlation, determinism).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import beta as beta_dist

from .core import ExpertPoolMeta, Label, LogitRecord, TaskKind


@dataclass
class PoolSpec:
    n_experts: int
    n_classes: int  # classes, or time bins for survival
    n_samples: int
    accuracies: list[float]
    temperatures_true: list[float] = field(default_factory=list)
    correlation: float = 0.0  # probability an error event is shared
    confidence_scale: float = 1.0  # multiplier on the calibrated logit magnitude
    jitter: float = 0.1  # relative sd of logit jitter
    seed: int = 0
    task: str = "classification"
    n_folds: int = 5

    def __post_init__(self):
        if not self.temperatures_true:
            self.temperatures_true = [1.0] * self.n_experts
        if len(self.accuracies) != self.n_experts:
            raise ValueError("need one accuracy per expert")
        if len(self.temperatures_true) != self.n_experts:
            raise ValueError("need one temperature per expert")
        if not 0.0 <= self.correlation <= 1.0:
            raise ValueError("correlation must be in [0, 1]")
        if self.task == "classification":
            for a in self.accuracies:
                if a < 1.0 / self.n_classes:
                    raise ValueError(f"accuracy {a} below chance 1/{self.n_classes}")

    @classmethod
    def from_json(cls, obj: dict) -> "PoolSpec":
        return cls(**obj)

    @classmethod
    def load(cls, path: str | Path) -> "PoolSpec":
        return cls.from_json(json.loads(Path(path).read_text()))


CONFIDENCE_CONCENTRATION = 4.0  # Beta concentration of per-sample confidence


def _confidence_magnitude(c: np.ndarray, k: int) -> np.ndarray:
    """Logit magnitude at which softmax(a * onehot) puts confidence c on the
    top class."""
    c = np.clip(c, 1.0 / k + 1e-6, 1.0 - 1e-4)
    return np.log(c * (k - 1) / (1.0 - c))


def _sample_confidences(
    acc: np.ndarray, k: int, quantiles: np.ndarray
) -> np.ndarray:
    """Per-sample top-class confidences with mean acc_m, drawn by inverting a
    Beta on (1/K, 1) at the given quantiles (shape (N, M)).

    Correctness is then Bernoulli(confidence), so each expert is pointwise
    calibrated and its marginal accuracy is exactly acc_m.
    """
    lo = 1.0 / k
    mu = np.clip((acc - lo) / (1.0 - lo), 1e-3, 1.0 - 1e-3)
    nu = CONFIDENCE_CONCENTRATION
    c = np.empty_like(quantiles)
    for m in range(len(acc)):
        if acc[m] >= 1.0 - 1e-9:
            c[:, m] = 1.0  # perfect expert: always confident, always right
            continue
        b = beta_dist.ppf(quantiles[:, m], mu[m] * nu, (1.0 - mu[m]) * nu)
        c[:, m] = lo + (1.0 - lo) * b
    return c


def _stratified_folds(strata: np.ndarray, n_folds: int, rng: np.random.Generator) -> np.ndarray:
    """Round-robin fold assignment within each stratum: per-fold proportions
    stay within one sample of the global proportions."""
    folds = np.empty(len(strata), dtype=np.int64)
    offset = 0
    for value in np.unique(strata):
        idx = np.flatnonzero(strata == value)
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = (np.arange(len(idx)) + offset) % n_folds
        offset += len(idx)
    return folds


def _roles_for_fold0(folds: np.ndarray, n_folds: int) -> list[str]:
    if n_folds == 1:
        return ["train"] * len(folds)
    roles = []
    for f in folds:
        if f == 0:
            roles.append("test")
        elif f == 1 % n_folds:
            roles.append("validation")
        else:
            roles.append("train")
    return roles


def generate_pool(spec: PoolSpec) -> tuple[list[LogitRecord], ExpertPoolMeta, dict]:
    """Generate a pool; identical spec + seed gives identical bytes."""
    if spec.task == "survival":
        return _generate_survival_pool(spec)
    rng = np.random.default_rng(spec.seed)
    n, m, k = spec.n_samples, spec.n_experts, spec.n_classes
    acc = np.asarray(spec.accuracies, dtype=np.float64)
    taus = np.asarray(spec.temperatures_true, dtype=np.float64)

    labels = rng.integers(0, k, size=n)
    shared = rng.random(n) < spec.correlation
    u_shared = rng.random(n)
    u_indep = rng.random((n, m))
    q_shared = rng.random(n)
    q_indep = rng.random((n, m))
    wrong_shared = (labels + rng.integers(1, k, size=n)) % k
    wrong_indep = (labels[:, None] + rng.integers(1, k, size=(n, m))) % k
    noise = rng.normal(size=(n, m, k))

    # a shared corruption event shares the difficulty quantile, the
    # correctness uniform, and the wrong label across experts
    u = np.where(shared[:, None], u_shared[:, None], u_indep)
    q = np.where(shared[:, None], q_shared[:, None], q_indep)
    confid = _sample_confidences(acc, k, q)  # (N, M)
    err = u >= confid
    wrong = np.where(shared[:, None], wrong_shared[:, None], wrong_indep)
    pred = np.where(err, wrong, labels[:, None])  # (N, M)

    mags = spec.confidence_scale * _confidence_magnitude(confid, k)  # (N, M)
    base = np.zeros((n, m, k))
    np.put_along_axis(base, pred[:, :, None], 1.0, axis=2)
    base *= mags[:, :, None]
    base += noise * (spec.jitter * mags)[:, :, None]
    logits = base * taus[None, :, None]

    folds = _stratified_folds(labels, spec.n_folds, rng)
    roles = _roles_for_fold0(folds, spec.n_folds)
    records = [
        LogitRecord(
            sample_id=f"s{i:06d}",
            logits=logits[i],
            label=Label(value=int(labels[i]) + 1),
            fold=int(folds[i]),
            split_role=roles[i],
        )
        for i in range(n)
    ]
    meta = ExpertPoolMeta(
        expert_names=tuple(f"expert{j}" for j in range(m)),
        task=TaskKind("classification", k),
    )
    diagnostics = {
        "empirical_accuracy": (logits.argmax(axis=2) == labels[:, None]).mean(axis=0).tolist(),
        "intended_error": err,
        "confidences": confid,
        "labels": labels,
    }
    return records, meta, diagnostics


def _generate_survival_pool(spec: PoolSpec) -> tuple[list[LogitRecord], ExpertPoolMeta, dict]:
    rng = np.random.default_rng(spec.seed)
    n, m, k = spec.n_samples, spec.n_experts, spec.n_classes
    acc = np.asarray(spec.accuracies, dtype=np.float64)
    taus = np.asarray(spec.temperatures_true, dtype=np.float64)

    base_logit = np.log(np.linspace(0.15, 0.35, k) / (1 - np.linspace(0.15, 0.35, k)))
    risk = rng.normal(size=n)
    true_logits = base_logit[None, :] + risk[:, None]  # (N, K)
    true_hazards = 1.0 / (1.0 + np.exp(-true_logits))

    u = rng.random((n, k))
    event_mask = u < true_hazards
    t = np.where(event_mask.any(axis=1), event_mask.argmax(axis=1) + 1, k)
    delta = event_mask.any(axis=1).astype(int)
    censor = rng.random(n) < 0.2
    censor_bin = rng.integers(1, np.maximum(t, 2))
    use_censor = censor & (t > 1)
    t = np.where(use_censor, censor_bin, t)
    delta = np.where(use_censor, 0, delta)

    sigma = 2.0 * (1.0 - acc) * spec.confidence_scale + 1e-12
    shared = rng.random(n) < spec.correlation
    eps_shared = rng.normal(size=(n, 1, k))
    eps_indep = rng.normal(size=(n, m, k))
    eps = np.where(shared[:, None, None], eps_shared, eps_indep) * sigma[None, :, None]
    jit = rng.normal(size=(n, m, k)) * spec.jitter
    logits = (true_logits[:, None, :] + eps + jit) * taus[None, :, None]

    folds = _stratified_folds(delta, spec.n_folds, rng)
    roles = _roles_for_fold0(folds, spec.n_folds)
    records = [
        LogitRecord(
            sample_id=f"s{i:06d}",
            logits=logits[i],
            label=Label(value=int(t[i]), event=int(delta[i])),
            fold=int(folds[i]),
            split_role=roles[i],
        )
        for i in range(n)
    ]
    meta = ExpertPoolMeta(
        expert_names=tuple(f"expert{j}" for j in range(m)),
        task=TaskKind("survival", k),
    )
    diagnostics = {"true_hazards": true_hazards, "event_rate": float(delta.mean())}
    return records, meta, diagnostics


def discretize_times(times: np.ndarray, n_bins: int = 4) -> np.ndarray:
    """Quantile-bin raw event/censoring times into 1..n_bins."""
    times = np.asarray(times, dtype=np.float64)
    edges = np.quantile(times, np.linspace(0, 1, n_bins + 1)[1:-1])
    return np.searchsorted(edges, times, side="right") + 1


def ablation_suite(
    spec: PoolSpec,
    cfg,
    seeds: list[int],
    modes: list[str] | None = None,
    include_experts: bool = True,
) -> dict:
    """Run the fusion-mode ablation over several generator seeds.

    Returns {"per_seed": {method: [metrics per seed]},
             "summary": {method: {metric: {"mean":…, "std":…}}}}.
    """
    from .fusion import FusionMode
    from .pipeline import evaluate_pool

    if modes is None:
        modes = [mode.value for mode in FusionMode]
    per_seed: dict[str, list[dict]] = {}
    for seed in seeds:
        run_spec = PoolSpec(**{**spec.__dict__, "seed": seed})
        records, meta, _ = generate_pool(run_spec)
        results = evaluate_pool(
            records, meta, modes, cfg, include_experts=include_experts, seed=seed
        )
        for method, metrics in results.items():
            per_seed.setdefault(method, []).append(metrics)
    summary = {}
    for method, rows in per_seed.items():
        summary[method] = {
            key: {
                "mean": float(np.mean([r[key] for r in rows])),
                "std": float(np.std([r[key] for r in rows])),
            }
            for key in rows[0]
        }
    return {"per_seed": per_seed, "summary": summary}
