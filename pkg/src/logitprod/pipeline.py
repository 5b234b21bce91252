"""End-to-end orchestration: stratified cross-validation folds, per-fold
calibration subsets, temperature fitting, gate training, fusion, and metric
aggregation. All randomness flows from the run seed, so identical configs
give bit-identical reports."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .calibration import (
    CalibrationState,
    apply_temperatures_batch,
    fit_temperatures,
)
from .core import (
    ExpertPoolMeta,
    LogitRecord,
    clamp_probs,
    labels_array,
    read_jsonl,
    softmax,
    stacked_logits,
    validate_dataset,
)
from .fusion import FusionMode, fuse_record, write_predictions_jsonl
from .gate import GateParameters, TrainConfig, save_gates, train_gate
from .metrics import PerfSummary, accuracy, c_index, f1, macro_auc
from .survival import fuse_survival, logits_to_hazards, risk_score, survival_nll

CALIBRATION_FRACTION = 0.1


def _with_role(rec: LogitRecord, role: str) -> LogitRecord:
    return dataclasses.replace(rec, split_role=role)


def _strata(records: list[LogitRecord], meta: ExpertPoolMeta) -> np.ndarray:
    if meta.task.is_survival:
        return np.array([r.label.event for r in records])
    return labels_array(records)


def split_calibration(
    train: list[LogitRecord], meta: ExpertPoolMeta, seed: int,
    fraction: float = CALIBRATION_FRACTION,
) -> tuple[list[LogitRecord], list[LogitRecord]]:
    """Carve a stratified calibration subset out of the training records.

    Deterministic given the seed; at least one record per stratum.
    """
    strata = _strata(train, meta)
    rng = np.random.default_rng(seed)
    calib_idx: list[int] = []
    for value in np.unique(strata):
        idx = np.flatnonzero(strata == value)
        idx = idx[rng.permutation(len(idx))]
        take = max(1, int(round(fraction * len(idx))))
        calib_idx.extend(idx[:take].tolist())
    calib_set = set(calib_idx)
    calib = [_with_role(train[i], "calibration") for i in sorted(calib_set)]
    rest = [train[i] for i in range(len(train)) if i not in calib_set]
    return calib, rest


def assign_fold_roles(
    records: list[LogitRecord], test_fold: int, fold_values: list[int]
) -> list[LogitRecord]:
    """Role assignment for one cross-validation rotation: the test fold, the
    next fold as validation, the remainder as train."""
    if len(fold_values) < 3:
        raise ValueError("cross-validation needs at least 3 folds")
    pos = fold_values.index(test_fold)
    val_fold = fold_values[(pos + 1) % len(fold_values)]
    out = []
    for rec in records:
        if rec.fold == test_fold:
            out.append(_with_role(rec, "test"))
        elif rec.fold == val_fold:
            out.append(_with_role(rec, "validation"))
        else:
            out.append(_with_role(rec, "train"))
    return out


def _classification_metrics(probs: np.ndarray, y: np.ndarray) -> dict:
    preds = probs.argmax(axis=1)
    summary = PerfSummary(
        auc=macro_auc(probs, y), acc=accuracy(preds, y), f1=f1(preds, y)
    )
    return {
        "auc": summary.auc,
        "acc": summary.acc,
        "f1": summary.f1,
        "perf": summary.perf,
    }


def _survival_metrics(hazards: np.ndarray, records: list[LogitRecord]) -> dict:
    risks = [risk_score(h) for h in hazards]
    labels = [(r.label.value, r.label.event) for r in records]
    nll = float(
        np.mean([survival_nll(h, r.label) for h, r in zip(hazards, records)])
    )
    return {"c_index": c_index(risks, labels), "nll": nll}


def evaluate_mode(
    test: list[LogitRecord],
    meta: ExpertPoolMeta,
    calib: CalibrationState,
    mode: str,
    gates: list[GateParameters] | None,
) -> tuple[dict, list]:
    """Metrics plus per-sample predictions for one fusion mode on a test set."""
    if meta.task.is_survival:
        if mode in ("logitprod", "learnable_product"):
            fused = np.stack([fuse_survival(r, calib, gates, mode) for r in test])
        elif mode in ("mean", "learnable_sum", "uniform_product"):
            hz = logits_to_hazards(
                apply_temperatures_batch(stacked_logits(test), calib)
            )
            if mode == "uniform_product":
                # per-bin uniform geometric mean of (h, 1-h), renormalized
                m = hz.shape[1]
                log_e = np.log(hz).mean(axis=1)
                log_s = np.log(1 - hz).mean(axis=1)
                top = np.maximum(log_e, log_s)
                fused = np.exp(log_e - top) / (
                    np.exp(log_e - top) + np.exp(log_s - top)
                )
            else:
                fused = hz.mean(axis=1)
        else:
            raise ValueError(f"mode {mode!r} is undefined for survival tasks")
        preds = [
            (r.sample_id, mode, {"hazards": h.tolist(), "risk": risk_score(h)})
            for r, h in zip(test, fused)
        ]
        return _survival_metrics(fused, test), preds

    fused = [fuse_record(r, calib, mode, gates) for r in test]
    probs = np.stack([fp.distribution for fp in fused])
    y = labels_array(test)
    preds = [(r.sample_id, mode, fp) for r, fp in zip(test, fused)]
    return _classification_metrics(probs, y), preds


def evaluate_single_experts(
    test: list[LogitRecord], meta: ExpertPoolMeta, calib: CalibrationState
) -> dict[str, dict]:
    z = apply_temperatures_batch(stacked_logits(test), calib)
    out = {}
    for j, name in enumerate(meta.expert_names):
        if meta.task.is_survival:
            out[f"expert:{name}"] = _survival_metrics(logits_to_hazards(z[:, j]), test)
        else:
            probs = clamp_probs(softmax(z[:, j]))
            out[f"expert:{name}"] = _classification_metrics(probs, labels_array(test))
    return out


def run_fold(
    records: list[LogitRecord],
    meta: ExpertPoolMeta,
    test_fold: int,
    fold_values: list[int],
    mode: str,
    cfg: TrainConfig,
    seed: int,
    calib_fraction: float = CALIBRATION_FRACTION,
) -> dict:
    """Calibrate, train (if the mode is learnable), and evaluate one fold."""
    tagged = assign_fold_roles(records, test_fold, fold_values)
    train = [r for r in tagged if r.split_role == "train"]
    val = [r for r in tagged if r.split_role == "validation"]
    test = [r for r in tagged if r.split_role == "test"]
    calib_records, train = split_calibration(train, meta, seed, calib_fraction)

    test_ids = {r.sample_id for r in test}
    leaked = test_ids & {r.sample_id for r in train + calib_records + val}
    assert not leaked, f"test records leaked into training: {sorted(leaked)[:5]}"

    calib = fit_temperatures(calib_records, meta.task)
    gates, trace = None, None
    if FusionMode(mode).is_learnable:
        fold_cfg = dataclasses.replace(cfg, seed=seed)
        gates, trace = train_gate(train + val, meta, calib, fold_cfg, mode)
    metrics, preds = evaluate_mode(test, meta, calib, mode, gates)
    return {
        "fold": test_fold,
        "metrics": metrics,
        "calibration": calib,
        "gates": gates,
        "trace": trace,
        "predictions": preds,
        "n_train": len(train),
        "n_calibration": len(calib_records),
        "n_validation": len(val),
        "n_test": len(test),
    }


def evaluate_pool(
    records: list[LogitRecord],
    meta: ExpertPoolMeta,
    modes: list[str],
    cfg: TrainConfig,
    include_experts: bool = True,
    seed: int = 0,
    calib_fraction: float = CALIBRATION_FRACTION,
) -> dict[str, dict]:
    """Mean cross-fold metrics per method (fusion modes + single experts)."""
    fold_values = sorted({r.fold for r in records})
    collected: dict[str, list[dict]] = {}
    for test_fold in fold_values:
        tagged = assign_fold_roles(records, test_fold, fold_values)
        train = [r for r in tagged if r.split_role == "train"]
        val = [r for r in tagged if r.split_role == "validation"]
        test = [r for r in tagged if r.split_role == "test"]
        calib_records, train = split_calibration(train, meta, seed, calib_fraction)
        calib = fit_temperatures(calib_records, meta.task)
        trained: dict[str, list[GateParameters]] = {}
        for mode in modes:
            if meta.task.is_survival and mode == "majority_vote":
                continue
            gates = None
            if FusionMode(mode).is_learnable:
                fold_cfg = dataclasses.replace(cfg, seed=seed)
                gates, _ = train_gate(train + val, meta, calib, fold_cfg, mode)
                trained[mode] = gates
            metrics, _ = evaluate_mode(test, meta, calib, mode, gates)
            collected.setdefault(mode, []).append(metrics)
        if include_experts:
            for name, metrics in evaluate_single_experts(test, meta, calib).items():
                collected.setdefault(name, []).append(metrics)
    return {
        method: {
            key: float(np.mean([r[key] for r in rows])) for key in rows[0]
        }
        for method, rows in collected.items()
    }


def load_config(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def run_pipeline(config: dict, out_dir: str | Path) -> dict:
    """Full cross-validated run; writes per-fold artifacts and a summary.

    Config sections: data (path), fusion_mode, seed, calibration.fraction,
    gate (TrainConfig overrides).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, meta = read_jsonl(config["data"])
    report = validate_dataset(records, meta)
    if not report.passed:
        raise ValueError(
            f"dataset failed validation with {len(report.violations)} violations"
        )
    mode = config.get("fusion_mode", "logitprod")
    seed = int(config.get("seed", 0))
    calib_fraction = float(config.get("calibration", {}).get("fraction", CALIBRATION_FRACTION))
    cfg = TrainConfig(**{**config.get("gate", {}), "seed": seed})
    fold_values = sorted({r.fold for r in records})
    if len(fold_values) < 3:
        raise ValueError("pipeline needs at least 3 distinct folds in the data")

    per_fold = []
    traces = []
    for test_fold in fold_values:
        result = run_fold(
            records, meta, test_fold, fold_values, mode, cfg,
            seed=seed + test_fold, calib_fraction=calib_fraction,
        )
        fold_dir = out / f"fold_{test_fold}"
        fold_dir.mkdir(exist_ok=True)
        result["calibration"].save(fold_dir / "calibration.json")
        if result["gates"] is not None:
            save_gates(result["gates"], fold_dir / "gate.json")
        if result["trace"] is not None:
            result["trace"].save_csv(fold_dir / "trace.csv")
            traces.append((test_fold, result["trace"]))
        if meta.task.is_survival:
            (fold_dir / "predictions.jsonl").write_text(
                "\n".join(
                    json.dumps({"id": sid, "mode": md, **payload})
                    for sid, md, payload in result["predictions"]
                )
                + "\n"
            )
        else:
            write_predictions_jsonl(fold_dir / "predictions.jsonl", result["predictions"])
        (fold_dir / "metrics.json").write_text(
            json.dumps(result["metrics"], indent=2, sort_keys=True)
        )
        per_fold.append({"fold": test_fold, "metrics": result["metrics"]})

    metric_keys = per_fold[0]["metrics"].keys()
    summary = {
        "mode": mode,
        "seed": seed,
        "n_folds": len(fold_values),
        "folds": per_fold,
        "aggregate": {
            key: {
                "mean": float(np.mean([f["metrics"][key] for f in per_fold])),
                "std": float(np.std([f["metrics"][key] for f in per_fold])),
            }
            for key in metric_keys
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))

    from . import report as report_mod

    report_mod.save_fold_metrics_figure(per_fold, out / "fold_metrics.png")
    if traces:
        report_mod.save_training_curves([tr for _, tr in traces], out / "training_curves.png")
    return summary
