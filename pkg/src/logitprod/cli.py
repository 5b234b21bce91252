"""Command-line entry points: simulate, validate, calibrate, train, eval,
verify, bench-effscore, pipeline.

Exit codes: 0 success, 1 validation failure, 2 runtime error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np


def _fail(exc: Exception) -> "NoReturn":  # noqa: F821
    click.echo(f"error: {exc}", err=True)
    sys.exit(2)


@click.group()
def main():
    """Sample-adaptive logit-level product-of-experts fusion."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), help="PoolSpec JSON")
@click.option("--out", "out_path", type=click.Path(), required=True, help="output JSONL")
@click.option("--seed", type=int, default=None, help="override the spec seed")
def simulate(config_path, out_path, seed):
    """Generate a synthetic expert pool in the JSONL exchange format."""
    from .core import write_jsonl
    from .simulator import PoolSpec, generate_pool

    try:
        if config_path:
            spec = PoolSpec.load(config_path)
        else:
            spec = PoolSpec(
                n_experts=5,
                n_classes=4,
                n_samples=2000,
                accuracies=[0.60, 0.68, 0.75, 0.82, 0.90],
                temperatures_true=[0.5, 1.0, 1.0, 2.0, 3.0],
                correlation=0.3,
            )
        if seed is not None:
            spec.seed = seed
        records, meta, diagnostics = generate_pool(spec)
        write_jsonl(out_path, records, meta)
        click.echo(
            f"wrote {len(records)} records to {out_path} "
            f"(empirical accuracies: "
            f"{[round(a, 3) for a in diagnostics['empirical_accuracy']]})"
        )
    except Exception as exc:  # pragma: no cover - error path
        _fail(exc)


@main.command()
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
def validate(data_path):
    """Check a JSONL dataset against the pool invariants."""
    from .core import read_jsonl, validate_dataset

    try:
        records, meta = read_jsonl(data_path)
        report = validate_dataset(records, meta)
    except Exception as exc:
        _fail(exc)
    if report.passed:
        click.echo(f"OK: {len(records)} records, 0 violations")
        sys.exit(0)
    for sample_id, message in report.violations[:50]:
        click.echo(f"{sample_id}: {message}")
    click.echo(f"FAIL: {len(report.violations)} violations")
    sys.exit(1)


@main.command()
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0)
@click.option("--cue-csv", type=click.Path(), default=None, help="optional cue dump")
def calibrate(data_path, out_dir, seed, cue_csv):
    """Fit per-expert temperatures on the calibration split (carved from the
    train role when no calibration-role records exist)."""
    from .calibration import fit_temperatures
    from .core import read_jsonl
    from .cues import write_cue_csv
    from .pipeline import split_calibration

    try:
        records, meta = read_jsonl(data_path)
        calib_records = [r for r in records if r.split_role == "calibration"]
        if not calib_records:
            train = [r for r in records if r.split_role == "train"]
            calib_records, _ = split_calibration(train, meta, seed)
        state = fit_temperatures(calib_records, meta.task)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        state.save(out / "calibration.json")
        click.echo(
            "temperatures: " + ", ".join(f"{t:.4f}" for t in state.temperatures)
        )
        if cue_csv:
            write_cue_csv(records, state, cue_csv)
    except Exception as exc:
        _fail(exc)


@main.command()
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--mode", default="logitprod")
@click.option("--seed", type=int, default=0)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="TrainConfig overrides (JSON)")
def train(data_path, out_dir, mode, seed, config_path):
    """Calibrate then train the gating network on train/validation roles."""
    from .calibration import fit_temperatures
    from .core import read_jsonl
    from .gate import TrainConfig, save_gates, train_gate
    from .pipeline import split_calibration

    try:
        records, meta = read_jsonl(data_path)
        overrides = json.loads(Path(config_path).read_text()) if config_path else {}
        cfg = TrainConfig(**{**overrides, "seed": seed})
        train_records = [r for r in records if r.split_role == "train"]
        calib_records = [r for r in records if r.split_role == "calibration"]
        if not calib_records:
            calib_records, train_records = split_calibration(train_records, meta, seed)
        state = fit_temperatures(calib_records, meta.task)
        val = [r for r in records if r.split_role == "validation"]
        gates, trace = train_gate(train_records + val, meta, state, cfg, mode)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        state.save(out / "calibration.json")
        save_gates(gates, out / "gate.json")
        trace.save_csv(out / "trace.csv")
        click.echo(
            f"trained {mode}: best epoch {trace.best_epoch}, "
            f"best val loss {min(trace.val_loss):.6f}"
        )
    except Exception as exc:
        _fail(exc)


@main.command("eval")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(exists=True), required=True,
              help="directory holding calibration.json (and gate.json)")
@click.option("--mode", default="logitprod")
def eval_cmd(data_path, out_dir, mode):
    """Evaluate a fusion mode on the test-role records."""
    from .calibration import CalibrationState
    from .core import read_jsonl
    from .fusion import FusionMode
    from .gate import load_gates
    from .pipeline import evaluate_mode

    try:
        records, meta = read_jsonl(data_path)
        test = [r for r in records if r.split_role == "test"]
        out = Path(out_dir)
        state = CalibrationState.load(out / "calibration.json")
        gates = None
        if FusionMode(mode).is_learnable:
            gates = load_gates(out / "gate.json")
        metrics, _ = evaluate_mode(test, meta, state, mode, gates)
        (out / "eval_metrics.json").write_text(
            json.dumps(metrics, indent=2, sort_keys=True)
        )
        click.echo(json.dumps(metrics, indent=2, sort_keys=True))
    except Exception as exc:
        _fail(exc)


@main.command()
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0)
def verify(out_dir, seed):
    """Numerically certify the normalizer bound, the cross-entropy
    decomposition, and the simplex-search guarantees."""
    from .verify import run_certificate, write_certificate

    try:
        cert = run_certificate(seed=seed)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_certificate(cert, out / "certificate.json")
    except Exception as exc:
        _fail(exc)
    status = "PASS" if cert["passed"] else "FAIL"
    click.echo(
        f"{status}: worst Z = {cert['normalizer_bound']['worst_z']:.12f}, "
        f"worst residual = {cert['normalizer_bound']['worst_residual']:.3e}, "
        f"weighting {cert['optimal_weighting']['holds']}/{cert['optimal_weighting']['instances']} "
        f"({cert['optimal_weighting']['strict_improvements']} strict), "
        f"binwise {cert['binwise_selection']['holds']}/{cert['binwise_selection']['instances']}"
    )
    sys.exit(0 if cert["passed"] else 1)


@main.command("bench-effscore")
@click.option("--data", "data_path", type=click.Path(exists=True), default=None,
              help="cost CSV; defaults to the shipped fixture")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--reference", default=None, help="reference method name")
def bench_effscore(data_path, out_dir, reference):
    """Compute the Cost/EffScore table (CSV + bar figure)."""
    from .effbench import effscore_table, load_cost_rows, write_effscore_csv
    from .report import save_effscore_figure

    try:
        rows = load_cost_rows(data_path)
        table = effscore_table(rows, reference)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_effscore_csv(table, out / "effscore.csv")
        save_effscore_figure(table, out / "effscore.png")
    except Exception as exc:
        _fail(exc)
    header = f"{'method':<16} {'cost':>8} {'effscore':>9}"
    click.echo(header)
    for row in table:
        click.echo(f"{row['method']:<16} {row['cost']:>8.3f} {row['eff_score']:>9.3f}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--mode", default=None, help="override the config fusion mode")
@click.option("--seed", type=int, default=None, help="override the config seed")
def pipeline(config_path, out_dir, mode, seed):
    """Full cross-validated run: calibrate, train, fuse, evaluate, report."""
    from .pipeline import load_config, run_pipeline

    try:
        config = load_config(config_path)
        if mode is not None:
            config["fusion_mode"] = mode
        if seed is not None:
            config["seed"] = seed
        summary = run_pipeline(config, out_dir)
    except ValueError as exc:
        click.echo(f"validation error: {exc}", err=True)
        sys.exit(1)
    except Exception as exc:
        _fail(exc)
    click.echo(f"mode: {summary['mode']}  folds: {summary['n_folds']}")
    for key, stats in sorted(summary["aggregate"].items()):
        click.echo(f"  {key:<10} {stats['mean']:.4f} +/- {stats['std']:.4f}")


if __name__ == "__main__":
    main()
