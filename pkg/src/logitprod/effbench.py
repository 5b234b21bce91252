"""Efficiency benchmark table: read method cost/performance rows from CSV,
score each against a reference method, and emit the Cost/EffScore table.

A fixture with published fusion-strategy profiles ships with the package;
running the bench on it reproduces the published EffScore column.
"""

from __future__ import annotations

import csv
from importlib.resources import files
from pathlib import Path

from .metrics import CostProfile, eff_score

FIXTURE_PATH = files("logitprod").joinpath("data/published_costs.csv")


def load_cost_rows(path: str | Path | None = None) -> list[dict]:
    """Rows need method, flops_g, params_m, time_h and either a perf column
    or the auc/acc/f1 triple."""
    source = Path(path) if path is not None else FIXTURE_PATH
    rows = []
    with source.open() as fh:
        for raw in csv.DictReader(fh):
            row = {"method": raw["method"].strip()}
            row["profile"] = CostProfile(
                flops_g=float(raw["flops_g"]),
                params_m=float(raw["params_m"]),
                time_h=float(raw["time_h"]),
            )
            if raw.get("perf") not in (None, ""):
                row["perf"] = float(raw["perf"])
            else:
                row["perf"] = (
                    float(raw["auc"]) + float(raw["acc"]) + float(raw["f1"])
                ) / 3.0
            if raw.get("reported_effscore") not in (None, ""):
                row["reported_effscore"] = float(raw["reported_effscore"])
            rows.append(row)
    if not rows:
        raise ValueError("no benchmark rows")
    return rows


def effscore_table(rows: list[dict], reference: str | None = None) -> list[dict]:
    """Score every row against the reference (method "Ours" by default, else
    the last row)."""
    names = [r["method"] for r in rows]
    if reference is None:
        reference = "Ours" if "Ours" in names else names[-1]
    ref = next(r for r in rows if r["method"] == reference)
    out = []
    for row in rows:
        cost, eff = eff_score(
            (row["profile"], row["perf"]), (ref["profile"], ref["perf"])
        )
        entry = {
            "method": row["method"],
            "flops_g": row["profile"].flops_g,
            "params_m": row["profile"].params_m,
            "time_h": row["profile"].time_h,
            "perf": row["perf"],
            "cost": cost,
            "eff_score": eff,
        }
        if "reported_effscore" in row:
            entry["reported_effscore"] = row["reported_effscore"]
        out.append(entry)
    return out


def write_effscore_csv(table: list[dict], path: str | Path):
    fieldnames = list(table[0].keys())
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in table:
            writer.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in row.items()})
