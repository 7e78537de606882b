"""Serialized attack reports: a delimited table and a JSON document.

Both formats carry a schema version. Runtimes live in a separate timing file
so reruns with the same seed produce byte-identical reports.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .harness import ATTACKS

SCHEMA_VERSION = 1
CSV_MAGIC = f"# redactbench report schema {SCHEMA_VERSION}"
CSV_COLUMNS = ("method", "setting", "tm", "attack", "metric", "value", "std", "seed")


class ReportSchemaError(ValueError):
    pass


def _fmt(x):
    return "" if x is None else f"{x:.6f}"


def report_rows(reports) -> list[dict]:
    rows = []
    for rep in reports:
        for metric, value, std in rep.metrics():
            rows.append(
                {
                    "method": rep.method,
                    "setting": rep.setting,
                    "tm": rep.tm,
                    "attack": rep.attack,
                    "metric": metric,
                    "value": _fmt(value),
                    "std": _fmt(std),
                    "seed": str(rep.seed),
                }
            )
    return rows


def to_csv(reports) -> str:
    buf = io.StringIO()
    buf.write(CSV_MAGIC + "\n")
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(report_rows(reports))
    return buf.getvalue()


def to_json(reports) -> str:
    cells = []
    for rep in reports:
        cell = {
            "method": rep.method,
            "setting": rep.setting,
            "tm": rep.tm,
            "attack": rep.attack,
            "seed": rep.seed,
            "metrics": {m: (None if v is None else round(v, 6)) for m, v, _ in rep.metrics() if m != "error"},
        }
        if rep.attack == "verification" and rep.ok:
            cell["metrics"]["auc_std"] = round(rep.auc_std, 6)
        if rep.error:
            cell["error"] = rep.error
        cells.append(cell)
    return json.dumps({"schema_version": SCHEMA_VERSION, "cells": cells}, indent=2, sort_keys=True) + "\n"


def write_reports(reports, outdir) -> dict:
    """Write report.csv, report.json and timing.csv under ``outdir``; returns the paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "report.csv", "json": out / "report.json", "timing": out / "timing.csv"}
    paths["csv"].write_text(to_csv(reports))
    paths["json"].write_text(to_json(reports))
    with open(paths["timing"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "setting", "tm", "attack", "seconds", "error"])
        for rep in reports:
            w.writerow([rep.method, rep.setting, rep.tm, rep.attack, f"{rep.runtime:.3f}", rep.error or ""])
    return paths


def read_rows(path) -> list[dict]:
    """Rows of a CSV or JSON report, as dicts with the CSV columns."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        doc = json.loads(text)
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ReportSchemaError(f"{path}: schema version {version!r}, expected {SCHEMA_VERSION}")
        rows = []
        for cell in doc["cells"]:
            metrics = dict(cell["metrics"])
            std = metrics.pop("auc_std", None)
            if cell.get("error"):
                metrics = {"error": None}
            for m, v in metrics.items():
                rows.append(
                    {
                        "method": cell["method"], "setting": cell["setting"], "tm": cell["tm"],
                        "attack": cell["attack"], "metric": m, "value": _fmt(v),
                        "std": _fmt(std) if m == "auc" else "", "seed": str(cell["seed"]),
                    }
                )
        return rows
    first, _, rest = text.partition("\n")
    if first.strip() != CSV_MAGIC:
        raise ReportSchemaError(f"{path}: missing or unsupported schema line {first.strip()!r}")
    reader = csv.DictReader(io.StringIO(rest))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ReportSchemaError(f"{path}: unexpected columns {reader.fieldnames}")
    return list(reader)


def render_table(rows) -> str:
    """Aligned text table grouped by method, setting and threat model."""
    headers = ["method", "setting", "tm", "attack", "metric", "value", "std"]
    order = {"T1": 0, "T2": 1, "T3": 2}

    def key(r):
        s = r["setting"]
        return (r["method"], int(s) if s.isdigit() else -1, order.get(r["tm"], 9), ATTACKS.index(r["attack"]) if r["attack"] in ATTACKS else 9)

    body = [[r[h] if h != "std" or r["metric"] == "auc" else "" for h in headers] for r in sorted(rows, key=key)]
    widths = [max([len(h)] + [len(row[i]) for row in body]) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    if body:
        lines.append("  ".join("-" * w for w in widths))
    prev = None
    for row in body:
        group = tuple(row[:2])
        shown = list(row)
        if group == prev:
            shown[0] = shown[1] = ""
        prev = group
        lines.append("  ".join(c.ljust(w) for c, w in zip(shown, widths)).rstrip())
    return "\n".join(lines) + "\n"
