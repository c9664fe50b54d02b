"""Byte-stable result files: per-run CSV/JSON lines, run-set summaries, comparisons."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .metrics import mean_evaluation_cost, run_means
from .stats import compare_groups, confidence_interval_95

CSV_COLUMNS = ("iteration", "epoch", "occupancy", "survival", "mse_obj", "mse_bc1", "mse_bc2",
               "mse_qd", "evals_search", "evals_oracle")
SUMMARY_METRICS = ("survival", "mse_obj", "mse_bc1", "mse_bc2", "mse_qd",
                   "mec_50", "success_50", "mec_75", "success_75")


class ExportError(OSError):
    pass


def fmt(x) -> str:
    """Six significant digits; empty string for missing values."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.6g" % float(x)


def r6(x):
    """Round floats (recursively) to six significant digits for JSON output."""
    if x is None or isinstance(x, (bool, str)):
        return x
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return float("%.6g" % x) if math.isfinite(x) else None
    if isinstance(x, dict):
        return {str(k): r6(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [r6(v) for v in x]
    return x


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_metrics_csv(path) -> list[dict]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from None
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError(f"{path}: no metric rows")
    missing = set(CSV_COLUMNS) - set(rows[0])
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    out = []
    for r in rows:
        d = {}
        for c in CSV_COLUMNS:
            v = r[c]
            if c in ("iteration", "epoch", "occupancy", "evals_search", "evals_oracle"):
                d[c] = int(v)
            else:
                d[c] = float(v) if v != "" else None
        out.append(d)
    return out


def jsonl(items) -> str:
    return "".join(dumps(r6(i)) + "\n" for i in items)


def _mec_dict(rec) -> dict:
    out = {}
    for th, m in sorted(rec.mec.items()):
        out[f"{th:g}"] = {"threshold": th, "mec": m.mec, "success_ratio": m.success_ratio,
                          "intervals": m.intervals, "successes": m.successes}
    return out


def run_summary(rec) -> dict:
    """Per-run averages plus MEC at both thresholds."""
    means = run_means(rec.rows) if rec.rows else {}
    d = {"seed": rec.seed, **means}
    for th, key in ((0.5, "50"), (0.75, "75")):
        m = rec.mec.get(th)
        d[f"mec_{key}"] = m.mec if m else None
        d[f"success_{key}"] = m.success_ratio if m else None
    return d


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from None


def write_run(rec, run_dir) -> Path:
    """All per-run artefacts into ``run_dir``; wall-clock goes to its own file."""
    run_dir = Path(run_dir)
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ExportError(f"cannot create {run_dir}: {exc}") from None
    _write(run_dir / "metrics.csv", metrics_csv(rec.rows))
    _write(run_dir / "shifts.jsonl", jsonl(rec.shift_log))
    _write(run_dir / "dynamics.jsonl", jsonl(rec.dynamics_log))
    _write(run_dir / "emitter_events.jsonl", jsonl(rec.emitter_log))
    _write(run_dir / "mec.json", dumps(r6({"seed": rec.seed, "config_hash": rec.config_hash,
                                               "thresholds": _mec_dict(rec)})) + "\n")
    if rec.archive is not None:
        _write(run_dir / "archive.json", dumps(rec.archive.to_dict()) + "\n")
    _write(run_dir / "timings.json", dumps({"wall_clock_s": rec.wall_clock}) + "\n")
    return run_dir


def summarize(records: Sequence, name: Optional[str] = None) -> dict:
    """Run-set summary: per-seed values and mean +- 95% CI per metric."""
    if not records:
        raise ValueError("no run records to summarise")
    hashes = {r.config_hash for r in records}
    if len(hashes) != 1:
        raise ValueError(f"records mix configurations: {sorted(hashes)}")
    cfg = records[0].config
    runs = [run_summary(r) for r in sorted(records, key=lambda r: r.seed)]
    table = {}
    for m in SUMMARY_METRICS:
        vals = [r[m] for r in runs if r.get(m) is not None]
        if not vals:
            table[m] = {"mean": None, "ci95": None, "n": 0}
        elif len(vals) == 1:
            table[m] = {"mean": vals[0], "ci95": None, "n": 1}
        else:
            mean, hw = confidence_interval_95(vals)
            table[m] = {"mean": mean, "ci95": hw, "n": len(vals)}
    return r6({
        "name": name or cfg.name,
        "config_hash": cfg.config_hash(),
        "environment": cfg.environment,
        "algorithm": cfg.algorithm,
        "sampling": cfg.sampling,
        "strategy": cfg.tag,
        "seeds": [r["seed"] for r in runs],
        "runs": runs,
        "table": table,
    })


def write_run_set(records: Sequence, out_dir, name: Optional[str] = None) -> Path:
    """Write every run plus ``summary.json`` under ``out_dir/<name>``."""
    if not records:
        raise ValueError("no run records to export")
    summary = summarize(records, name)
    base = Path(out_dir) / summary["name"]
    for rec in records:
        write_run(rec, base / f"seed_{rec.seed}")
    try:
        base.mkdir(parents=True, exist_ok=True)
        (base / "config.json").write_text(dumps(records[0].config.to_dict()) + "\n")
    except OSError as exc:
        raise ExportError(f"cannot write into {base}: {exc}") from None
    _write(base / "summary.json", dumps(summary) + "\n")
    return base


def load_summary(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path} is not valid JSON: {exc}") from None
    if "runs" not in data or "name" not in data:
        raise ValueError(f"{path} is not a run-set summary")
    return data


def comparison_matrix(summaries: Sequence[dict], metric: str) -> dict:
    """Pairwise Welch tests with Bonferroni correction over all pairs."""
    if metric not in SUMMARY_METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {', '.join(SUMMARY_METRICS)}")
    if len(summaries) < 2:
        raise ValueError("need at least two summaries to compare")
    groups = {}
    for s in summaries:
        label = s["name"]
        if label in groups:
            label = f"{label}#{len(groups)}"
        vals = [r[metric] for r in s["runs"] if r.get(metric) is not None]
        if len(vals) < 2:
            raise ValueError(f"{label}: need >= 2 runs with {metric} to compare")
        groups[label] = vals
    results = compare_groups(metric, groups)
    names = list(groups)
    return r6({
        "metric": metric,
        "groups": names,
        "means": {n: float(np.mean(v)) for n, v in groups.items()},
        "comparisons": len(results),
        "pairs": [{"a": c.group_a, "b": c.group_b, "mean_a": c.mean_a, "mean_b": c.mean_b,
                   "t": c.t, "dof": c.dof, "p": c.p_raw, "p_corrected": c.p_corrected,
                   "significant": c.significant} for c in results],
    })


def format_matrix(cmp: dict) -> str:
    """Text matrix of corrected p-values, '*' marking significance."""
    names = cmp["groups"]
    cell = {}
    for p in cmp["pairs"]:
        txt = fmt(p["p_corrected"]) + ("*" if p["significant"] else "")
        cell[(p["a"], p["b"])] = cell[(p["b"], p["a"])] = txt
    width = max(12, *(len(n) for n in names)) + 2
    lines = [f"metric: {cmp['metric']} (Bonferroni over {cmp['comparisons']} pairs, * = p < 0.05)",
             "".ljust(width) + "".join(n.ljust(width) for n in names)]
    for a in names:
        row = a.ljust(width)
        for b in names:
            row += ("-" if a == b else cell.get((a, b), "")).ljust(width)
        lines.append(row.rstrip())
    lines.append("means: " + ", ".join(f"{n}={fmt(cmp['means'][n])}" for n in names))
    return "\n".join(lines) + "\n"


def mec_from_csv(path, threshold: float, shift_period: int = 10, cost_mode: str = "interval") -> dict:
    rows = read_metrics_csv(path)
    end = max(r["iteration"] for r in rows) + 1
    shifts = list(range(shift_period, end, shift_period))
    m = mean_evaluation_cost(rows, shifts, threshold, cost_mode)
    return r6({"threshold": threshold, "mec": m.mec, "success_ratio": m.success_ratio,
               "intervals": m.intervals, "successes": m.successes, "cost_mode": cost_mode})
