"""Run-report serialization and merged comparison tables.

One JSON document per run, plus flat CSV tables. Every writer goes through
:func:`atomic_write_text`, so readers never see a half-written file.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from collections import defaultdict
from pathlib import Path

import numpy as np

from .engine import SimulationReport
from .metrics import PrrBins, merge_pir, pir_ccdf, pir_tail_quantile

TAIL_PROBS = (1e-3, 1e-4)


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_stem(scheme: str, density: float, seed: int) -> str:
    return f"{scheme}_rho{density:g}_seed{seed}"


def report_to_dict(rep: SimulationReport) -> dict:
    return {
        "scheme": rep.scheme,
        "density": rep.density,
        "seed": rep.seed,
        "config": rep.config,
        "pir_hist": {str(k): v for k, v in sorted(rep.pir_hist.items())},
        "prr_received": rep.prr.received.tolist(),
        "prr_expected": rep.prr.expected.tolist(),
        "event_run_lengths": list(rep.event_run_lengths),
        "total_collisions": rep.total_collisions,
        "mean_itt_s": rep.mean_itt_s,
        "mean_tx_gap_s": rep.mean_tx_gap_s,
        "outcome_counts": rep.outcome_counts,
        "n_transmissions": rep.n_transmissions,
        "n_one_shot": rep.n_one_shot,
        "n_breakouts": rep.n_breakouts,
        "n_vehicles": rep.n_vehicles,
        "extra": rep.extra,
    }


def report_from_dict(d: dict) -> SimulationReport:
    prr = PrrBins(np.asarray(d["prr_received"], dtype=np.int64),
                  np.asarray(d["prr_expected"], dtype=np.int64))
    return SimulationReport(
        scheme=d["scheme"], density=d["density"], seed=d["seed"], config=d["config"],
        pir_hist={int(k): int(v) for k, v in d["pir_hist"].items()},
        prr=prr,
        event_run_lengths=list(d["event_run_lengths"]),
        total_collisions=d["total_collisions"],
        mean_itt_s=d["mean_itt_s"], mean_tx_gap_s=d["mean_tx_gap_s"],
        outcome_counts=d["outcome_counts"],
        n_transmissions=d["n_transmissions"], n_one_shot=d["n_one_shot"],
        n_breakouts=d["n_breakouts"], n_vehicles=d["n_vehicles"],
        extra=d.get("extra", {}),
    )


def save_report(rep: SimulationReport, outdir: str | Path) -> Path:
    path = Path(outdir) / "runs" / f"{run_stem(rep.scheme, rep.density, rep.seed)}.json"
    atomic_write_text(path, json.dumps(report_to_dict(rep), sort_keys=True, indent=1) + "\n")
    return path


def load_report(path: str | Path) -> SimulationReport:
    return report_from_dict(json.loads(Path(path).read_text()))


def load_runs(outdir: str | Path) -> list[SimulationReport]:
    files = sorted((Path(outdir) / "runs").glob("*.json"))
    return [load_report(f) for f in files]


# -- tables -----------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def summary_row(rep: SimulationReport) -> dict:
    persistent = rep.persistent_run_lengths
    row = {
        "scheme": rep.scheme,
        "density": rep.density,
        "seed": rep.seed,
        "n_vehicles": rep.n_vehicles,
        "n_transmissions": rep.n_transmissions,
        "n_one_shot": rep.n_one_shot,
        "n_breakouts": rep.n_breakouts,
        "total_collisions": rep.total_collisions,
        "n_events": len(rep.event_run_lengths),
        "n_persistent_events": len(persistent),
        "mean_collisions_per_event": rep.mean_collisions_per_event,
        "mean_itt_s": rep.mean_itt_s,
        "mean_tx_gap_s": rep.mean_tx_gap_s,
    }
    for p in TAIL_PROBS:
        row[f"pir_q{p:g}_ms"] = pir_tail_quantile(rep.pir_hist, p) if rep.pir_hist else ""
    row.update({k: v for k, v in sorted(rep.outcome_counts.items())})
    return row


def _group(reports):
    groups = defaultdict(list)
    for r in reports:
        groups[(r.scheme, float(r.density))].append(r)
    return dict(sorted(groups.items()))


def tables(reports: list[SimulationReport]) -> dict[str, str]:
    """CSV text for pir/prr/collisions/summary/comparison, pooled by scheme and density."""
    reports = sorted(reports, key=lambda r: (r.scheme, float(r.density), r.seed))
    out: dict[str, str] = {}
    rows = [summary_row(r) for r in reports]
    header = list(rows[0]) if rows else ["scheme", "density", "seed"]
    out["summary.csv"] = _csv(header, [[row.get(h, "") for h in header] for row in rows])
    out["collisions.csv"] = _csv(
        ["scheme", "density", "seed", "event", "run_length"],
        [[r.scheme, r.density, r.seed, i, n] for r in reports for i, n in enumerate(r.event_run_lengths)])

    pir_rows, prr_rows, cmp_rows = [], [], []
    for (scheme, density), grp in _group(reports).items():
        hist = merge_pir(r.pir_hist for r in grp)
        pir_rows += [[scheme, density, g, p] for g, p in pir_ccdf(hist)]
        prr = PrrBins()
        for r in grp:
            prr += r.prr
        for c, p, rec, exp in zip(prr.centers_m, prr.prr, prr.received, prr.expected):
            prr_rows.append([scheme, density, float(c), float(p), int(rec), int(exp)])
        runs = [n for r in grp for n in r.persistent_run_lengths]
        cmp_rows.append([
            scheme, density, len(grp),
            float(np.mean([r.total_collisions for r in grp])),
            float(np.mean(runs)) if runs else float("nan"),
            float(np.mean([r.mean_itt_s for r in grp])),
            *[pir_tail_quantile(hist, p) if hist else "" for p in TAIL_PROBS],
        ])
    out["pir.csv"] = _csv(["scheme", "density", "gap_ms", "ccdf"], pir_rows)
    out["prr.csv"] = _csv(["scheme", "density", "bin_center_m", "prr", "received", "expected"], prr_rows)
    out["comparison.csv"] = _csv(
        ["scheme", "density", "n_runs", "mean_total_collisions", "mean_collisions_per_event",
         "mean_itt_s", *[f"pir_q{p:g}_ms" for p in TAIL_PROBS]], cmp_rows)
    return out


def write_tables(reports: list[SimulationReport], outdir: str | Path) -> list[Path]:
    paths = []
    for name, text in tables(reports).items():
        p = Path(outdir) / name
        atomic_write_text(p, text)
        paths.append(p)
    return paths


def write_fig1(rows: list[dict], path: str | Path) -> None:
    header = ["p_keep", "mean_breakout_s", "q99", "q999"]
    atomic_write_text(path, _csv(header, [[r[h] for h in header] for r in rows]))

