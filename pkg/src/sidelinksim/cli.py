"""Command-line runner: single runs, sweeps, analytic tables and report merging."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analytic, report
from .config import SimConfig, load_config, to_dict
from .engine import Simulator
from .errors import ConfigError, SimulationError
from .oneshot import Scheme

WORKERS_ENV = "SIDELINKSIM_WORKERS"


class UsageError(Exception):
    pass


@dataclass
class Campaign:
    schemes: list[str]
    densities: list[float]
    seeds: list[int]
    base: SimConfig = field(default_factory=SimConfig)
    outdir: Path = Path("results")

    def validate(self) -> None:
        if not (self.schemes and self.densities and self.seeds):
            raise ConfigError("campaign needs at least one scheme, density and seed")
        for s in self.schemes:
            try:
                Scheme(s)
            except ValueError:
                raise ConfigError(f"unknown scheme {s!r}") from None

    def configs(self) -> list[SimConfig]:
        out = []
        for rho in self.densities:
            for scheme in self.schemes:
                for seed in self.seeds:
                    out.append(self.base.with_overrides(
                        {"scheme": scheme, "seed": seed, "scenario": {"density_rho": rho}}))
        return out


def parse_seeds(text: str) -> list[int]:
    """``"1..20"``, ``"1,4,9"`` or a mix such as ``"1..3,10"``; ranges are inclusive."""
    seeds: list[int] = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        try:
            if ".." in part:
                lo, hi = (int(x) for x in part.split("..", 1))
                if hi < lo:
                    raise UsageError(f"empty seed range {part!r}")
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise UsageError(f"bad seed spec {part!r}") from None
    if not seeds:
        raise UsageError("no seeds given")
    return seeds


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad number list {text!r}") from None


def _set_path(d: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


def overrides_from_args(args) -> dict:
    """Flag values that were actually given, as a nested override dict."""
    ov: dict = {}
    for attr, key in (("scheme", "scheme"), ("seed", "seed"), ("duration", "duration_s"),
                      ("warmup", "warmup_s"), ("p_keep", "p_keep"),
                      ("density", "scenario.density_rho"), ("road_length", "scenario.road_length")):
        val = getattr(args, attr, None)
        if val is not None:
            _set_path(ov, key, val)
    if getattr(args, "no_congestion", False):
        ov["congestion_enabled"] = False
    if getattr(args, "no_rssi_detection", False):
        ov["rssi_detection"] = False
    if getattr(args, "static", False):
        ov["moving"] = False
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _set_path(ov, key.strip(), value)
    return ov


def _run_one(cfg_dict: dict, outdir: str, resume: bool) -> str:
    from .config import from_dict

    cfg = from_dict(cfg_dict)
    path = Path(outdir) / "runs" / f"{report.run_stem(cfg.scheme.value, cfg.scenario.density_rho, cfg.seed)}.json"
    if resume and path.exists():
        try:
            if report.load_report(path).config == to_dict(cfg):
                return str(path)
        except (ValueError, KeyError):
            pass
    rep = Simulator(cfg).run()
    return str(report.save_report(rep, outdir))


def worker_count(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{WORKERS_ENV} must be an integer") from None
    return 1


def run_campaign(camp: Campaign, workers: int = 1, resume: bool = False, log=None) -> list[Path]:
    camp.validate()
    jobs = [to_dict(c) for c in camp.configs()]
    out = str(camp.outdir)
    if workers <= 1:
        paths = []
        for i, j in enumerate(jobs):
            paths.append(_run_one(j, out, resume))
            if log:
                print(f"[{i + 1}/{len(jobs)}] {paths[-1]}", file=log, flush=True)
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            paths = list(ex.map(_run_one, jobs, [out] * len(jobs), [resume] * len(jobs)))
    # merge only this campaign's runs, in a fixed order, so output is parallelism-independent
    reps = [report.load_report(p) for p in sorted(set(paths))]
    report.write_tables(reps, camp.outdir)
    return [Path(p) for p in paths]


# -- subcommands ------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args.config, overrides_from_args(args))
    trace = open(args.trace, "w") if args.trace else None
    try:
        rep = Simulator(cfg, trace=trace).run()
    finally:
        if trace:
            trace.close()
    path = report.save_report(rep, args.out)
    report.write_tables([rep], args.out)
    row = report.summary_row(rep)
    print(f"{path}: total_collisions={row['total_collisions']} "
          f"mean_collisions_per_event={row['mean_collisions_per_event']:.3f} "
          f"mean_itt_s={row['mean_itt_s']:.4f}")
    return 0


def cmd_sweep(args) -> int:
    base = load_config(args.config, overrides_from_args(args))
    camp = Campaign(
        schemes=[s.strip() for s in args.schemes.split(",") if s.strip()],
        densities=_floats(args.densities),
        seeds=parse_seeds(args.seeds),
        base=base,
        outdir=Path(args.out),
    )
    paths = run_campaign(camp, worker_count(args.workers), args.resume, log=sys.stderr)
    print(f"{len(paths)} runs in {camp.outdir}")
    return 0


def cmd_analytic(args) -> int:
    if args.which == "minrun":
        lo, hi = args.range
        if lo > hi:
            raise UsageError("--range needs lo <= hi")
        print(f"{analytic.min_counter_mean(lo, hi):.10g}")
        return 0
    if args.trials < 10_000:
        raise UsageError("--trials must be at least 10000")
    p_keeps = np.round(np.arange(0.0, 0.8 + 1e-9, args.step), 10)
    rows = analytic.fig1_table(p_keeps, args.trials, np.random.default_rng(args.seed))
    report.write_fig1(rows, args.out)
    for r in rows:
        print(f"p_keep={r['p_keep']:.2f} mean={r['mean_breakout_s']:.4f}s "
              f"q99={r['q99']:.1f}s q999={r['q999']:.1f}s")
    return 0


def cmd_report(args) -> int:
    reps = report.load_runs(args.dir)
    if not reps:
        raise UsageError(f"no run files under {args.dir}/runs")
    for p in report.write_tables(reps, args.out or args.dir):
        print(p)
    return 0


def _add_run_flags(p: argparse.ArgumentParser, single: bool) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    if single:
        p.add_argument("--scheme", choices=[s.value for s in Scheme])
        p.add_argument("--density", type=float, help="vehicles per km")
        p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, help="simulated seconds")
    p.add_argument("--warmup", type=float, help="seconds excluded from metrics")
    p.add_argument("--p-keep", type=float, dest="p_keep")
    p.add_argument("--road-length", type=float, dest="road_length")
    p.add_argument("--no-congestion", action="store_true")
    p.add_argument("--no-rssi-detection", action="store_true")
    p.add_argument("--static", action="store_true", help="disable the moving condition")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="generic override, e.g. phy.sinr_threshold_db=4")
    p.add_argument("--out", default="results", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sidelinksim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="one run")
    _add_run_flags(p, single=True)
    p.add_argument("--trace", help="write a JSON-lines transmission trace here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="campaign over schemes x densities x seeds")
    _add_run_flags(p, single=False)
    p.add_argument("--schemes", default="sps,oneshot,proposed")
    p.add_argument("--densities", default="100")
    p.add_argument("--seeds", default="1", help="inclusive ranges, e.g. 1..20")
    p.add_argument("--workers", type=int, help=f"parallel runs (default ${WORKERS_ENV} or 1)")
    p.add_argument("--resume", action="store_true", help="skip runs whose report already matches")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analytic", help="closed-form / Monte-Carlo tables")
    asub = p.add_subparsers(dest="which", required=True)
    f = asub.add_parser("fig1", help="mean breakout time versus keep probability")
    f.add_argument("--trials", type=int, default=200_000)
    f.add_argument("--step", type=float, default=0.05)
    f.add_argument("--seed", type=int, default=1)
    f.add_argument("--out", default="fig1.csv")
    m = asub.add_parser("minrun", help="E[min] of two uniform integer counters")
    m.add_argument("--range", nargs=2, type=int, default=[2, 6], metavar=("LO", "HI"))
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("report", help="merge run files into comparison tables")
    p.add_argument("dir", help="directory holding runs/*.json")
    p.add_argument("--out", help="where to write the tables (default: dir)")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"{ap.prog}: error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"{ap.prog}: simulation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
