"""Command-line entry points: transconductance maps, single solves, campaigns.

Each command reads one YAML configuration, writes CSV tables with
self-describing headers (full double precision via repr), a JSON metadata
sidecar (config hash, seed, package/library versions), and matplotlib
figures rendered next to the data.  Exit status is 0 only if every
requested work item succeeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (apply_overrides, config_hash, default_config_dict,
                     dump_config, parse_config_dict)
from .errors import DegenerateOperatingPointError, RydmimoError
from .montecarlo import build_scenario, draw_channels, run_campaign
from .physics import LOConfig, probe_transmission, transconductances
from .wmmse import qwmmse_solve

__all__ = ["main"]


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return str(path)


def _write_sidecar(out_dir, name, raw_config, seed, extra=None):
    meta = {
        "config_hash": config_hash(raw_config),
        "seed": seed,
        "versions": {"rydmimo": __version__, "numpy": np.__version__,
                     "python": sys.version.split()[0]},
    }
    if extra:
        meta.update(extra)
    path = out_dir / f"{name}.meta.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return str(path)


def _load(args):
    raw = None
    if args.config == "-":
        import yaml

        raw = yaml.safe_load(sys.stdin)
    else:
        import yaml

        with open(args.config, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    raw = apply_overrides(raw, args.override)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out_dir is not None:
        raw["out_dir"] = args.out_dir
    return raw, parse_config_dict(raw)


def cmd_init_config(args):
    raw = default_config_dict()
    if args.path == "-":
        import yaml

        yaml.safe_dump(raw, sys.stdout, sort_keys=False)
    else:
        dump_config(raw, args.path)
        print(f"wrote {args.path}")
    return 0


def cmd_map(args):
    """Probe transmission and transconductances over the LO field plane."""
    raw, cfg = _load(args)
    if cfg.atomic.num_bands != 2:
        print("map requires a dual-band (num_bands=2) configuration", file=sys.stderr)
        return 2
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = np.linspace(cfg.map_grid["e_lo_low"], cfg.map_grid["e_lo_high"],
                       cfg.map_grid["points"])
    t_p = np.full((grid.size, grid.size), math.nan)
    g1 = np.full_like(t_p, math.nan)
    g2 = np.full_like(t_p, math.nan)
    degenerate = 0
    rows = []
    for i, e1 in enumerate(grid):
        for j, e2 in enumerate(grid):
            lo = LOConfig([e1, e2], min(grid[0], cfg.solver.e_lo_min))
            try:
                gains = transconductances(cfg.atomic, lo)
                t_p[i, j] = probe_transmission(cfg.atomic, lo)
                g1[i, j], g2[i, j] = gains.g_q
            except DegenerateOperatingPointError:
                degenerate += 1
            rows.append((e1, e2, t_p[i, j], g1[i, j], g2[i, j]))
    data = _write_csv(out_dir / "transconductance_map.csv",
                      ["e_lo_1", "e_lo_2", "t_p", "g_q_1", "g_q_2"], rows)
    _write_sidecar(out_dir, "transconductance_map", raw, cfg.seed,
                   {"degenerate_points": degenerate})
    from .plotting import render_map_figures

    figures = render_map_figures(grid, t_p, g1, g2, out_dir)
    print(f"wrote {data} and {len(figures)} figures"
          + (f" ({degenerate} degenerate grid points recorded as NaN)"
             if degenerate else ""))
    return 0


def cmd_solve(args):
    """One optimizer run; per-iteration trajectory plus a summary row."""
    raw, cfg = _load(args)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed,
                                                       spawn_key=(0,)))
    template = cfg.template()
    channels = draw_channels(template, rng)
    power = cfg.campaign.power_grid[0]
    scenario = build_scenario(template, channels, power)
    solver = replace(cfg.solver, seed=np.random.SeedSequence(entropy=cfg.seed,
                                                             spawn_key=(1,)))
    try:
        state = qwmmse_solve(scenario, solver)
    except RydmimoError as exc:
        print(f"optimizer failed: {exc}", file=sys.stderr)
        return 1
    m_bands = scenario.num_bands
    header = (["row_kind", "iteration", "f_q", "wse"]
              + [f"g_q_{m + 1}" for m in range(m_bands)]
              + [f"e_lo_{m + 1}" for m in range(m_bands)]
              + ["converged"])
    rows = []
    for it in range(state.iterations):
        rows.append(["iteration", it + 1, state.objective_trace[it],
                     state.se_trace[it]]
                    + [state.gq_trace[it, m] for m in range(m_bands)]
                    + [state.lo_trace[it, m] for m in range(m_bands)]
                    + [""])
    rows.append(["summary", state.iterations, state.objective_trace[-1],
                 state.se_trace[-1]]
                + [state.gq_trace[-1, m] for m in range(m_bands)]
                + [state.lo_trace[-1, m] for m in range(m_bands)]
                + [state.converged])
    data = _write_csv(out_dir / "trajectory.csv", header, rows)
    _write_sidecar(out_dir, "trajectory", raw, cfg.seed,
                   {"converged": bool(state.converged),
                    "iterations": int(state.iterations),
                    "power_w": float(power),
                    "scheme": cfg.solver.scheme})
    from .plotting import render_trajectory_figure

    figures = render_trajectory_figure(
        np.arange(1, state.iterations + 1), state.se_trace,
        state.objective_trace, out_dir)
    print(f"wrote {data} and {len(figures)} figures "
          f"(converged={state.converged}, iterations={state.iterations})")
    return 0


def cmd_campaign(args):
    """Monte Carlo campaign over the power grid and scheme list."""
    raw, cfg = _load(args)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_campaign(cfg.campaign, cfg.template())
    m_bands = cfg.atomic.num_bands
    trial_header = (["trial", "power_w", "scheme", "wse", "sum_rate",
                     "iterations", "converged", "failed", "error"]
                    + [f"g_q_{m + 1}" for m in range(m_bands)]
                    + [f"e_lo_{m + 1}" for m in range(m_bands)])
    trial_rows = []
    for r in result.trials:
        trial_rows.append([r["trial"], r["power_w"], r["scheme"], r["wse"],
                           r["sum_rate"], r["iterations"], r["converged"],
                           r["failed"], r["error"]]
                          + [r.get(f"g_q_{m + 1}", math.nan) for m in range(m_bands)]
                          + [r.get(f"e_lo_{m + 1}", math.nan) for m in range(m_bands)])
    raw_path = _write_csv(out_dir / "campaign_trials.csv", trial_header, trial_rows)
    agg_header = ["power_w", "scheme", "num_trials", "num_failed", "wse_mean",
                  "wse_std", "sum_rate_mean", "sum_rate_std", "iterations_mean"]
    agg_rows = [[a[k] for k in agg_header] for a in result.aggregates]
    agg_path = _write_csv(out_dir / "campaign_aggregate.csv", agg_header, agg_rows)
    _write_sidecar(out_dir, "campaign", raw, cfg.seed,
                   {"num_failed": result.num_failed,
                    "num_trials": cfg.campaign.num_trials,
                    "schemes": list(cfg.campaign.schemes)})
    report = {
        "num_failed": result.num_failed,
        "failures": [{"trial": r["trial"], "scheme": r["scheme"],
                      "power_w": r["power_w"], "error": r["error"]}
                     for r in result.trials if r["failed"]],
    }
    with open(out_dir / "run_report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    from .plotting import render_campaign_figures

    figures = render_campaign_figures(result.aggregates, out_dir)
    print(f"wrote {raw_path}, {agg_path} and {len(figures)} figures "
          f"({result.num_failed} failed solves)")
    return 0 if result.num_failed == 0 else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rydmimo",
        description="Multi-band atomic-receiver MIMO simulator and optimizer")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True,
                       help="YAML configuration file ('-' for stdin)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the configured seed")
        p.add_argument("--out-dir", default=None,
                       help="override the configured output directory")
        p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="dotted-path configuration override (repeatable)")

    p_map = sub.add_parser("map", help="LO-plane transmission/transconductance map")
    add_common(p_map)
    p_map.set_defaults(func=cmd_map)

    p_solve = sub.add_parser("solve", help="single optimizer run with trajectory")
    add_common(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_camp = sub.add_parser("campaign", help="Monte Carlo campaign")
    add_common(p_camp)
    p_camp.set_defaults(func=cmd_campaign)

    p_init = sub.add_parser("init-config", help="write the default configuration")
    p_init.add_argument("path", nargs="?", default="-",
                        help="output path ('-' for stdout)")
    p_init.set_defaults(func=cmd_init_config)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
