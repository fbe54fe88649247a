"""Command-line interface: run scenario suites, evaluate reward timelines,
validate scenario files, and export occupancy rasters.

Exit codes: 0 ok, 2 usage, 3 config/validation, 4 I/O.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from .config import Config, TrackingConfig
from .errors import ParseError, ValidationError
from .harness import (MetricsReport, aggregate, build_occupancy_grid,
                      load_scenario, run_episode, write_report, write_trace_csv)
from .rewards import (ContactTimeline, r_freq, r_gait, r_track_xy,
                      r_track_yaw, total_reward)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4


@click.group()
def main():
    """Deterministic mobile-manipulation planning & evaluation toolkit."""


def _load_config(path: str | None) -> Config:
    if path is None:
        return Config()
    return Config.load(path)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@main.command()
@click.argument("scenarios", nargs=-1, required=True,
                type=click.Path(path_type=Path))
@click.option("--episodes", default=1, show_default=True, type=click.IntRange(min=1),
              help="Episodes per scenario.")
@click.option("--seed", default=0, show_default=True, type=int,
              help="Master seed; episode i uses stream i.")
@click.option("--dt", default=0.02, show_default=True, type=float)
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--preset", default="eval", show_default=True,
              type=click.Choice(["train", "eval", "roboduet"]))
@click.option("--out", required=True, type=click.Path(path_type=Path),
              help="Run directory for traces, reports, and the manifest.")
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, path_type=Path))
@click.option("--tau-base", default=None, type=float,
              help="Override base velocity lag (seconds).")
@click.option("--ee-rate", default=None, type=float)
@click.option("--noise-pos", default=None, type=float)
@click.option("--noise-ori", default=None, type=float)
def run(scenarios, episodes, seed, dt, jobs, preset, out, config_path,
        tau_base, ee_rate, noise_pos, noise_ori):
    """Run scenario episodes and write traces plus an aggregate report."""
    if dt <= 0:
        raise click.UsageError("--dt must be positive")
    cfg = _load_config(config_path)
    tracking = cfg.tracking
    overrides = {"tau_base": tau_base, "ee_rate": ee_rate,
                 "noise_pos": noise_pos, "noise_ori": noise_ori}
    merged = tracking.to_dict()
    merged.update({k: v for k, v in overrides.items() if v is not None})
    tracking = TrackingConfig.from_dict(merged)

    paths: list[Path] = []
    for s in scenarios:
        if s.is_dir():
            paths.extend(sorted(s.glob("*.yaml")))
        else:
            paths.append(s)
    for p in paths:
        if not p.exists():
            click.echo(f"error: scenario not found: {p}", err=True)
            sys.exit(EXIT_IO)

    try:
        loaded = [(p, load_scenario(p)) for p in paths]
    except (ParseError, ValidationError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    out.mkdir(parents=True, exist_ok=True)

    def one(args):
        scenario, episode_index = args
        return run_episode(scenario, dt=dt, tracking=tracking,
                           master_seed=seed, episode_index=episode_index)

    tasks = [(scenario, k) for _, scenario in loaded for k in range(episodes)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, tasks))
    else:
        results = [one(t) for t in tasks]

    reports: list[MetricsReport] = []
    i = 0
    for path, scenario in loaded:
        scen_dir = out / scenario.name
        for k in range(episodes):
            result = results[i]
            i += 1
            ep_dir = scen_dir / f"episode_{k}"
            ep_dir.mkdir(parents=True, exist_ok=True)
            write_trace_csv(result.trace, ep_dir / "trace.csv")
            write_report(result.metrics, ep_dir / "report.json",
                         extra={"scenario": scenario.name, "episode": k,
                                "outcomes": [{"index": o.index, "kind": o.kind,
                                              "success": o.success,
                                              "detail": o.detail}
                                             for o in result.outcomes]})
            reports.append(result.metrics)

    write_report(aggregate(reports), out / "aggregate.json")
    manifest = {
        "scenarios": [{"path": str(p), "sha256": _sha256(p)} for p, _ in loaded],
        "episodes": episodes, "seed": seed, "dt": dt, "preset": preset,
        "tracking": tracking.to_dict(),
        "config_hash": cfg.digest(),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    sys.exit(EXIT_OK)


_TIMELINE_TERMS = ("ee_pos", "ee_ori", "torque_base", "acc_base", "power_base",
                   "torque_arm", "acc_arm", "power_arm", "smooth")


@main.command()
@click.argument("timeline", type=click.Path(path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, path_type=Path))
def rewards(timeline, out, config_path):
    """Evaluate every reward term per tick of a recorded contact timeline.

    Input CSV needs t and contact_FL/FR/RL/RR columns; base velocity columns
    (cmd_vx, act_vx, ...) and precomputed term-value columns are optional and
    default to perfect tracking / zero."""
    if not timeline.exists():
        click.echo(f"error: timeline not found: {timeline}", err=True)
        sys.exit(EXIT_IO)
    cfg = _load_config(config_path)
    weights = cfg.reward_weights
    try:
        with open(timeline, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except (OSError, csv.Error) as exc:
        click.echo(f"error: cannot read timeline: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    tl = ContactTimeline()
    out_rows = []
    prev_t = None
    for row in rows:
        try:
            t = float(row["t"])
            contacts = {leg: row[f"contact_{leg}"].strip() in ("1", "true", "True")
                        for leg in ("FL", "FR", "RL", "RR")}
        except (KeyError, ValueError) as exc:
            click.echo(f"error: bad timeline row: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        dt = (t - prev_t) if prev_t is not None else 0.02
        prev_t = t
        tl.update(contacts, dt, t)
        cmd = np.array([float(row.get("cmd_vx", 0) or 0),
                        float(row.get("cmd_vy", 0) or 0),
                        float(row.get("cmd_w", 0) or 0)])
        act = np.array([float(row.get("act_vx", 0) or 0),
                        float(row.get("act_vy", 0) or 0),
                        float(row.get("act_w", 0) or 0)])
        terms = {
            "track_xy": r_track_xy(cmd[:2], act[:2], cfg.gamma_xy),
            "track_yaw": r_track_yaw(cmd[2], act[2], cfg.gamma_w),
            "gait": r_gait(tl),
            "freq": r_freq(tl, cfg.f_target),
        }
        for name in _TIMELINE_TERMS:
            terms[name] = float(row.get(name, 0) or 0)
        rec = {"t": repr(t)}
        rec.update({name: repr(terms[name]) for name in sorted(terms)})
        rec["total_stage1"] = repr(total_reward(1, terms, weights))
        rec["total_stage2"] = repr(total_reward(2, terms, weights))
        out_rows.append(rec)

    fieldnames = (["t"] + sorted(set().union(*[set(r) for r in out_rows]) - {"t"})
                  if out_rows else ["t"])
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(out_rows)
    sys.exit(EXIT_OK)


@main.command()
@click.argument("scenario", type=click.Path(path_type=Path))
def validate(scenario):
    """Validate a scenario file; nonzero exit with a located message on error."""
    if not scenario.exists():
        click.echo(f"error: scenario not found: {scenario}", err=True)
        sys.exit(EXIT_IO)
    try:
        load_scenario(scenario)
    except (ParseError, ValidationError) as exc:
        click.echo(f"invalid: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo("ok")
    sys.exit(EXIT_OK)


@main.command("export-grid")
@click.argument("scenario", type=click.Path(path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path),
              help="Output prefix; writes <prefix>.pgm and <prefix>.hdr.")
def export_grid(scenario, out):
    """Rasterize a scenario's occupancy grid to a portable graymap."""
    if not scenario.exists():
        click.echo(f"error: scenario not found: {scenario}", err=True)
        sys.exit(EXIT_IO)
    try:
        scen = load_scenario(scenario)
    except (ParseError, ValidationError) as exc:
        click.echo(f"invalid: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    grid = build_occupancy_grid(scen)
    out.parent.mkdir(parents=True, exist_ok=True)
    grid.export_raster(str(out) + ".pgm", str(out) + ".hdr")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
