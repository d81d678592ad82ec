"""Command-line harness: run a scenario and write its metrics and figures.

    v2vtrack run --builtin unprotected-left --seed 42 --out results/
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .metrics import SYSTEMS, GospaParams
from .scenario import BUILTIN, SPOOF_PRESETS, ScenarioConfig, ScenarioError, load_builtin, load_scenario
from .simulation import RunOptions, RunResult, run_scenario

log = logging.getLogger("v2vtrack")

EXIT_OK, EXIT_IO, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="v2vtrack", description="V2V-assisted cooperative tracking simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario and evaluate the three track lists")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", type=Path, metavar="PATH", help="scenario JSON file")
    src.add_argument("--builtin", choices=sorted(BUILTIN), metavar="NAME",
                     help=f"shipped scenario ({', '.join(sorted(BUILTIN))})")
    run.add_argument("--seed", type=int, default=None, help="override the scenario RNG seed")
    run.add_argument("--out", type=Path, default=Path("out"), metavar="DIR", help="output directory (default: out)")
    run.add_argument("--channel-drop", type=float, default=None, metavar="F", help="BSM drop probability")
    run.add_argument("--channel-latency", type=int, default=None, metavar="N", help="BSM delay in ticks")
    run.add_argument("--spoof", choices=sorted(SPOOF_PRESETS), default=None, metavar="PRESET",
                     help=f"inject a spoofed sender ({', '.join(sorted(SPOOF_PRESETS))})")
    run.add_argument("--gospa-c", type=float, default=GospaParams.c, metavar="F", help="GOSPA cutoff")
    run.add_argument("--gospa-p", type=float, default=GospaParams.p, metavar="N", help="GOSPA order")
    run.add_argument("--disable-v2v", action="store_true", help="discard every delivered BSM")
    run.add_argument("--disable-local", action="store_true", help="turn off the onboard sensors")
    run.add_argument("--capture", action="store_true", help="also write delivered BSMs to bsm.capture")
    run.add_argument("--no-plots", action="store_true", help="skip the PNG figures")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def configure(args: argparse.Namespace) -> ScenarioConfig:
    """Load the scenario named on the command line and apply the overrides."""
    if args.builtin:
        cfg = load_builtin(args.builtin)
    else:
        cfg = load_scenario(args.scenario.read_text())
    channel = cfg.channel
    changes = {}
    if args.channel_drop is not None:
        changes["drop_prob"] = args.channel_drop
    if args.channel_latency is not None:
        changes["latency_ticks"] = args.channel_latency
    if args.spoof:
        changes["spoof_injections"] = channel.spoof_injections + (SPOOF_PRESETS[args.spoof](cfg),)
    try:
        channel = dataclasses.replace(channel, **changes)
    except ValueError as exc:
        raise ScenarioError(f"channel: {exc}") from exc
    return dataclasses.replace(cfg, channel=channel)


def _frame_records(result: RunResult):
    by_frame = {}
    for row in result.track_log:
        by_frame.setdefault(row["frame"], {s: [] for s in SYSTEMS})[row["system"]].append(
            {k: row[k] for k in ("track", "status", "x", "y", "vx", "vy", "source")})
    for snap in result.snapshots:
        rec = {"frame": snap.frame, "t": round(snap.t, 6),
               "truth": [{"id": i, "x": float(x), "y": float(y)} for i, (x, y) in sorted(snap.truths.items())]}
        rec.update(by_frame.get(snap.frame, {s: [] for s in SYSTEMS}))
        yield rec


def write_tracks(result: RunResult, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in _frame_records(result):
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def spoofed_priority_tracks(result: RunResult) -> int:
    return len(result.priority_sources & result.spoof_ids)


def summary_text(result: RunResult, seed: int) -> str:
    cfg = result.config
    window = sum(1 for ids in result.occluded if ids)
    head = [f"scenario: {cfg.name}", f"seed: {seed}",
            f"frames: {cfg.n_ticks} at {cfg.tick_s:g} s",
            f"channel: drop={cfg.channel.drop_prob:g} latency_ticks={cfg.channel.latency_ticks}",
            f"spoofed temp_ids: {', '.join(f'0x{i:08X}' for i in sorted(result.spoof_ids)) or 'none'}",
            f"priority tracks from spoofed temp_ids: {spoofed_priority_tracks(result)}",
            f"validated sources: {len(result.registry)}",
            f"frames with an occluded actor: {window}", ""]
    return "\n".join(head) + result.report.summary()


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = configure(args)
        gp = GospaParams(p=args.gospa_p, c=args.gospa_c)
    except OSError as exc:
        log.error("cannot read scenario: %s", exc)
        return EXIT_IO
    except ValueError as exc:  # ScenarioError is a ValueError
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG

    seed = cfg.rng_seed if args.seed is None else args.seed
    opts = RunOptions(seed=seed, disable_v2v=args.disable_v2v, disable_local=args.disable_local, gospa=gp)
    out: Path = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.capture:
            with open(out / "bsm.capture", "wb") as cap:
                result = run_scenario(cfg, opts, capture=cap)
        else:
            result = run_scenario(cfg, opts)
        (out / "metrics.csv").write_text(result.report.to_csv(), encoding="utf-8")
        (out / "summary.txt").write_text(summary_text(result, seed), encoding="utf-8")
        write_tracks(result, out / "tracks.jsonl")
        if not args.no_plots:
            from .plotting import render_figures
            render_figures(result, out)
    except OSError as exc:
        log.error("cannot write outputs to %s: %s", out, exc)
        return EXIT_IO

    print(summary_text(result, seed), end="")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command == "run":
        return cmd_run(args)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
