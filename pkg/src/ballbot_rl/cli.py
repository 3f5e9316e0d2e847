"""Command-line interface: ``ballbot <subcommand> [options]``.

Each subcommand writes its outputs plus a ``manifest.json`` into ``--out``.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import gains_to_text, load_config, design_gain
from .dynamics import linearize
from .errors import BallbotError
from .experiments import (SweepGrid, bundled_checkpoint, load_actor, records_from_csv, records_to_csv, sweep_recovery,
                          trace_episode, train_agent, write_manifest)
from .svgplot import emit_svg_polar

log = logging.getLogger("ballbot_rl")


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value config file (defaults if omitted)")
    p.add_argument("--seed", type=int, help="run seed (overrides the config)")
    p.add_argument("--out", default="out", help="output directory (default: out)")


def _controller_args(p: argparse.ArgumentParser):
    p.add_argument("--controller", choices=("linear", "compound"), default="linear")
    p.add_argument("--weights", help="trained checkpoint for --controller compound "
                                      "(default: the bundled one)")


def _tilt_args(p: argparse.ArgumentParser, beta_default):
    p.add_argument("--alpha-deg", type=float, default=210.0, help="tilt direction (deg)")
    p.add_argument("--beta-deg", type=float, default=beta_default, help="tilt magnitude (deg)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ballbot", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one episode and write its full log")
    _common(p)
    _controller_args(p)
    _tilt_args(p, 5.0)

    p = sub.add_parser("design-gains", help="compute the linear feedback gain")
    _common(p)

    p = sub.add_parser("train", help="train the RL part of the compound controller")
    _common(p)
    p.add_argument("--episodes", type=int, help="training episodes (overrides the config)")

    p = sub.add_parser("sweep", help="recovery sweep over the config grid")
    _common(p)
    _controller_args(p)

    p = sub.add_parser("plot", help="polar SVG from a records CSV")
    _common(p)
    p.add_argument("records", help="records.csv written by sweep")

    p = sub.add_parser("trace", help="windowed single-episode log for time plots")
    _common(p)
    _controller_args(p)
    _tilt_args(p, 8.0)
    p.add_argument("--window", type=float, default=1.25, help="seconds of log to keep")
    return ap


def _setup(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _actor(args):
    if args.controller == "compound":
        return load_actor(args.weights or bundled_checkpoint())
    return None


def cmd_simulate(args, window=None, name="episode.csv"):
    started = _now()
    cfg, out = _setup(args)
    ep = trace_episode(cfg, args.controller, args.alpha_deg, args.beta_deg, _actor(args), window)
    path = out / name
    path.write_text(ep.to_csv())
    write_manifest(out / "manifest.json", cfg, cfg.seed, args.command, [path], started)
    print(json.dumps({"status": ep.status, "recovered": ep.recovered, "end_time_s": ep.end_time,
                      "max_beta_deg": math.degrees(ep.max_beta), "error": ep.error,
                      "log": str(path)}))
    return 0


def cmd_trace(args):
    return cmd_simulate(args, window=args.window, name="trace.csv")


def cmd_design_gains(args):
    started = _now()
    cfg, out = _setup(args)
    gain = design_gain(cfg)
    eig = gain.closed_loop_eigs(linearize(cfg.physical))
    path = out / "gains.cfg"
    path.write_text(gains_to_text(gain.k))
    write_manifest(out / "manifest.json", cfg, cfg.seed, "design-gains", [path], started)
    print(json.dumps({"k": list(gain.k), "method": "explicit" if cfg.gain_k else cfg.design_method,
                      "closed_loop_eigs": [[float(e.real), float(e.imag)] for e in np.sort_complex(eig)]}))
    return 0


def cmd_train(args):
    started = _now()
    cfg, out = _setup(args)
    episodes = cfg.train_episodes if args.episodes is None else args.episodes

    def progress(agent, row):
        if row.episode % 50 == 0:
            log.info("episode %d return %.3f", row.episode, row.ret)

    res = train_agent(cfg, cfg.seed, episodes, out_dir=out, callback=progress)
    # rewrite the manifest with the real start time
    write_manifest(out / "manifest.json", cfg, cfg.seed, "train", res.outputs.values(), started)
    print(json.dumps({"episodes": episodes, "checkpoint": str(res.outputs["checkpoint"]),
                      "curve": str(res.outputs["curve"])}))
    return 0


def cmd_sweep(args):
    started = _now()
    cfg, out = _setup(args)
    grid = SweepGrid.from_config(cfg.grid, args.controller, cfg.seed)
    records, summary = sweep_recovery(grid, cfg, _actor(args))
    rec_path = out / f"records_{args.controller}.csv"
    rec_path.write_text(records_to_csv(records))
    sum_path = out / f"summary_{args.controller}.json"
    sum_path.write_text(json.dumps(summary.to_dict(), indent=1, sort_keys=True) + "\n")
    svg_path = out / f"recovery_{args.controller}.svg"
    svg_path.write_text(emit_svg_polar(records, cfg.envelope.wheel_alphas,
                                       title=f"recovery area ({args.controller})"))
    write_manifest(out / "manifest.json", cfg, cfg.seed, "sweep", [rec_path, sum_path, svg_path],
                   started)
    print(json.dumps({"recovered": summary.count, "points": summary.n_points,
                      "records": str(rec_path), "svg": str(svg_path)}))
    return 0


def cmd_plot(args):
    started = _now()
    cfg, out = _setup(args)
    records = records_from_csv(Path(args.records).read_text())
    path = out / (Path(args.records).stem + ".svg")
    path.write_text(emit_svg_polar(records, cfg.envelope.wheel_alphas))
    write_manifest(out / "manifest.json", cfg, cfg.seed, "plot", [path], started)
    print(json.dumps({"svg": str(path), "points": len(records)}))
    return 0


COMMANDS = {"simulate": cmd_simulate, "design-gains": cmd_design_gains, "train": cmd_train,
            "sweep": cmd_sweep, "plot": cmd_plot, "trace": cmd_trace}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (BallbotError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
