"""Experiment drivers: recovery sweeps, training runs, traces and run manifests.

Everything here writes plain files (CSV, SVG, JSON).  Given the same config,
seed and checkpoint the outputs are byte-identical; only the timestamps in a
manifest change between runs.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import __version__
from .compound import (ACT_DIM, OBS_DIM, BallbotEnv, BandSampler, CompoundPolicy, LinearPolicy)
from .config import Config, GridConfig, design_gain, dumps, to_mapping
from .ddpg.agent import CURVE_HEADER, Agent, load_checkpoint, save_checkpoint, train
from .errors import BallbotError, ConfigError
from .sim import (RECOVERED, STATUS_NAMES, BodyAttitude, EpisodeLog, initial_states, run_episode,
                  simulate)

log = logging.getLogger(__name__)

CONTROLLERS = ("linear", "compound")


@dataclass(frozen=True)
class SweepGrid:
    """Initial tilts to test.  Angles are radians; use ``from_degrees`` at the edges."""

    alphas: tuple
    betas: tuple
    controller_id: str = "linear"
    seed: int = 0

    def __post_init__(self):
        a = tuple(float(v) for v in self.alphas)
        b = tuple(float(v) for v in self.betas)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "betas", b)
        if not a or not b:
            raise ConfigError("sweep grid needs at least one alpha and one beta")
        if any(not 0.0 <= v < 2 * math.pi for v in a):
            raise ConfigError("alphas must lie in [0, 360) degrees")
        if len(set(a)) != len(a):
            raise ConfigError("alphas must be distinct")
        if any(y <= x for x, y in zip(b, b[1:])):
            raise ConfigError("betas must be strictly increasing")
        if b[0] < 0 or b[-1] >= math.pi / 2:
            raise ConfigError("betas must lie in [0, 90) degrees")
        if self.controller_id not in CONTROLLERS:
            raise ConfigError(f"controller must be one of {CONTROLLERS}")

    @classmethod
    def from_degrees(cls, alphas_deg, betas_deg, controller_id="linear", seed=0):
        return cls(tuple(math.radians(v) for v in alphas_deg),
                   tuple(math.radians(v) for v in betas_deg), controller_id, seed)

    @classmethod
    def from_config(cls, grid: GridConfig, controller_id="linear", seed=0):
        return cls.from_degrees(grid.alphas_deg(), grid.betas_deg(), controller_id, seed)

    def points(self):
        """(alpha, beta) pairs in record order: alpha major, both ascending."""
        return [(a, b) for a in sorted(self.alphas) for b in self.betas]


class RecoveryRecord(NamedTuple):
    alpha: float  # rad
    beta: float  # rad
    recovered: bool
    status: str  # recovered | fallen | continue | error
    time: float  # settle time if recovered, fall time if fallen, else horizon (s)
    max_beta: float  # largest tilt reached (rad)
    error: str = ""


RECORD_HEADER = ("alpha_deg", "beta_deg", "recovered", "status", "time_s", "max_beta_deg",
                 "alpha_rad", "beta_rad", "max_beta_rad", "error")


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_HEADER)
    for r in records:
        w.writerow([_deg_text(r.alpha), _deg_text(r.beta), int(r.recovered), r.status,
                    repr(float(r.time)), _deg_text(r.max_beta), repr(float(r.alpha)),
                    repr(float(r.beta)), repr(float(r.max_beta)), r.error])
    return buf.getvalue()


def records_from_csv(text: str) -> list:
    rd = csv.reader(io.StringIO(text))
    header = tuple(next(rd))
    if header != RECORD_HEADER:
        raise ValueError(f"unexpected record header {header}")
    out = []
    for row in rd:
        d = dict(zip(header, row))
        out.append(RecoveryRecord(float(d["alpha_rad"]), float(d["beta_rad"]),
                                  d["recovered"] == "1", d["status"], float(d["time_s"]),
                                  float(d["max_beta_rad"]), d["error"]))
    return out


def _deg_text(rad) -> str:
    return f"{math.degrees(rad):.6f}"


@dataclass
class SweepSummary:
    n_points: int
    count: int  # recovered points
    per_alpha_max_beta: dict  # alpha (deg, rounded) -> largest recovered beta (deg) or None

    def to_dict(self):
        return {"n_points": self.n_points, "recovered_count": self.count,
                "per_alpha_max_beta_deg": {f"{a:g}": b for a, b in self.per_alpha_max_beta.items()}}


def summarize(records) -> SweepSummary:
    per = {}
    for r in records:
        a = round(math.degrees(r.alpha), 6)
        per.setdefault(a, None)
        if r.recovered:
            b = round(math.degrees(r.beta), 6)
            per[a] = b if per[a] is None else max(per[a], b)
    return SweepSummary(len(records), sum(r.recovered for r in records), dict(sorted(per.items())))


def point_seed(seed: int, alpha: float, beta: float) -> int:
    """Per-point seed: the run seed xor a hash of the point, independent of batching."""
    h = zlib.crc32(np.array([alpha, beta], dtype="<f8").tobytes())
    return (int(seed) ^ h) & 0xFFFFFFFFFFFFFFFF


def make_controller(cfg: Config, controller_id: str, gain=None, actor=None):
    gain = gain if gain is not None else design_gain(cfg)
    if controller_id == "linear":
        return LinearPolicy(gain, cfg.limits)
    if controller_id == "compound":
        if actor is None:
            raise ConfigError("the compound controller needs trained weights (--weights)")
        return CompoundPolicy(gain, cfg.limits, actor, cfg.compound.period_steps(cfg.sim.dt),
                              cfg.compound.gate)
    raise ConfigError(f"unknown controller {controller_id!r}")


def bundled_checkpoint():
    """Path of the checkpoint shipped with the package (default config and seed)."""
    return resources.files("ballbot_rl").joinpath("data/checkpoint.json")


def load_actor(path):
    agent = load_checkpoint(path)
    if agent.obs_dim != OBS_DIM or agent.act_dim != ACT_DIM:
        raise ConfigError(f"checkpoint dims ({agent.obs_dim}, {agent.act_dim}) do not match the task")
    return agent.actor


def _run_chunk(cfg: Config, controller_id, actor, points, seeds):
    ctl = make_controller(cfg, controller_id, actor=actor)
    alpha = np.array([p[0] for p in points])
    beta = np.array([p[1] for p in points])
    try:
        res, _ = simulate(cfg.physical, cfg.sim, cfg.envelope, ctl, initial_states(alpha, beta),
                          seeds=seeds)
    except BallbotError as e:
        if len(points) == 1:
            return [RecoveryRecord(alpha[0], beta[0], False, "error", 0.0, beta[0],
                                   f"{type(e).__name__}: {e}")]
        # isolate the failing point(s) by rerunning one at a time
        return [r for p, s in zip(points, seeds) for r in _run_chunk(cfg, controller_id, actor, [p], [s])]
    out = []
    for i, (a, b) in enumerate(points):
        status = STATUS_NAMES[int(res.status[i])]
        err = res.error[i]
        out.append(RecoveryRecord(a, b, bool(res.status[i] == RECOVERED),
                                  "error" if err else status,
                                  float(res.end_step[i] * cfg.sim.dt), float(res.max_beta[i]), err))
    return out


def sweep_recovery(grid: SweepGrid, cfg: Config, actor=None, workers: int = 1):
    """One recovery episode per grid point, zero initial rates.

    Points are integrated together as one batch (or one batch per worker);
    each point evolves independently, so the split does not change results.
    Errors become per-point records with status ``error``.  Returns
    ``(records, summary)`` with records sorted by (alpha, beta).
    """
    points = grid.points()
    seeds = [point_seed(grid.seed, a, b) for a, b in points]
    if grid.controller_id == "compound" and actor is None:
        raise ConfigError("compound sweeps require a checkpoint")
    if workers <= 1:
        records = _run_chunk(cfg, grid.controller_id, actor, points, seeds)
    else:
        chunks = np.array_split(np.arange(len(points)), workers)
        with ProcessPoolExecutor(workers) as ex:
            futs = [ex.submit(_run_chunk, cfg, grid.controller_id, actor,
                              [points[i] for i in c], [seeds[i] for i in c]) for c in chunks if c.size]
            records = [r for f in futs for r in f.result()]
    records.sort(key=lambda r: (r.alpha, r.beta))
    return records, summarize(records)


def linear_limits(cfg: Config, alphas_deg=None):
    """Per-direction largest beta (rad) recovered by the linear controller on the config grid."""
    alphas_deg = cfg.grid.alphas_deg() if alphas_deg is None else alphas_deg
    grid = SweepGrid.from_degrees(alphas_deg, cfg.grid.betas_deg(), "linear", cfg.seed)
    records, _ = sweep_recovery(grid, cfg)
    limits = []
    for a in grid.alphas:
        rec = [r.beta for r in records if r.alpha == a and r.recovered]
        limits.append(max(rec) if rec else grid.betas[0])
    return np.array(grid.alphas), np.array(limits)


def make_env(cfg: Config, alphas, limits, gain=None):
    gain = gain if gain is not None else design_gain(cfg)
    cc = cfg.compound
    sampler = BandSampler(alphas, limits, cc.band_below, cc.band_above)
    return BallbotEnv(cfg.physical, cfg.sim, cfg.envelope, gain, cfg.limits,
                      cc.period_steps(cfg.sim.dt), cfg.ddpg.reward_c, sampler, cc.gate)


def curve_to_csv(curve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for row in curve:
        w.writerow([row.episode, repr(float(row.ret)), row.steps, repr(float(row.critic_loss)),
                    repr(float(row.actor_objective))])
    return buf.getvalue()


@dataclass
class TrainResult:
    agent: Agent
    curve: list
    alphas: np.ndarray
    limits: np.ndarray
    outputs: dict = field(default_factory=dict)


def train_agent(cfg: Config, seed: int, episodes: int, out_dir=None, callback=None) -> TrainResult:
    """Train the RL part of the compound controller.

    The initial-tilt band is centred on the linear controller's per-direction
    recovery limit, found by a linear sweep over the config grid first.  With
    ``out_dir`` the checkpoint, learning curve and manifest are written there.
    """
    if episodes < 0:
        raise ConfigError("episodes must be >= 0")
    alphas, limits = linear_limits(cfg)
    log.info("linear limits (deg): %s", np.round(np.degrees(limits), 3).tolist())
    env = make_env(cfg, alphas, limits)
    agent, curve = train(env, cfg.ddpg, seed, episodes, callback=callback)
    result = TrainResult(agent, curve, alphas, limits)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        extra = {"episodes": episodes,
                 "band_alphas_deg": [round(math.degrees(a), 9) for a in alphas],
                 "band_limits_deg": [round(math.degrees(b), 9) for b in limits],
                 "config": to_mapping(cfg)}
        save_checkpoint(agent, out / "checkpoint.json", extra)
        (out / "curve.csv").write_text(curve_to_csv(curve))
        result.outputs = {"checkpoint": out / "checkpoint.json", "curve": out / "curve.csv"}
        write_manifest(out / "manifest.json", cfg, seed, "train", result.outputs.values())
    return result


def trace_episode(cfg: Config, controller_id: str, alpha_deg: float, beta_deg: float,
                  actor=None, window: float | None = None) -> EpisodeLog:
    """Full single-episode log; ``window`` (s) trims the rows, not the episode outcome."""
    ctl = make_controller(cfg, controller_id, actor=actor)
    att = BodyAttitude.from_degrees(alpha_deg % 360.0, beta_deg)
    ep = run_episode(cfg.physical, cfg.sim, cfg.envelope, ctl, att,
                     rng_seed=point_seed(cfg.seed, att.alpha, att.beta))
    if window is not None:
        if window <= 0:
            raise ConfigError("window must be positive")
        ep.rows = [r for r in ep.rows if r[0] <= window + 1e-9]
    return ep


# -- manifests -----------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    seed: int
    config: dict
    outputs: list  # [{"path", "sha256", "bytes"}]
    code_version: str = __version__
    started_utc: str = ""
    finished_utc: str = ""

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=1, sort_keys=True) + "\n"


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(path, cfg: Config, seed, command, outputs, started=None) -> RunManifest:
    path = Path(path)
    entries = []
    for p in outputs:
        p = Path(p)
        try:
            rel = str(p.relative_to(path.parent))
        except ValueError:
            rel = str(p)
        entries.append({"path": rel, "sha256": sha256_file(p), "bytes": p.stat().st_size})
    entries.sort(key=lambda e: e["path"])
    m = RunManifest(command=command, seed=int(seed), config=to_mapping(cfg), outputs=entries,
                    started_utc=started or _utc_now(), finished_utc=_utc_now())
    path.write_text(m.to_json())
    return m


def config_snapshot(cfg: Config) -> str:
    return dumps(cfg)
