"""Compound controller: linear feedback plus a superposed RL correction.

The RL agent sees the body lean and lean rate of both planes together with the
body z-axis, and outputs a virtual-wheel command per plane.  That command is
mapped to torque with the constant ``ActionLimits.scale`` and added to the
feedback torque before saturation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .ddpg.agent import actor_forward
from .ddpg.mlp import MlpWeights
from .dynamics import PhysicalParams
from .linctl import GainVector
from .sim import (CONTINUE, FALLEN, RECOVERED, STATUS_NAMES, BallbotState3D, BodyAttitude,
                  Command, ContactEnvelope, EpisodeMonitor, SimConfig, effectiveness_arrays,
                  initial_states, rk4, tilt_arrays)

OBS_DIM = 7
ACT_DIM = 2


@dataclass(frozen=True)
class ActionLimits:
    """RL command amplitude (virtual wheel speed, rad/s) and torque saturation (N m)."""

    amplitude: float = 30.0
    u_max: float = 20.0

    def __post_init__(self):
        if not (self.amplitude > 0 and self.u_max > 0):
            raise ValueError("amplitude and u_max must be positive")

    @property
    def scale(self) -> float:
        """Torque per unit of RL command."""
        return self.u_max / self.amplitude


@dataclass(frozen=True)
class CompoundConfig:
    rl_period: float = 0.01  # seconds an RL action is held
    band_below: float = math.radians(2.0)  # training tilt band around the linear limit
    band_above: float = math.radians(4.0)
    gate_lo: float = math.radians(3.0)  # RL action fully suppressed below this tilt
    gate_hi: float = math.radians(5.0)  # and fully passed above this one

    def __post_init__(self):
        if self.rl_period <= 0 or self.band_below < 0 or self.band_above < 0:
            raise ValueError("rl_period must be > 0 and band widths >= 0")
        if not 0 <= self.gate_lo <= self.gate_hi:
            raise ValueError("need 0 <= gate_lo <= gate_hi")

    def gate(self, beta):
        """Smoothstep weight in [0, 1] applied to the RL action at tilt ``beta``."""
        if self.gate_hi == 0.0:
            return np.ones_like(np.asarray(beta, dtype=float))
        if self.gate_hi == self.gate_lo:
            return (np.asarray(beta) >= self.gate_hi).astype(float)
        s = np.clip((beta - self.gate_lo) / (self.gate_hi - self.gate_lo), 0.0, 1.0)
        return s * s * (3.0 - 2.0 * s)

    def period_steps(self, dt) -> int:
        n = int(round(self.rl_period / dt))
        if n < 1 or abs(n * dt - self.rl_period) > 1e-9:
            raise ValueError("rl_period must be a positive multiple of dt")
        return n


class RlObservation(NamedTuple):
    phi_x: float
    phi_dot_x: float
    phi_y: float
    phi_dot_y: float
    z_attitude: tuple

    def as_array(self) -> np.ndarray:
        return np.array([self.phi_x, self.phi_dot_x, self.phi_y, self.phi_dot_y, *self.z_attitude])


def observe_arrays(x: np.ndarray) -> np.ndarray:
    """Observation rows (lean_x, rate_x, lean_y, rate_y, z_x, z_y, z_z) for (m, 2, 4) states."""
    lean = x[:, :, 0] + x[:, :, 1]
    rate = x[:, :, 2] + x[:, :, 3]
    _, _, z = tilt_arrays(lean[:, 0], lean[:, 1])
    return np.column_stack([lean[:, 0], rate[:, 0], lean[:, 1], rate[:, 1], z])


def observe(state: BallbotState3D) -> RlObservation:
    o = observe_arrays(state.as_array()[None])[0]
    return RlObservation(o[0], o[1], o[2], o[3], tuple(o[4:]))


def reward(att: BodyAttitude, c: float) -> float:
    return -abs(att.beta) + c


def compose_command(u_fb, a_rl, limits: ActionLimits):
    """Saturated sum of feedback torque and scaled RL command."""
    return np.clip(u_fb + limits.scale * a_rl, -limits.u_max, limits.u_max)


class Terminal:
    """Per-episode fall / recovery-hold state machine, fed one attitude per step."""

    def __init__(self, cfg: SimConfig):
        self._monitor = EpisodeMonitor(cfg, 1)

    def update(self, att: BodyAttitude, t: float = 0.0) -> str:
        return STATUS_NAMES[int(self._monitor.update(np.array([att.beta]))[0])]


def terminal(att: BodyAttitude, t: float, cfg: SimConfig, tracker: Terminal | None = None) -> str:
    """Classify one step; pass the same ``tracker`` every step to carry the hold timer."""
    if tracker is None:
        tracker = Terminal(cfg)
    return tracker.update(att, t)


class LinearPolicy:
    """The conventional controller: u = sat(-K x) in each plane."""

    def __init__(self, gain: GainVector, limits: ActionLimits):
        self.k = gain.as_array()
        self.limits = limits

    def reset(self, n, seeds=None):
        pass

    def command(self, step, x, idx):
        u_fb = -(x @ self.k)
        zero = np.zeros_like(u_fb)
        return Command(compose_command(u_fb, zero, self.limits), u_fb, zero)


class CompoundPolicy:
    """Linear feedback every step plus an actor output held for ``period`` steps."""

    def __init__(self, gain: GainVector, limits: ActionLimits, actor: MlpWeights, period: int,
                 gate=None):
        self.k = gain.as_array()
        self.limits = limits
        self.actor = actor
        self.period = int(period)
        self.gate = gate
        self.held = np.zeros((0, ACT_DIM))

    def reset(self, n, seeds=None):
        self.held = np.zeros((n, ACT_DIM))

    def command(self, step, x, idx):
        if step % self.period == 0:
            obs = observe_arrays(x)
            a = actor_forward(self.actor, obs)
            if self.gate is not None:
                a = a * self.gate(np.arccos(np.clip(obs[:, 6], -1.0, 1.0)))[:, None]
            self.held[idx] = a * self.limits.amplitude
        a_rl = self.held[idx]
        u_fb = -(x @ self.k)
        return Command(compose_command(u_fb, a_rl, self.limits), u_fb, self.limits.scale * a_rl)


class BandSampler:
    """Initial tilts drawn around a per-direction recovery limit.

    A direction is picked uniformly from ``alphas``; beta is uniform in
    ``[limit - below, limit + above]`` (kept strictly positive).
    """

    def __init__(self, alphas, limits, below, above):
        self.alphas = np.asarray(alphas, dtype=float)
        self.limits = np.asarray(limits, dtype=float)
        self.below = below
        self.above = above

    def __call__(self, rng: np.random.Generator):
        i = rng.integers(0, self.alphas.size)
        lo = max(self.limits[i] - self.below, 1e-3)
        return self.alphas[i], rng.uniform(lo, self.limits[i] + self.above)


class BallbotEnv:
    """Recovery task as an RL environment.

    One ``step`` holds the RL action for ``period`` physics steps while the
    linear feedback runs at every physics step.  The reward is ``c - beta``
    after the step.  A fall is terminal; a completed recovery hold or the
    horizon ends the episode without being terminal.
    """

    obs_dim = OBS_DIM
    act_dim = ACT_DIM

    def __init__(self, p: PhysicalParams, cfg: SimConfig, env: ContactEnvelope, gain: GainVector,
                 limits: ActionLimits, period: int, reward_c: float, sampler, gate=None):
        self.p = p
        self.cfg = cfg
        self.envelope = env
        self.k = gain.as_array()
        self.limits = limits
        self.period = int(period)
        self.reward_c = reward_c
        self.sampler = sampler
        self.gate = gate
        self.x = None
        self.k_step = 0
        self.monitor = None
        self.initial = None
        self.status = CONTINUE

    def reset(self, rng):
        alpha, beta = self.sampler(rng)
        self.initial = (alpha, beta)
        self.x = initial_states(alpha, beta)
        self.k_step = 0
        self.monitor = EpisodeMonitor(self.cfg, 1)
        self.status = int(self.monitor.update(np.array([beta]))[0])
        return observe_arrays(self.x)[0]

    def step(self, action):
        a_rl = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)[None, :] * self.limits.amplitude
        cfg = self.cfg
        x = self.x
        if self.gate is not None:
            z = observe_arrays(x)[0, 6]
            a_rl = a_rl * self.gate(np.arccos(min(1.0, z)))
        status = self.status
        for _ in range(self.period):
            if status != CONTINUE or self.k_step >= cfg.n_steps:
                break
            lean = x[:, :, 0] + x[:, :, 1]
            alpha, beta, _ = tilt_arrays(lean[:, 0], lean[:, 1])
            u = compose_command(-(x @ self.k), a_rl, self.limits)
            u = u * effectiveness_arrays(self.envelope, alpha, beta)[:, None]
            x = rk4(self.p, x, u, cfg.dt)
            self.k_step += 1
            if not np.all(np.isfinite(x)):
                status = FALLEN
                x = self.x
                break
            lean = x[:, :, 0] + x[:, :, 1]
            status = int(self.monitor.update(tilt_arrays(lean[:, 0], lean[:, 1])[1])[0])
        self.x = x
        self.status = status
        obs = observe_arrays(x)[0]
        _, beta, _ = tilt_arrays(obs[0], obs[2])
        r = -float(beta) + self.reward_c
        done = status == FALLEN
        truncated = status == RECOVERED or (status == CONTINUE and self.k_step >= cfg.n_steps)
        return obs, r, done, truncated
