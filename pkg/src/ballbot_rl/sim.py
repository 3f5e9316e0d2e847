"""Time integration and the two-plane 3D composition.

The robot is simulated as two identical decoupled planes (sagittal xz and
coronal yz).  Per-plane state rows are ``(theta, phi, theta', phi')``; the body
lean in a plane is ``theta + phi``.  Contact loss at large tilt is represented
by :class:`ContactEnvelope`, a scalar effectiveness that multiplies the
commanded torque in both planes.

Episodes are integrated in batches: ``simulate`` advances any number of
independent episodes in lock step, and ``run_episode`` is the batch-of-one case
with a full per-step log.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dynamics import PhysicalParams, PlanarState, state_derivative
from .errors import NonFinite

TWO_PI = 2.0 * math.pi


# --------------------------------------------------------------------------
# attitude


@dataclass(frozen=True)
class BodyAttitude:
    """Tilt direction ``alpha`` and magnitude ``beta`` of the body z-axis."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 <= self.beta < math.pi / 2):
            raise ValueError(f"beta must lie in [0, pi/2), got {self.beta!r}")

    @property
    def z_axis(self) -> np.ndarray:
        sb = math.sin(self.beta)
        return np.array([sb * math.cos(self.alpha), sb * math.sin(self.alpha), math.cos(self.beta)])

    @classmethod
    def from_degrees(cls, alpha_deg, beta_deg):
        return cls(math.radians(alpha_deg), math.radians(beta_deg))


def tilt_to_planar(att: BodyAttitude):
    """Plane lean angles (phi_x, phi_y) of the body z-axis."""
    z = att.z_axis
    return math.atan2(z[0], z[2]), math.atan2(z[1], z[2])


def tilt_arrays(phi_x, phi_y):
    """Vectorised inverse of :func:`tilt_to_planar`: returns (alpha, beta, z)."""
    tx = np.tan(phi_x)
    ty = np.tan(phi_y)
    rho = np.hypot(tx, ty)
    beta = np.arctan(rho)
    alpha = np.mod(np.arctan2(ty, tx), TWO_PI)
    norm = np.sqrt(1.0 + rho * rho)
    z = np.stack([tx / norm, ty / norm, 1.0 / norm], -1)
    return alpha, beta, z


def planar_to_tilt(phi_x, phi_y) -> BodyAttitude:
    alpha, beta, _ = tilt_arrays(float(phi_x), float(phi_y))
    if beta == 0.0:
        alpha = 0.0
    return BodyAttitude(float(alpha), float(beta))


# --------------------------------------------------------------------------
# wheels and contact surrogate


def _deg3(a, b, c):
    return (math.radians(a), math.radians(b), math.radians(c))


@dataclass(frozen=True)
class ContactEnvelope:
    """Direction-dependent loss of actuation at large tilt.

    With ``w(alpha) = ((1 - cos 3(alpha - wheel_alphas[0])) / 2) ** sharpness``
    (0 along a wheel direction, 1 midway between two wheels) the thresholds are

        beta_full(alpha) = beta_full_on + (beta_full_off - beta_full_on) * w
        beta_zero(alpha) = beta_zero_on + (beta_zero_off - beta_zero_on) * w

    and the effectiveness falls from 1 to 0 between them along a half cosine:
    ``e = (1 + cos(pi * s)) / 2`` with ``s`` the clipped fractional position of
    beta inside ``[beta_full, beta_zero]``.
    """

    beta_full_on: float = math.radians(6.0)
    beta_full_off: float = math.radians(10.0)
    beta_zero_on: float = math.radians(9.0)
    beta_zero_off: float = math.radians(14.0)
    wheel_alphas: tuple = _deg3(90.0, 210.0, 330.0)
    sharpness: float = 2.0

    def __post_init__(self):
        if not (0 < self.beta_full_on < self.beta_zero_on and 0 < self.beta_full_off < self.beta_zero_off):
            raise ValueError("need 0 < beta_full < beta_zero both on and off the wheel directions")
        if len(self.wheel_alphas) != 3:
            raise ValueError("exactly three wheel directions are required")
        w = self.wheel_alphas
        for i in range(3):
            gap = (w[(i + 1) % 3] - w[i]) % TWO_PI
            if abs(gap - TWO_PI / 3) > 1e-12:
                raise ValueError("wheel directions must be 120 degrees apart")
        if self.sharpness <= 0:
            raise ValueError("sharpness must be > 0")

    def direction_weight(self, alpha):
        return ((1.0 - np.cos(3.0 * (alpha - self.wheel_alphas[0]))) * 0.5) ** self.sharpness

    def beta_full(self, alpha):
        return self.beta_full_on + (self.beta_full_off - self.beta_full_on) * self.direction_weight(alpha)

    def beta_zero(self, alpha):
        return self.beta_zero_on + (self.beta_zero_off - self.beta_zero_on) * self.direction_weight(alpha)


def effectiveness_arrays(env: ContactEnvelope, alpha, beta):
    w = env.direction_weight(alpha)
    lo = env.beta_full_on + (env.beta_full_off - env.beta_full_on) * w
    hi = env.beta_zero_on + (env.beta_zero_off - env.beta_zero_on) * w
    s = np.clip((beta - lo) / (hi - lo), 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * s))


def actuation_effectiveness(env: ContactEnvelope, att: BodyAttitude) -> float:
    return float(effectiveness_arrays(env, att.alpha, att.beta))


def wheel_matrix(wheel_alphas) -> np.ndarray:
    """3x2 map from virtual (v_x, v_y) to motor speeds."""
    a = np.asarray(wheel_alphas, dtype=float)
    return np.stack([np.cos(a), np.sin(a)], -1)


def virtual_to_wheel_speeds(v_x, v_y, wheel_alphas=ContactEnvelope.wheel_alphas) -> np.ndarray:
    return wheel_matrix(wheel_alphas) @ np.array([v_x, v_y], dtype=float)


# --------------------------------------------------------------------------
# integration


def rk4(p: PhysicalParams, x: np.ndarray, tau, dt: float) -> np.ndarray:
    """Classical RK4 on stacked planar states with zero-order-hold torque."""
    k1 = state_derivative(p, x, tau)
    k2 = state_derivative(p, x + (0.5 * dt) * k1, tau)
    k3 = state_derivative(p, x + (0.5 * dt) * k2, tau)
    k4 = state_derivative(p, x + dt * k3, tau)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(p: PhysicalParams, s: PlanarState, tau: float, dt: float) -> PlanarState:
    if not (0.0 < dt <= 0.05):
        raise ValueError(f"dt must lie in (0, 0.05], got {dt!r}")
    with np.errstate(invalid="ignore", over="ignore"):
        x = rk4(p, np.asarray(s, dtype=float), tau, dt)
    if not np.all(np.isfinite(x)):
        raise NonFinite(f"non-finite state after step: {x}")
    return PlanarState(*map(float, x))


# --------------------------------------------------------------------------
# episodes


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon: float = 5.0
    beta_fall: float = math.radians(25.0)
    beta_success: float = math.radians(1.0)
    t_hold: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.dt <= 0.05):
            raise ValueError("dt must lie in (0, 0.05]")
        if self.horizon <= 0 or self.t_hold < 0:
            raise ValueError("horizon must be > 0 and t_hold >= 0")
        if not (0 < self.beta_success < self.beta_fall < math.pi / 2):
            raise ValueError("need 0 < beta_success < beta_fall < pi/2")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def hold_steps(self) -> int:
        return int(round(self.t_hold / self.dt))


@dataclass(frozen=True)
class BallbotState3D:
    sagittal: PlanarState = PlanarState()
    coronal: PlanarState = PlanarState()
    t: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.sagittal, self.coronal], dtype=float)

    @property
    def attitude(self) -> BodyAttitude:
        return planar_to_tilt(self.sagittal.lean, self.coronal.lean)


CONTINUE, FALLEN, RECOVERED = 0, 1, 2
STATUS_NAMES = {CONTINUE: "continue", FALLEN: "fallen", RECOVERED: "recovered"}


class EpisodeMonitor:
    """Fall detection and the recovery hold timer for a batch of episodes.

    An episode has fallen once beta exceeds ``beta_fall``; it has recovered
    once beta stayed below ``beta_success`` for ``t_hold`` seconds in a row.
    """

    def __init__(self, cfg: SimConfig, n: int = 1):
        self.cfg = cfg
        self.hold = np.zeros(n, dtype=np.int64)

    def update(self, beta, idx=None):
        beta = np.asarray(beta, dtype=float)
        if idx is None:
            idx = np.arange(beta.size)
        inside = beta.reshape(-1) < self.cfg.beta_success
        hold = np.where(inside, self.hold[idx] + 1, 0)
        self.hold[idx] = hold
        status = np.full(beta.size, CONTINUE, dtype=np.int64)
        # the state at step k has been inside for hold-1 step intervals
        status[(hold - 1) >= self.cfg.hold_steps] = RECOVERED
        status[beta.reshape(-1) > self.cfg.beta_fall] = FALLEN
        return status


class Command(NamedTuple):
    u: np.ndarray  # torque actually requested, (m, 2)
    u_fb: np.ndarray
    u_rl: np.ndarray


class FunctionController:
    """Adapter turning ``f(x) -> torque`` on (m, 2, 4) states into a controller."""

    def __init__(self, fn):
        self.fn = fn

    def reset(self, n, seeds=None):
        pass

    def command(self, step, x, idx):
        u = np.asarray(self.fn(x), dtype=float).reshape(x.shape[0], 2)
        z = np.zeros_like(u)
        return Command(u, u, z)


def zero_controller():
    return FunctionController(lambda x: np.zeros((x.shape[0], 2)))


def _as_controller(c):
    if hasattr(c, "command"):
        return c
    return FunctionController(c)


def initial_states(alpha, beta) -> np.ndarray:
    """Static initial states (zero rates, zero ball angle) for tilts (alpha, beta)."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    z = np.stack([np.sin(beta) * np.cos(alpha), np.sin(beta) * np.sin(alpha), np.cos(beta)], -1)
    x = np.zeros((alpha.size, 2, 4))
    x[:, 0, 1] = np.arctan2(z[:, 0], z[:, 2])
    x[:, 1, 1] = np.arctan2(z[:, 1], z[:, 2])
    return x


@dataclass
class BatchResult:
    status: np.ndarray  # final status code per episode
    end_step: np.ndarray  # step index at which the episode ended
    max_beta: np.ndarray
    final_x: np.ndarray
    error: list = field(default_factory=list)  # per-episode error text or ""

    @property
    def recovered(self):
        return self.status == RECOVERED


LOG_COLUMNS = ("t", "phi_x", "phi_y", "dphi_x", "dphi_y", "beta_deg",
               "w1", "w2", "w3", "u_fb_x", "u_fb_y", "u_rl_x", "u_rl_y")


def simulate(p: PhysicalParams, cfg: SimConfig, env: ContactEnvelope, controller, x0,
             seeds=None, stop_on_recovery=True, record=False, effectiveness=True):
    """Advance a batch of episodes from initial states ``x0`` of shape (n, 2, 4).

    Episodes end on a fall, on a completed recovery hold (if
    ``stop_on_recovery``) or at the horizon.  With ``stop_on_recovery`` false
    the hold timer keeps running and the status at the horizon tells whether
    the last ``t_hold`` seconds were spent inside the success band.

    Returns a :class:`BatchResult` and, if ``record``, a list of per-episode
    row lists in :data:`LOG_COLUMNS` order.
    """
    controller = _as_controller(controller)
    x = np.array(x0, dtype=float).reshape(-1, 2, 4)
    n = x.shape[0]
    controller.reset(n, seeds)
    monitor = EpisodeMonitor(cfg, n)
    status = np.full(n, CONTINUE, dtype=np.int64)
    end_step = np.full(n, cfg.n_steps, dtype=np.int64)
    max_beta = np.zeros(n)
    errors = [""] * n
    active = np.arange(n)
    rows = [[] for _ in range(n)] if record else None
    wheels = wheel_matrix(env.wheel_alphas)
    dt = cfg.dt

    for k in range(cfg.n_steps + 1):
        xa = x[active]
        lean = xa[:, :, 0] + xa[:, :, 1]
        alpha, beta, _ = tilt_arrays(lean[:, 0], lean[:, 1])
        max_beta[active] = np.maximum(max_beta[active], beta)
        st = monitor.update(beta, active)
        done = st == FALLEN
        if stop_on_recovery:
            done |= st == RECOVERED
        if k == cfg.n_steps:
            status[active] = st
            if record:
                for j, i in enumerate(active):
                    rows[i].append(_row(k * dt, xa[j], beta[j], wheels, None, j))
            break
        if np.any(done):
            status[active[done]] = st[done]
            end_step[active[done]] = k
            if record:
                for j in np.flatnonzero(done):
                    rows[active[j]].append(_row(k * dt, xa[j], beta[j], wheels, None, j))
            keep = ~done
            active, xa, alpha, beta = active[keep], xa[keep], alpha[keep], beta[keep]
            if active.size == 0:
                break
        cmd = controller.command(k, xa, active)
        u = cmd.u
        if effectiveness:
            u = u * effectiveness_arrays(env, alpha, beta)[:, None]
        if record:
            for j, i in enumerate(active):
                rows[i].append(_row(k * dt, xa[j], beta[j], wheels, cmd, j))
        with np.errstate(invalid="ignore", over="ignore"):
            xn = rk4(p, xa, u, dt)
        bad = ~np.all(np.isfinite(xn), axis=(1, 2))
        if np.any(bad):
            for j in np.flatnonzero(bad):
                i = active[j]
                errors[i] = f"NonFinite: state diverged at t={k * dt:.6g}"
                status[i] = FALLEN
                end_step[i] = k
            xn = xn[~bad]
            active = active[~bad]
            x[active] = xn
            if active.size == 0:
                break
        else:
            x[active] = xn
    return BatchResult(status, end_step, max_beta, x, errors), rows


def _row(t, xa, beta, wheels, cmd, j):
    lean = xa[:, 0] + xa[:, 1]
    rate = xa[:, 2] + xa[:, 3]
    # motors turn with the ball relative to the body, i.e. at -phi'
    w = wheels @ (-xa[:, 3])
    if cmd is None:
        u_fb = u_rl = (0.0, 0.0)
    else:
        u_fb, u_rl = cmd.u_fb[j], cmd.u_rl[j]
    return (t, lean[0], lean[1], rate[0], rate[1], math.degrees(beta),
            w[0], w[1], w[2], u_fb[0], u_fb[1], u_rl[0], u_rl[1])


@dataclass
class EpisodeLog:
    rows: list
    status: str
    recovered: bool
    end_time: float
    max_beta: float
    error: str = ""

    @property
    def fallen(self):
        return self.status == "fallen"

    def column(self, name) -> np.ndarray:
        i = LOG_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in self.rows:
            w.writerow([repr(float(v)) for v in r])
        return buf.getvalue()

    @staticmethod
    def rows_from_csv(text: str) -> list:
        rd = csv.reader(io.StringIO(text))
        header = next(rd)
        if tuple(header) != LOG_COLUMNS:
            raise ValueError(f"unexpected header {header}")
        return [tuple(float(v) for v in r) for r in rd]


def run_episode(p: PhysicalParams, cfg: SimConfig, env: ContactEnvelope, controller,
                initial: BodyAttitude, rng_seed: int = 0, stop_on_recovery=False) -> EpisodeLog:
    """Single logged rollout from a static tilt."""
    x0 = initial_states(initial.alpha, initial.beta)
    res, rows = simulate(p, cfg, env, controller, x0, seeds=[rng_seed],
                         stop_on_recovery=stop_on_recovery, record=True)
    code = int(res.status[0])
    return EpisodeLog(rows=rows[0], status=STATUS_NAMES[code], recovered=code == RECOVERED,
                      end_time=float(res.end_step[0] * cfg.dt), max_beta=float(res.max_beta[0]),
                      error=res.error[0])
