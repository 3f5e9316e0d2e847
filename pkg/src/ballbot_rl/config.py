"""Flat ``key = value`` configuration files.

One file holds every setting.  Lines are ``key = value``; ``#`` starts a
comment; lists are comma separated.  Keys ending in ``_deg`` are angles given
in degrees and stored in radians.  Missing keys take their defaults, unknown
keys are an error.  The full key reference is in the README and in
``data/default.cfg``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .compound import ActionLimits, CompoundConfig
from .ddpg.agent import DdpgHyper
from .dynamics import PhysicalParams
from .errors import ConfigError
from .linctl import LqrWeights
from .sim import ContactEnvelope, SimConfig


@dataclass(frozen=True)
class GridConfig:
    alpha_start: float = 0.0
    alpha_stop: float = math.radians(360.0)  # exclusive
    alpha_step: float = math.radians(10.0)
    beta_min: float = math.radians(1.0)
    beta_max: float = math.radians(15.0)  # inclusive
    beta_step: float = math.radians(0.5)

    def alphas_deg(self):
        a0, a1, da = (round(math.degrees(v), 9) for v in (self.alpha_start, self.alpha_stop, self.alpha_step))
        n = int(math.floor((a1 - a0) / da - 1e-9)) + 1
        return [round(a0 + i * da, 9) for i in range(max(n, 0))]

    def betas_deg(self):
        b0, b1, db = (round(math.degrees(v), 9) for v in (self.beta_min, self.beta_max, self.beta_step))
        n = int(math.floor((b1 - b0) / db + 1e-9)) + 1
        return [round(b0 + i * db, 9) for i in range(max(n, 0))]


@dataclass(frozen=True)
class Config:
    physical: PhysicalParams = PhysicalParams()
    sim: SimConfig = SimConfig()
    envelope: ContactEnvelope = ContactEnvelope()
    lqr: LqrWeights = LqrWeights()
    design_method: str = "lqr"  # or "poles"
    poles: tuple = (-3.0, -4.0, -5.0, -6.0)
    gain_k: tuple = ()  # explicit gain overrides the design when non-empty
    limits: ActionLimits = ActionLimits()
    compound: CompoundConfig = CompoundConfig()
    ddpg: DdpgHyper = DdpgHyper()
    grid: GridConfig = GridConfig()
    seed: int = 0
    train_episodes: int = 1000


# key, section (None = top level), attribute, kind
_KEYS = [(k, "physical", k, "float") for k in PhysicalParams.keys()] + [
    ("dt", "sim", "dt", "float"),
    ("horizon", "sim", "horizon", "float"),
    ("beta_fall_deg", "sim", "beta_fall", "deg"),
    ("beta_success_deg", "sim", "beta_success", "deg"),
    ("t_hold", "sim", "t_hold", "float"),
    ("beta_full_on_deg", "envelope", "beta_full_on", "deg"),
    ("beta_full_off_deg", "envelope", "beta_full_off", "deg"),
    ("beta_zero_on_deg", "envelope", "beta_zero_on", "deg"),
    ("beta_zero_off_deg", "envelope", "beta_zero_off", "deg"),
    ("wheel_alphas_deg", "envelope", "wheel_alphas", "deg_list"),
    ("sharpness", "envelope", "sharpness", "float"),
    ("lqr_q", "lqr", "q_diag", "float_list"),
    ("lqr_r", "lqr", "r", "float"),
    ("design_method", None, "design_method", "str"),
    ("poles", None, "poles", "complex_list"),
    ("gain_k", None, "gain_k", "float_list"),
    ("u_max", "limits", "u_max", "float"),
    ("rl_amplitude", "limits", "amplitude", "float"),
    ("rl_period", "compound", "rl_period", "float"),
    ("band_below_deg", "compound", "band_below", "deg"),
    ("band_above_deg", "compound", "band_above", "deg"),
    ("gate_lo_deg", "compound", "gate_lo", "deg"),
    ("gate_hi_deg", "compound", "gate_hi", "deg"),
    ("actor_lr", "ddpg", "actor_lr", "float"),
    ("critic_lr", "ddpg", "critic_lr", "float"),
    ("weight_decay", "ddpg", "weight_decay", "float"),
    ("minibatch", "ddpg", "minibatch", "int"),
    ("buffer_capacity", "ddpg", "buffer_capacity", "int"),
    ("gamma", "ddpg", "gamma", "float"),
    ("tau_soft", "ddpg", "tau_soft", "float"),
    ("reward_c", "ddpg", "reward_c", "float"),
    ("hidden_sizes", "ddpg", "hidden_sizes", "int_list"),
    ("noise_type", "ddpg", "noise_type", "str"),
    ("ou_theta", "ddpg", "ou_theta", "float"),
    ("ou_sigma", "ddpg", "ou_sigma", "float"),
    ("gauss_sigma", "ddpg", "gauss_sigma", "float"),
    ("final_layer_scale", "ddpg", "final_layer_scale", "float"),
    ("grid_alpha_start_deg", "grid", "alpha_start", "deg"),
    ("grid_alpha_stop_deg", "grid", "alpha_stop", "deg"),
    ("grid_alpha_step_deg", "grid", "alpha_step", "deg"),
    ("grid_beta_min_deg", "grid", "beta_min", "deg"),
    ("grid_beta_max_deg", "grid", "beta_max", "deg"),
    ("grid_beta_step_deg", "grid", "beta_step", "deg"),
    ("seed", None, "seed", "int"),
    ("train_episodes", None, "train_episodes", "int"),
]
KEY_NAMES = [k for k, *_ in _KEYS]


def _fmt_float(v) -> str:
    return repr(float(v))


def _fmt_deg(v) -> str:
    return repr(float(f"{math.degrees(v):.12g}"))


def _format(kind, v) -> str:
    if kind == "float":
        return _fmt_float(v)
    if kind == "int":
        return str(int(v))
    if kind == "str":
        return str(v)
    if kind == "deg":
        return _fmt_deg(v)
    if kind == "deg_list":
        return ", ".join(_fmt_deg(x) for x in v)
    if kind == "float_list":
        return ", ".join(_fmt_float(x) for x in v)
    if kind == "int_list":
        return ", ".join(str(int(x)) for x in v)
    if kind == "complex_list":
        return ", ".join(_fmt_float(x.real) if complex(x).imag == 0 else
                         str(complex(x)).strip("()") for x in v)
    raise AssertionError(kind)


def _parse(kind, text, key):
    text = text.strip()
    try:
        if kind == "float":
            return float(text)
        if kind == "int":
            return int(text)
        if kind == "str":
            return text
        if kind == "deg":
            return math.radians(float(text))
        items = [t.strip() for t in text.split(",") if t.strip()]
        if kind == "deg_list":
            return tuple(math.radians(float(t)) for t in items)
        if kind == "float_list":
            return tuple(float(t) for t in items)
        if kind == "int_list":
            return tuple(int(t) for t in items)
        if kind == "complex_list":
            vals = [complex(t.replace(" ", "")) for t in items]
            return tuple(v.real if v.imag == 0 else v for v in vals)
    except ValueError as e:
        raise ConfigError(f"{key}: cannot parse {text!r} ({e})") from None
    raise AssertionError(kind)


def read_flat(text: str) -> dict:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value
    return out


def to_mapping(cfg: Config) -> dict:
    out = {}
    for key, section, attr, kind in _KEYS:
        obj = cfg if section is None else getattr(cfg, section)
        out[key] = _format(kind, getattr(obj, attr))
    return out


_SECTION_TITLES = {
    "physical": "physical parameters (SI units)",
    "sim": "simulation and episode termination",
    "envelope": "contact envelope (actuation effectiveness vs tilt)",
    "lqr": "linear feedback design",
    "limits": "actuation limits",
    "compound": "compound controller and training band",
    "ddpg": "DDPG hyperparameters",
    "grid": "recovery sweep grid (alpha stop is exclusive, beta max inclusive)",
}


def dumps(cfg: Config, comments: bool = True) -> str:
    lines = []
    current = None
    values = to_mapping(cfg)
    for key, section, _, _ in _KEYS:
        title = _SECTION_TITLES.get(section) if section else ("run" if key == "seed" else None)
        if comments and title and section != current:
            lines.append(("\n" if lines else "") + f"# {title}")
            current = section
        lines.append(f"{key} = {values[key]}")
    return "\n".join(lines) + "\n"


def from_mapping(values: dict, base: Config | None = None) -> Config:
    base = base or Config()
    unknown = sorted(set(values) - set(KEY_NAMES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    section_updates: dict = {}
    top = {}
    for key, section, attr, kind in _KEYS:
        if key not in values:
            continue
        v = _parse(kind, values[key], key)
        if section is None:
            top[attr] = v
        else:
            section_updates.setdefault(section, {})[attr] = v
    try:
        for section, upd in section_updates.items():
            top[section] = replace(getattr(base, section), **upd)
        cfg = replace(base, **top)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    if cfg.design_method not in ("lqr", "poles"):
        raise ConfigError(f"design_method must be 'lqr' or 'poles', got {cfg.design_method!r}")
    if cfg.gain_k and len(cfg.gain_k) != 4:
        raise ConfigError("gain_k needs exactly four entries")
    if cfg.train_episodes < 0:
        raise ConfigError("train_episodes must be >= 0")
    return cfg


def loads(text: str, base: Config | None = None) -> Config:
    return from_mapping(read_flat(text), base)


def load_config(path=None) -> Config:
    """Read a config file; ``None`` gives the built-in defaults."""
    if path is None:
        return Config()
    return loads(Path(path).read_text())


def default_config_text() -> str:
    return resources.files("ballbot_rl").joinpath("data/default.cfg").read_text()


def load_physical_params(path) -> PhysicalParams:
    return load_config(path).physical


def gains_to_text(k) -> str:
    return f"gain_k = {_format('float_list', k)}\n"


def design_gain(cfg: Config):
    """Gain vector per the configured design path (explicit, LQR or pole placement)."""
    from .dynamics import linearize
    from .linctl import GainVector, design_lqr, design_pole_placement

    if cfg.gain_k:
        return GainVector(cfg.gain_k)
    model = linearize(cfg.physical)
    if cfg.design_method == "poles":
        return design_pole_placement(model, np.array(cfg.poles, dtype=complex))
    return design_lqr(model, cfg.lqr)
