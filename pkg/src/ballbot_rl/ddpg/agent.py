"""DDPG learner: actor/critic updates, soft target tracking and the training loop."""
from __future__ import annotations

import base64
import json
import logging
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np

from ..errors import NonFiniteLoss, ShapeMismatch
from .mlp import Adam, MlpWeights, backward, forward, init_uniform
from .noise import GaussianNoise, OUNoise
from .replay import Batch, ReplayBuffer

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "ballbot-ddpg-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class DdpgHyper:
    actor_lr: float = 1e-4
    critic_lr: float = 1e-4
    weight_decay: float = 1e-5
    minibatch: int = 128
    buffer_capacity: int = 50000
    gamma: float = 0.99
    tau_soft: float = 0.005
    reward_c: float = 0.7
    hidden_sizes: tuple = (64, 64)
    noise_type: str = "ou"
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    gauss_sigma: float = 0.2
    final_layer_scale: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.minibatch < 1 or self.buffer_capacity < 1 or min(self.hidden_sizes, default=1) < 1:
            raise ValueError("sizes and capacities must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < self.tau_soft <= 1.0:
            raise ValueError("tau_soft must lie in (0, 1]")
        if self.actor_lr < 0 or self.critic_lr < 0 or self.weight_decay < 0:
            raise ValueError("learning rates and weight decay must be >= 0")
        if self.noise_type not in ("ou", "gaussian"):
            raise ValueError(f"unknown noise type {self.noise_type!r}")


def actor_forward(actor: MlpWeights, s) -> np.ndarray:
    """Deterministic policy output in [-1, 1]^act_dim."""
    return forward(actor, s)


def critic_forward(critic: MlpWeights, s, a) -> np.ndarray:
    s = np.atleast_2d(np.asarray(s, dtype=float))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if s.shape[0] != a.shape[0] or s.shape[1] + a.shape[1] != critic.in_dim:
        raise ShapeMismatch("state/action widths do not match the critic input")
    return forward(critic, np.concatenate([s, a], axis=1))[:, 0]


def td_targets(critic_t: MlpWeights, actor_t: MlpWeights, batch: Batch, gamma) -> np.ndarray:
    q_next = critic_forward(critic_t, batch.s_next, actor_forward(actor_t, batch.s_next))
    return batch.r + gamma * (1.0 - batch.done) * q_next


def critic_loss_grad(critic: MlpWeights, batch: Batch, y):
    """Mean squared TD error and its gradient w.r.t. the critic parameters."""
    x = np.concatenate([batch.s, batch.a], axis=1)
    q, cache = forward(critic, x, keep_cache=True)
    err = q[:, 0] - y
    n = err.shape[0]
    loss = float(np.mean(err * err))
    grad, _ = backward(critic, cache, (2.0 / n) * err[:, None])
    return loss, grad


def actor_objective_grad(actor: MlpWeights, critic: MlpWeights, s):
    """J = mean Q(s, mu(s)) and dJ/d(actor params), by the chain rule through the action."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    n = s.shape[0]
    a, a_cache = forward(actor, s, keep_cache=True)
    q, q_cache = forward(critic, np.concatenate([s, a], axis=1), keep_cache=True)
    _, dx = backward(critic, q_cache, np.full((n, 1), 1.0 / n))
    dq_da = dx[:, s.shape[1]:]
    grad, _ = backward(actor, a_cache, dq_da)
    return float(np.mean(q)), grad


def critic_update(critic: MlpWeights, targets, batch: Batch, gamma, opt: Adam) -> float:
    """One Adam step on the TD loss; ``targets`` is (critic_target, actor_target)."""
    critic_t, actor_t = targets
    y = td_targets(critic_t, actor_t, batch, gamma)
    loss, grad = critic_loss_grad(critic, batch, y)
    if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
        raise NonFiniteLoss(f"critic loss {loss}")
    opt.step(critic, grad)
    return loss


def actor_update(actor: MlpWeights, critic: MlpWeights, batch: Batch, opt: Adam) -> float:
    """One Adam ascent step on mean Q(s, mu(s)); the critic is left untouched."""
    obj, grad = actor_objective_grad(actor, critic, batch.s)
    if not (np.isfinite(obj) and np.all(np.isfinite(grad))):
        raise NonFiniteLoss(f"actor objective {obj}")
    opt.step(actor, -grad)
    return obj


def soft_update(target: MlpWeights, online: MlpWeights, tau_soft) -> MlpWeights:
    if target.sizes != online.sizes:
        raise ShapeMismatch("target and online networks differ in shape")
    if tau_soft == 1.0:
        target.flat[:] = online.flat
    elif tau_soft != 0.0:
        target.flat *= 1.0 - tau_soft
        target.flat += tau_soft * online.flat
    return target


def select_action(actor: MlpWeights, s, noise):
    """Noisy action clipped to [-1, 1]; returns the action and the advanced noise process."""
    a = actor_forward(actor, s)[0]
    if noise is not None:
        a = a + noise.sample()
    return np.clip(a, -1.0, 1.0), noise


class Agent:
    """Online and target networks, optimisers, replay buffer and random streams."""

    def __init__(self, obs_dim, act_dim, hyper: DdpgHyper, seed=0):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hyper = hyper
        self.seed = int(seed)
        ss = np.random.SeedSequence(self.seed)
        init_ss, noise_ss, sample_ss, env_ss = ss.spawn(4)
        init_rng = np.random.default_rng(init_ss)
        self.noise_rng = np.random.default_rng(noise_ss)
        self.sample_rng = np.random.default_rng(sample_ss)
        self.env_rng = np.random.default_rng(env_ss)
        h = hyper.hidden_sizes
        self.actor = init_uniform(MlpWeights((obs_dim, *h, act_dim), out_tanh=True), init_rng,
                                  final_scale=hyper.final_layer_scale)
        self.critic = init_uniform(MlpWeights((obs_dim + act_dim, *h, 1)), init_rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(hyper.actor_lr, hyper.weight_decay)
        self.critic_opt = Adam(hyper.critic_lr, hyper.weight_decay)
        self.buffer = ReplayBuffer(hyper.buffer_capacity, obs_dim, act_dim)
        if hyper.noise_type == "ou":
            self.noise = OUNoise(act_dim, self.noise_rng, hyper.ou_theta, hyper.ou_sigma)
        else:
            self.noise = GaussianNoise(act_dim, self.noise_rng, hyper.gauss_sigma)

    def act(self, s, explore=True):
        a, _ = select_action(self.actor, s, self.noise if explore else None)
        return a

    def learn(self):
        """Sample a minibatch and apply the critic, actor and target updates."""
        hp = self.hyper
        batch = self.buffer.sample(hp.minibatch, self.sample_rng)
        loss = critic_update(self.critic, (self.critic_target, self.actor_target), batch,
                             hp.gamma, self.critic_opt)
        obj = actor_update(self.actor, self.critic, batch, self.actor_opt)
        soft_update(self.critic_target, self.critic, hp.tau_soft)
        soft_update(self.actor_target, self.actor, hp.tau_soft)
        return loss, obj

    # -- persistence ---------------------------------------------------------

    def to_record(self, extra=None) -> dict:
        nets = {}
        for name in ("actor", "critic", "actor_target", "critic_target"):
            w = getattr(self, name)
            nets[name] = {
                "sizes": list(w.sizes),
                "out_tanh": w.out_tanh,
                "params": _b64(w.flat),
                "adam_m": _b64(w.adam_m),
                "adam_v": _b64(w.adam_v),
                "adam_t": w.adam_t,
            }
        hyper = asdict(self.hyper)
        hyper["hidden_sizes"] = list(self.hyper.hidden_sizes)
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "dtype": "float64-le",
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "seed": self.seed,
            "hyper": hyper,
            "networks": nets,
            "rng": {name: getattr(self, name).bit_generator.state
                    for name in ("noise_rng", "sample_rng", "env_rng")},
            "noise_state": _b64(getattr(self.noise, "x", np.zeros(self.act_dim))),
            "extra": extra or {},
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Agent":
        if rec.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a ddpg checkpoint")
        if rec.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {rec.get('version')}")
        known = {f.name for f in fields(DdpgHyper)}
        hyper = DdpgHyper(**{k: v for k, v in rec["hyper"].items() if k in known})
        agent = cls(rec["obs_dim"], rec["act_dim"], hyper, rec["seed"])
        for name, d in rec["networks"].items():
            w = getattr(agent, name)
            if list(w.sizes) != d["sizes"]:
                raise ShapeMismatch(f"{name}: layer sizes {d['sizes']} differ from {list(w.sizes)}")
            w.set_flat(_unb64(d["params"]))
            w.adam_m = _unb64(d["adam_m"])
            w.adam_v = _unb64(d["adam_v"])
            w.adam_t = int(d["adam_t"])
        for name, state in rec["rng"].items():
            getattr(agent, name).bit_generator.state = state
        if hasattr(agent.noise, "x"):
            agent.noise.x = _unb64(rec["noise_state"])
        return agent


def _b64(arr) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _unb64(text) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype="<f8").copy()


def save_checkpoint(agent: Agent, path, extra=None):
    with open(path, "w") as f:
        json.dump(agent.to_record(extra), f, indent=1, sort_keys=True)
        f.write("\n")


def load_checkpoint(path) -> Agent:
    with open(path) as f:
        return Agent.from_record(json.load(f))


class CurveRow(NamedTuple):
    episode: int
    ret: float
    steps: int
    critic_loss: float
    actor_objective: float


CURVE_HEADER = ("episode", "return", "steps", "critic_loss_mean", "actor_objective_mean")


def train(env, hyper: DdpgHyper, seed, episodes, agent=None, callback=None):
    """Run the DDPG loop for ``episodes`` episodes.

    ``env`` provides ``obs_dim``, ``act_dim``, ``reset(rng) -> obs`` and
    ``step(action) -> (obs, reward, done, truncated)``; ``done`` marks a
    terminal transition (no bootstrap).  Gradient updates start once the
    buffer holds a full minibatch.  Returns ``(agent, curve)``.
    """
    if agent is None:
        agent = Agent(env.obs_dim, env.act_dim, hyper, seed)
    curve = []
    for ep in range(1, episodes + 1):
        agent.noise.reset()
        s = env.reset(agent.env_rng)
        ret = 0.0
        steps = 0
        losses, objs = [], []
        while True:
            a = agent.act(s)
            s2, r, done, truncated = env.step(a)
            agent.buffer.add(s, a, r, s2, done)
            ret += r
            steps += 1
            if len(agent.buffer) >= hyper.minibatch:
                loss, obj = agent.learn()
                losses.append(loss)
                objs.append(obj)
            s = s2
            if done or truncated:
                break
        row = CurveRow(ep, ret, steps, float(np.mean(losses)) if losses else float("nan"),
                       float(np.mean(objs)) if objs else float("nan"))
        curve.append(row)
        log.debug("episode %d return %.4f steps %d", ep, ret, steps)
        if callback is not None:
            callback(agent, row)
    return agent, curve
