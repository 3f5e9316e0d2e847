from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..errors import ShapeMismatch


class Transition(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


class Batch(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    @property
    def size(self) -> int:
        return self.r.shape[0]


class ReplayBuffer:
    """Fixed-capacity ring buffer; once full, each insert overwrites the oldest item."""

    def __init__(self, capacity, obs_dim, act_dim):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros((capacity, act_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s_next, done):
        s = np.asarray(s, dtype=float).reshape(-1)
        a = np.asarray(a, dtype=float).reshape(-1)
        s_next = np.asarray(s_next, dtype=float).reshape(-1)
        if s.size != self.obs_dim or s_next.size != self.obs_dim or a.size != self.act_dim:
            raise ShapeMismatch("transition dimensions do not match the buffer")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(a)) and np.isfinite(r)
                and np.all(np.isfinite(s_next))):
            raise ValueError("transition contains non-finite values")
        i = self.cursor
        self.s[i], self.a[i], self.r[i], self.s_next[i], self.done[i] = s, a, r, s_next, float(done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def items(self):
        """Stored transitions from oldest to newest."""
        start = self.cursor if self.size == self.capacity else 0
        order = (start + np.arange(self.size)) % self.capacity
        return [Transition(self.s[i].copy(), self.a[i].copy(), float(self.r[i]),
                           self.s_next[i].copy(), bool(self.done[i])) for i in order]

    def sample(self, n, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=n)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx])
