"""Exploration noise processes (one sample per agent decision)."""
from __future__ import annotations

import numpy as np


class OUNoise:
    """Ornstein-Uhlenbeck process dx = theta (mu - x) dt + sigma dW.

    Sampled with the exact discretisation over one unit-length decision step,
    so the stationary law is N(mu, sigma^2 / (2 theta)) for any theta.
    """

    def __init__(self, size, rng: np.random.Generator, theta=0.15, sigma=0.2, mu=0.0):
        if theta <= 0 or sigma < 0:
            raise ValueError("need theta > 0 and sigma >= 0")
        self.size = size
        self.rng = rng
        self.theta = theta
        self.sigma = sigma
        self.mu = mu
        self.decay = np.exp(-theta)
        self.step_std = sigma * np.sqrt((1.0 - np.exp(-2.0 * theta)) / (2.0 * theta))
        self.x = np.full(size, float(mu))

    def reset(self):
        self.x = np.full(self.size, float(self.mu))

    def sample(self):
        eps = self.rng.standard_normal(self.size)
        self.x = self.mu + (self.x - self.mu) * self.decay + self.step_std * eps
        return self.x.copy()


class GaussianNoise:
    def __init__(self, size, rng: np.random.Generator, sigma=0.2):
        self.size = size
        self.rng = rng
        self.sigma = sigma

    def reset(self):
        pass

    def sample(self):
        return self.sigma * self.rng.standard_normal(self.size)
