"""Ballbot balance control: planar dynamics, LQR, DDPG and a compound controller."""

__version__ = "0.1.0"
