"""Hybrid backstepping / hysteresis stabilization toolkit."""

__version__ = "0.1.0"
