"""Cooperative transport of a flexible strip by two aerial vehicles.

Quasi-static elastica model of the strip, online estimation of its endpoint
forces, adaptive and PID tracking controllers, reference trajectories and a
closed-loop simulator.
"""

from . import control, estimator, geom, rod, trajectory
from .errors import FlexliftError

__all__ = ["control", "estimator", "geom", "rod", "trajectory", "FlexliftError"]
__version__ = "0.1.0"
