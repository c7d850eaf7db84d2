"""Planar rolling-robot kinematics.

Positions are in micrometers, time in seconds and the Cartesian control
``u`` in Hz, so that ``u = f * (cos(alpha), sin(alpha))`` with rotation
frequency ``f`` and heading ``alpha``.  The effective radius ``a0`` maps Hz
to micrometers per second.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi


class PolarControl(NamedTuple):
    freq: float
    heading: float


@dataclass(frozen=True)
class ModelParams:
    a0: float
    dt: float

    def __post_init__(self):
        if not self.a0 > 0:
            raise ValueError(f"a0 must be positive, got {self.a0}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")


def wrap_angle(alpha):
    """Map angles onto [0, 2*pi)."""
    # np.mod returns exactly 2*pi for tiny negative inputs
    a = np.mod(alpha, TWO_PI)
    a = np.where(a >= TWO_PI, 0.0, a)
    return float(a) if a.ndim == 0 else a


def polar_to_u(pc) -> np.ndarray:
    freq, heading = pc
    if freq < 0:
        raise ValueError(f"frequency must be non-negative, got {freq}")
    return np.array([freq * math.cos(heading), freq * math.sin(heading)])


def u_to_polar(u) -> PolarControl:
    ux, uy = float(u[0]), float(u[1])
    freq = math.hypot(ux, uy)
    if freq == 0.0:
        return PolarControl(0.0, 0.0)
    return PolarControl(freq, wrap_angle(math.atan2(uy, ux)))


def u_to_polar_batch(U) -> np.ndarray:
    """Rows of (alpha, f) for an n x 2 array of controls."""
    U = np.asarray(U, dtype=float)
    freq = np.hypot(U[:, 0], U[:, 1])
    heading = wrap_angle(np.arctan2(U[:, 1], U[:, 0]))
    heading = np.where(freq == 0.0, 0.0, heading)
    return np.column_stack([heading, freq])


def velocity(u, D, a0: float) -> np.ndarray:
    """Continuous-time rate ``a0 * u + D``."""
    return a0 * np.asarray(u, dtype=float) + np.asarray(D, dtype=float)


def step(p, u, D, params: ModelParams) -> np.ndarray:
    """One explicit step ``p + a0*dt*u + D*dt``."""
    p = np.asarray(p, dtype=float)
    return p + params.a0 * params.dt * np.asarray(u, dtype=float) + np.asarray(D, dtype=float) * params.dt
