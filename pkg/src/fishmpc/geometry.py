"""Planar frame utilities.

Angles are in radians wrapped to (-pi, pi], lengths in mm, velocities in
mm/s.  A *local* quantity is expressed in the robot frame of the current
control step: x along the heading, y to the left, origin at the body center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap ``theta`` into (-pi, pi]."""
    if not math.isfinite(theta):
        raise ValueError(f"cannot wrap non-finite angle {theta!r}")
    if -math.pi < theta <= math.pi:
        return theta
    r = math.fmod(theta + math.pi, TWO_PI)
    if r <= 0.0:
        r += TWO_PI
    return r - math.pi


def rotate(angle: float, x: float, y: float) -> tuple[float, float]:
    c = math.cos(angle)
    s = math.sin(angle)
    return c * x - s * y, s * x + c * y


def _check_finite(obj, names):
    for n in names:
        v = getattr(obj, n)
        if not math.isfinite(v):
            raise ValueError(f"{type(obj).__name__}.{n} is not finite: {v!r}")


@dataclass(frozen=True)
class WorldState:
    """Pose and velocity in the tank frame."""

    x_mm: float
    y_mm: float
    theta_rad: float
    vx_mm_s: float = 0.0
    vy_mm_s: float = 0.0
    omega_rad_s: float = 0.0

    def __post_init__(self):
        _check_finite(self, ("x_mm", "y_mm", "theta_rad", "vx_mm_s", "vy_mm_s", "omega_rad_s"))
        object.__setattr__(self, "theta_rad", wrap_angle(self.theta_rad))


@dataclass(frozen=True)
class LocalState:
    """Velocities in the robot frame at step k (position terms are implicitly zero)."""

    vx_mm_s: float = 0.0
    vy_mm_s: float = 0.0
    omega_rad_s: float = 0.0

    def __post_init__(self):
        _check_finite(self, ("vx_mm_s", "vy_mm_s", "omega_rad_s"))


@dataclass(frozen=True)
class LocalNextState:
    """State after one control step, expressed in the robot frame of the step's start."""

    dx_mm: float
    dy_mm: float
    dtheta_rad: float
    vx_mm_s: float
    vy_mm_s: float
    omega_rad_s: float

    def __post_init__(self):
        _check_finite(self, ("dx_mm", "dy_mm", "dtheta_rad", "vx_mm_s", "vy_mm_s", "omega_rad_s"))
        object.__setattr__(self, "dtheta_rad", wrap_angle(self.dtheta_rad))


def world_to_local(s: WorldState) -> LocalState:
    vx, vy = rotate(-s.theta_rad, s.vx_mm_s, s.vy_mm_s)
    return LocalState(vx, vy, s.omega_rad_s)


def local_to_world_velocity(theta: float, v: LocalState) -> tuple[float, float]:
    return rotate(theta, v.vx_mm_s, v.vy_mm_s)


def compose_world(pose: WorldState, nxt: LocalNextState) -> WorldState:
    """Apply a local step result to a world pose."""
    th = pose.theta_rad
    dx, dy = rotate(th, nxt.dx_mm, nxt.dy_mm)
    vx, vy = rotate(th, nxt.vx_mm_s, nxt.vy_mm_s)
    return WorldState(
        pose.x_mm + dx,
        pose.y_mm + dy,
        wrap_angle(th + nxt.dtheta_rad),
        vx,
        vy,
        nxt.omega_rad_s,
    )


def rebase(nxt: LocalNextState) -> LocalState:
    """Express the step's exit velocities in the frame of the next step."""
    vx, vy = rotate(-nxt.dtheta_rad, nxt.vx_mm_s, nxt.vy_mm_s)
    return LocalState(vx, vy, nxt.omega_rad_s)


def to_frame(pose: WorldState, x: float, y: float, theta: float) -> tuple[float, float, float]:
    """Express a world point (x, y, theta) relative to ``pose``."""
    dx, dy = rotate(-pose.theta_rad, x - pose.x_mm, y - pose.y_mm)
    return dx, dy, wrap_angle(theta - pose.theta_rad)
