"""Cubic Bezier target paths with tangent headings."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from fishmpc.geometry import wrap_angle

Point = tuple[float, float]


class DegenerateCurveError(ValueError):
    pass


@dataclass(frozen=True)
class PathPoint:
    x_mm: float
    y_mm: float
    theta_rad: float

    def __post_init__(self):
        object.__setattr__(self, "theta_rad", wrap_angle(self.theta_rad))


class TargetPath:
    """Ordered path points; also keeps an (n, 3) array view for vectorized search."""

    def __init__(self, points: Sequence[PathPoint]):
        points = list(points)
        if len(points) < 2:
            raise ValueError("a target path needs at least two points")
        for a, b in zip(points, points[1:]):
            if a.x_mm == b.x_mm and a.y_mm == b.y_mm:
                raise ValueError("consecutive path points coincide")
        self.points = points
        self.array = np.array([(p.x_mm, p.y_mm, p.theta_rad) for p in points], dtype=float)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def __iter__(self):
        return iter(self.points)

    def __eq__(self, other):
        return isinstance(other, TargetPath) and self.points == other.points

    def transformed(self, dx: float, dy: float, dtheta: float) -> "TargetPath":
        """Rigidly rotate by ``dtheta`` about the origin, then translate."""
        c, s = math.cos(dtheta), math.sin(dtheta)
        return TargetPath(
            PathPoint(c * p.x_mm - s * p.y_mm + dx, s * p.x_mm + c * p.y_mm + dy, p.theta_rad + dtheta)
            for p in self.points
        )


def _check_t(t: float):
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"Bezier parameter must lie in [0, 1], got {t!r}")


def bezier_eval(ctrl: Sequence[Point], t: float) -> Point:
    _check_t(t)
    (x0, y0), (x1, y1), (x2, y2), (x3, y3) = ctrl
    u = 1.0 - t
    b0, b1, b2, b3 = u * u * u, 3 * u * u * t, 3 * u * t * t, t * t * t
    return (b0 * x0 + b1 * x1 + b2 * x2 + b3 * x3, b0 * y0 + b1 * y1 + b2 * y2 + b3 * y3)


def bezier_derivative(ctrl: Sequence[Point], t: float) -> Point:
    _check_t(t)
    (x0, y0), (x1, y1), (x2, y2), (x3, y3) = ctrl
    u = 1.0 - t
    c0, c1, c2 = 3 * u * u, 6 * u * t, 3 * t * t
    return (
        c0 * (x1 - x0) + c1 * (x2 - x1) + c2 * (x3 - x2),
        c0 * (y1 - y0) + c1 * (y2 - y1) + c2 * (y3 - y2),
    )


def bezier_tangent_angle(ctrl: Sequence[Point], t: float) -> float:
    dx, dy = bezier_derivative(ctrl, t)
    if math.hypot(dx, dy) < 1e-12:
        raise DegenerateCurveError(f"Bezier derivative vanishes at t={t}")
    return wrap_angle(math.atan2(dy, dx))


def discretize(ctrl: Sequence[Point], n: int = 200) -> TargetPath:
    if n < 2:
        raise ValueError("need at least two samples")
    pts = []
    for i in range(n):
        t = i / (n - 1)
        x, y = bezier_eval(ctrl, t)
        pts.append(PathPoint(x, y, bezier_tangent_angle(ctrl, t)))
    return TargetPath(pts)


def right_turn_controls(start: PathPoint | tuple[float, float, float], radius_scale: float) -> list[Point]:
    """Control polygon of a 90 degree right turn beginning at ``start``.

    The end point sits ``2 * radius_scale`` ahead and ``2 * radius_scale`` to
    the right of the start; the inner control points lie ``radius_scale``
    along the entry and exit tangents.
    """
    if radius_scale <= 0:
        raise ValueError("radius_scale must be positive")
    if not isinstance(start, PathPoint):
        start = PathPoint(*start)
    th = start.theta_rad
    fx, fy = math.cos(th), math.sin(th)
    rx, ry = math.sin(th), -math.cos(th)  # unit vector to the right of the heading
    x0, y0 = start.x_mm, start.y_mm
    r = radius_scale
    x3, y3 = x0 + 2 * r * (fx + rx), y0 + 2 * r * (fy + ry)
    # exit heading is th - pi/2, i.e. the "right" direction
    return [(x0, y0), (x0 + r * fx, y0 + r * fy), (x3 - r * rx, y3 - r * ry), (x3, y3)]


def make_right_turn_path(start: PathPoint | tuple[float, float, float], radius_scale: float = 150.0, n: int = 200) -> TargetPath:
    return discretize(right_turn_controls(start, radius_scale), n)


DEFAULT_PATH_START = PathPoint(100.0, 400.0, 0.0)


def default_path(n: int = 200) -> TargetPath:
    return make_right_turn_path(DEFAULT_PATH_START, 150.0, n)


def write_path_csv(path: TargetPath, dest) -> None:
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_mm", "y_mm", "theta_rad"])
        for p in path:
            w.writerow([repr(p.x_mm), repr(p.y_mm), repr(p.theta_rad)])


def read_path_csv(src) -> TargetPath:
    with open(Path(src), newline="") as fh:
        rows = list(csv.DictReader(fh))
    return TargetPath(PathPoint(float(r["x_mm"]), float(r["y_mm"]), float(r["theta_rad"])) for r in rows)
