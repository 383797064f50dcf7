"""Closed-loop trajectory logs and the RMSE tracking metric."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

from fishmpc.fdm import Action
from fishmpc.geometry import WorldState

LOG_HEADER = ["step", "x_mm", "y_mm", "theta_rad", "b_ms", "d_ms", "ref_x", "ref_y", "ref_theta", "dt_s", "J_final"]


@dataclass
class StepRecord:
    step: int
    pose: WorldState  # pose after the action
    action: Action
    ref: tuple[float, float, float]  # reference selected from the pose before the action
    dt_s: float
    j_final: float = float("nan")


@dataclass
class TrajectoryLog:
    start: WorldState
    steps: list[StepRecord] = field(default_factory=list)

    @property
    def poses(self) -> list[WorldState]:
        return [self.start] + [r.pose for r in self.steps]

    @property
    def actions(self) -> list[Action]:
        return [r.action for r in self.steps]

    def deviations(self) -> list[float]:
        return [math.hypot(r.pose.x_mm - r.ref[0], r.pose.y_mm - r.ref[1]) for r in self.steps]

    @property
    def elapsed_s(self) -> float:
        return math.fsum(r.dt_s for r in self.steps)

    def write_csv(self, dest) -> None:
        with open(dest, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_HEADER)
            for r in self.steps:
                w.writerow([r.step] + [repr(float(v)) for v in (
                    r.pose.x_mm, r.pose.y_mm, r.pose.theta_rad, r.action.b_ms, r.action.d_ms,
                    *r.ref, r.dt_s, r.j_final)])


def rmse(log: TrajectoryLog | Sequence[float]) -> float:
    """Root mean square of per-step distances between reference and realized position."""
    dev = log.deviations() if isinstance(log, TrajectoryLog) else list(log)
    if not dev:
        raise ValueError("cannot compute RMSE of an empty trajectory")
    return math.sqrt(math.fsum(d * d for d in dev) / len(dev))
