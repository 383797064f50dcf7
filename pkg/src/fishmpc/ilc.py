"""Imitation-learning controller distilled from G-MPC rollouts."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from fishmpc import tinynn
from fishmpc.fdm import DEFAULT_BOUNDS, Action, ActionBounds, FdmModel, Standardizer, denormalize_action
from fishmpc.geometry import LocalState, WorldState, compose_world, to_frame, world_to_local
from fishmpc.gmpc import GmpcConfig, Plant, get_ref_index, pose_tuple, reached_end, receding_horizon
from fishmpc.path import TargetPath
from fishmpc.trajectory import StepRecord, TrajectoryLog

ILC_HEADER = ["vx", "vy", "omega", "ref_dx", "ref_dy", "ref_dtheta", "b_ms", "d_ms"]

# starts x in {50, 100, 150} mm, y in {350, 400, 450} mm, yaw in {-pi/18, 0, pi/18}
DEFAULT_GRID = tuple(
    (x, y, yaw)
    for x, y, yaw in itertools.product((50.0, 100.0, 150.0), (350.0, 400.0, 450.0), (-math.pi / 18, 0.0, math.pi / 18))
)


@dataclass(frozen=True)
class IlcSample:
    state: LocalState
    ref_rel: tuple[float, float, float]  # reference in the robot frame: dx mm, dy mm, dtheta rad
    action: Action

    def row(self) -> list[float]:
        s = self.state
        return [s.vx_mm_s, s.vy_mm_s, s.omega_rad_s, *self.ref_rel, self.action.b_ms, self.action.d_ms]

    @classmethod
    def from_row(cls, r) -> "IlcSample":
        return cls(LocalState(*r[0:3]), tuple(r[3:6]), Action(*r[6:8]))


def write_ilc_csv(samples: Sequence[IlcSample], dest) -> None:
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ILC_HEADER)
        for s in samples:
            w.writerow([repr(float(v)) for v in s.row()])


def read_ilc_csv(src) -> list[IlcSample]:
    with open(Path(src), newline="") as fh:
        reader = csv.reader(fh)
        if next(reader) != ILC_HEADER:
            raise ValueError("unexpected ILC dataset header")
        return [IlcSample.from_row([float(v) for v in row]) for row in reader if row]


def samples_from_log(log: TrajectoryLog) -> list[IlcSample]:
    out = []
    for pose, rec in zip(log.poses, log.steps):
        out.append(IlcSample(world_to_local(pose), to_frame(pose, *rec.ref), rec.action))
    return out


def generate_ilc_dataset(model: FdmModel, cfg: GmpcConfig, path: TargetPath, plant: Plant,
                         grid: Sequence[tuple[float, float, float]] = DEFAULT_GRID,
                         max_steps: int = 40) -> list[IlcSample]:
    """Run the expert from every grid start and keep one sample per control step."""
    samples = []
    for x, y, yaw in grid:
        log = receding_horizon(model, plant, WorldState(x, y, yaw), path, cfg, max_steps)
        samples += samples_from_log(log)
    return samples


@dataclass
class IlcTrainConfig:
    hidden: tuple[int, ...] = (8,)
    epochs: int = 1000
    batch_size: int = 32
    lr: float = 0.1  # peak rate
    weight_decay: float = 0.01
    schedule: str = "cosine"


@dataclass
class IlcModel:
    net: tinynn.Mlp
    in_norm: Standardizer
    action_bounds: ActionBounds = DEFAULT_BOUNDS

    def __post_init__(self):
        if self.net.layer_dims[0] != 6 or self.net.layer_dims[-1] != 2:
            raise ValueError(f"ILC network must map 6 -> 2, got {self.net.layer_dims}")

    def to_dict(self) -> dict:
        return {
            "kind": "ilc",
            "net": self.net.to_dict(),
            "input_norm": self.in_norm.to_dict(),
            "action_bounds": [self.action_bounds.min_ms, self.action_bounds.max_ms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IlcModel":
        if d.get("kind") != "ilc":
            raise ValueError("not an ILC model file")
        return cls(tinynn.Mlp.from_dict(d["net"]), Standardizer.from_dict(d["input_norm"]), ActionBounds(*d["action_bounds"]))

    def save(self, dest) -> None:
        Path(dest).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, src) -> "IlcModel":
        return cls.from_dict(json.loads(Path(src).read_text()))


def _encode_arrays(samples: Sequence[IlcSample], bounds: ActionBounds) -> tuple[np.ndarray, np.ndarray]:
    rows = np.array([s.row() for s in samples], dtype=float)
    return rows[:, :6], (rows[:, 6:8] - bounds.min_ms) / bounds.span


def train_ilc(samples: Sequence[IlcSample], cfg: IlcTrainConfig | None = None, seed: int = 0,
              bounds: ActionBounds = DEFAULT_BOUNDS) -> tuple[IlcModel, list[float]]:
    """Behavior cloning: standardized (state, relative ref) -> normalized on-times."""
    cfg = cfg or IlcTrainConfig()
    if len(samples) == 0:
        raise ValueError("no ILC samples")
    if len(samples) < cfg.batch_size:
        raise ValueError(f"need at least batch_size={cfg.batch_size} samples, got {len(samples)}")
    x, y = _encode_arrays(samples, bounds)
    norm = Standardizer.fit(x)
    net = tinynn.mlp_init([6, *cfg.hidden, 2], seed + 1)
    net, history = tinynn.train_regression(
        net, tinynn.RegressionDataset(norm.encode(x), y), cfg.epochs, cfg.batch_size, cfg.lr, seed + 2,
        weight_decay=cfg.weight_decay, schedule=cfg.schedule,
    )
    return IlcModel(net, norm, bounds), history


def ilc_act(p: IlcModel, s: LocalState, ref_rel: Sequence[float]) -> Action:
    """Single forward pass, clamped to the action bounds."""
    if p is None or p.in_norm is None:
        raise ValueError("ILC model is not trained")
    z = p.in_norm.encode([s.vx_mm_s, s.vy_mm_s, s.omega_rad_s, *ref_rel])
    b_n, d_n = np.clip(tinynn.predict(p.net, z), 0.0, 1.0)
    return denormalize_action(float(b_n), float(d_n), p.action_bounds)


def ilc_control_loop(p: IlcModel, plant: Plant, s0: WorldState, path: TargetPath, cfg: GmpcConfig,
                     max_steps: int, perturb=None) -> TrajectoryLog:
    """Closed loop with the distilled policy; same reference rule and stop rules as the expert."""
    log = TrajectoryLog(s0)
    pose = s0
    for k in range(max_steps):
        if reached_end(pose, path, cfg.heading_weight):
            break
        i_ref = get_ref_index(pose_tuple(pose), path, cfg.lookahead_mm, cfg.heading_weight)
        ref = path[i_ref]
        a = ilc_act(p, world_to_local(pose), to_frame(pose, ref.x_mm, ref.y_mm, ref.theta_rad))
        pose = compose_world(pose, plant(world_to_local(pose), a))
        if perturb is not None:
            pose = perturb(pose)
        log.steps.append(StepRecord(k, pose, a, (ref.x_mm, ref.y_mm, ref.theta_rad), a.duration_s))
        if i_ref == len(path) - 1:
            break
    return log
