"""Forward dynamics model: (local velocities, coil on-times) -> local next state."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from fishmpc import tinynn
from fishmpc.geometry import LocalNextState, LocalState, WorldState, compose_world, rebase, world_to_local

STATE_DIM = 3
ACTION_DIM = 2
OUT_DIM = 6

TRANSITION_HEADER = ["vx", "vy", "omega", "b_ms", "d_ms", "dx", "dy", "dtheta", "vx_next", "vy_next", "omega_next"]


@dataclass(frozen=True)
class ActionBounds:
    min_ms: float = 200.0
    max_ms: float = 900.0

    def __post_init__(self):
        if not self.max_ms > self.min_ms:
            raise ValueError(f"action bounds need max > min, got {self.min_ms}..{self.max_ms}")

    @property
    def span(self) -> float:
        return self.max_ms - self.min_ms

    def contains(self, a: "Action") -> bool:
        return self.min_ms <= a.b_ms <= self.max_ms and self.min_ms <= a.d_ms <= self.max_ms


DEFAULT_BOUNDS = ActionBounds()


@dataclass(frozen=True)
class Action:
    """Left (b) and right (d) coil on-times in milliseconds."""

    b_ms: float
    d_ms: float

    @property
    def duration_s(self) -> float:
        """Physical length of the control step, roughly the sum of the on-times."""
        return (self.b_ms + self.d_ms) / 1000.0


def normalize_action(a: Action, bounds: ActionBounds = DEFAULT_BOUNDS) -> tuple[float, float]:
    return (a.b_ms - bounds.min_ms) / bounds.span, (a.d_ms - bounds.min_ms) / bounds.span


def denormalize_action(b_n: float, d_n: float, bounds: ActionBounds = DEFAULT_BOUNDS) -> Action:
    return Action(bounds.min_ms + b_n * bounds.span, bounds.min_ms + d_n * bounds.span)


@dataclass(frozen=True)
class TransitionSample:
    state: LocalState
    action: Action
    next: LocalNextState

    def row(self) -> list[float]:
        s, a, n = self.state, self.action, self.next
        return [s.vx_mm_s, s.vy_mm_s, s.omega_rad_s, a.b_ms, a.d_ms,
                n.dx_mm, n.dy_mm, n.dtheta_rad, n.vx_mm_s, n.vy_mm_s, n.omega_rad_s]

    @classmethod
    def from_row(cls, r: Sequence[float]) -> "TransitionSample":
        return cls(LocalState(*r[0:3]), Action(*r[3:5]), LocalNextState(*r[5:11]))


def write_transitions_csv(samples: Sequence[TransitionSample], dest) -> None:
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRANSITION_HEADER)
        for s in samples:
            w.writerow([repr(float(v)) for v in s.row()])


def read_transitions_csv(src) -> list[TransitionSample]:
    with open(Path(src), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRANSITION_HEADER:
            raise ValueError(f"unexpected transition CSV header {header}")
        return [TransitionSample.from_row([float(v) for v in row]) for row in reader if row]


@dataclass
class Standardizer:
    """Per-dimension affine map ``(v - mean) / scale``."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        if np.any(self.scale <= 0):
            raise ValueError("standardization scales must be positive")

    @classmethod
    def fit(cls, data: np.ndarray) -> "Standardizer":
        data = np.atleast_2d(data)
        std = data.std(axis=0)
        return cls(data.mean(axis=0), np.where(std > 1e-12, std, 1.0))

    def encode(self, v):
        return (np.asarray(v, dtype=float) - self.mean) / self.scale

    def decode(self, z):
        return np.asarray(z, dtype=float) * self.scale + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mean"], d["scale"])


def encode_input(s: LocalState, a: Action, norm: Standardizer, bounds: ActionBounds = DEFAULT_BOUNDS) -> np.ndarray:
    """Network input: standardized (vx, vy, omega) followed by normalized (b, d)."""
    if norm is None:
        raise ValueError("model has no input normalization")
    z = norm.encode([s.vx_mm_s, s.vy_mm_s, s.omega_rad_s])
    return np.concatenate([z, normalize_action(a, bounds)])


@dataclass
class FdmModel:
    net: tinynn.Mlp
    in_norm: Standardizer
    out_norm: Standardizer
    action_bounds: ActionBounds = DEFAULT_BOUNDS

    def __post_init__(self):
        if self.net.layer_dims[0] != STATE_DIM + ACTION_DIM or self.net.layer_dims[-1] != OUT_DIM:
            raise ValueError(f"FDM network must map 5 -> 6, got {self.net.layer_dims}")

    def predict_raw(self, s_vec: np.ndarray, a_norm: np.ndarray) -> np.ndarray:
        z = np.concatenate([self.in_norm.encode(s_vec), a_norm])
        return self.out_norm.decode(tinynn.predict(self.net, z))

    def to_dict(self) -> dict:
        return {
            "kind": "fdm",
            "net": self.net.to_dict(),
            "input_norm": self.in_norm.to_dict(),
            "output_norm": self.out_norm.to_dict(),
            "action_bounds": [self.action_bounds.min_ms, self.action_bounds.max_ms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FdmModel":
        if d.get("kind") != "fdm":
            raise ValueError("not an FDM model file")
        return cls(
            tinynn.Mlp.from_dict(d["net"]),
            Standardizer.from_dict(d["input_norm"]),
            Standardizer.from_dict(d["output_norm"]),
            ActionBounds(*d["action_bounds"]),
        )

    def save(self, dest) -> None:
        Path(dest).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, src) -> "FdmModel":
        return cls.from_dict(json.loads(Path(src).read_text()))


@dataclass
class FdmTrainConfig:
    hidden: tuple[int, ...] = (8, 8)
    epochs: int = 100
    batch_size: int = 8
    lr: float = 1e-3
    weight_decay: float = 0.01
    val_fraction: float = 0.1


@dataclass
class FdmTrainReport:
    loss_history: list[float]
    train_mse: float
    val_mse: float | None
    n_train: int
    n_val: int


def _arrays(samples: Sequence[TransitionSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = np.array([s.row() for s in samples], dtype=float)
    if not np.all(np.isfinite(rows)):
        raise ValueError("transition samples contain non-finite values")
    return rows[:, 0:3], rows[:, 3:5], rows[:, 5:11]


def train_fdm(
    samples: Sequence[TransitionSample],
    cfg: FdmTrainConfig | None = None,
    seed: int = 0,
    bounds: ActionBounds = DEFAULT_BOUNDS,
) -> tuple[FdmModel, FdmTrainReport]:
    cfg = cfg or FdmTrainConfig()
    if len(samples) == 0:
        raise ValueError("no transition samples")
    if len(samples) < cfg.batch_size:
        raise ValueError(f"need at least batch_size={cfg.batch_size} samples, got {len(samples)}")
    states, actions, targets = _arrays(samples)

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    n_val = int(len(samples) * cfg.val_fraction)
    val_idx, train_idx = order[:n_val], order[n_val:]

    in_norm = Standardizer.fit(states[train_idx])
    out_norm = Standardizer.fit(targets[train_idx])
    a_norm = (actions - bounds.min_ms) / bounds.span
    x = np.hstack([in_norm.encode(states), a_norm])
    y = out_norm.encode(targets)

    net = tinynn.mlp_init([STATE_DIM + ACTION_DIM, *cfg.hidden, OUT_DIM], seed + 1)
    train = tinynn.RegressionDataset(x[train_idx], y[train_idx])
    net, history = tinynn.train_regression(
        net, train, cfg.epochs, cfg.batch_size, cfg.lr, seed + 2, weight_decay=cfg.weight_decay
    )
    val_mse = tinynn.mse(net, tinynn.RegressionDataset(x[val_idx], y[val_idx])) if n_val else None
    model = FdmModel(net, in_norm, out_norm, bounds)
    return model, FdmTrainReport(history, tinynn.mse(net, train), val_mse, len(train_idx), n_val)


def predict(m: FdmModel, s: LocalState, a: Action) -> LocalNextState:
    if m is None or m.in_norm is None:
        raise ValueError("FDM model is not trained")
    out = m.out_norm.decode(tinynn.predict(m.net, encode_input(s, a, m.in_norm, m.action_bounds)))
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("FDM produced a non-finite prediction")
    return LocalNextState(*(float(v) for v in out))


def rollout(m: FdmModel, start: WorldState, actions: Sequence[Action], with_dt: bool = False):
    """Chain FDM predictions from ``start``; returns len(actions) + 1 world poses.

    With ``with_dt`` the per-step durations in seconds are returned as well.
    """
    poses = [start]
    dts = []
    pose, local = start, world_to_local(start)
    for a in actions:
        nxt = predict(m, local, a)
        pose = compose_world(pose, nxt)
        local = rebase(nxt)
        poses.append(pose)
        dts.append(a.duration_s)
    return (poses, dts) if with_dt else poses
