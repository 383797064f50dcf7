"""Synthetic plant, transition collection, scenario execution and RMSE."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from fishmpc.fdm import DEFAULT_BOUNDS, Action, ActionBounds, TransitionSample, normalize_action
from fishmpc.geometry import LocalNextState, LocalState, WorldState, rebase
from fishmpc.gmpc import GmpcConfig, fdm_plant, pose_tuple, receding_horizon
from fishmpc.ilc import ilc_control_loop
from fishmpc.path import PathPoint, TargetPath, make_right_turn_path
from fishmpc.trajectory import TrajectoryLog, rmse

TANK_MM = (0.0, 600.0)


@dataclass(frozen=True)
class SurrogateParams:
    """Closed-form stand-in for the robot's per-step response."""

    k_fwd: float = 40.0  # mm per unit mean normalized on-time
    k_turn: float = 0.6  # rad per unit normalized on-time differential
    k_lat: float = 5.0  # mm
    momentum: float = 0.3
    bounds: ActionBounds = DEFAULT_BOUNDS

    def __post_init__(self):
        if self.k_fwd <= 0:
            raise ValueError("k_fwd must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


def surrogate_step(p: SurrogateParams, s: LocalState, a: Action) -> LocalNextState:
    """One control step of the synthetic plant; left turns (d > b) are positive."""
    dt = a.duration_s
    if dt <= 0:
        raise ValueError("action has non-positive duration")
    b_n, d_n = normalize_action(a, p.bounds)
    dtheta = p.k_turn * (d_n - b_n)
    dx = p.k_fwd * (b_n + d_n) / 2.0 + p.momentum * s.vx_mm_s * dt
    dy = p.k_lat * (d_n - b_n) / 2.0 + p.momentum * s.vy_mm_s * dt
    return LocalNextState(dx, dy, dtheta, dx / dt, dy / dt, dtheta / dt)


def surrogate_plant(p: SurrogateParams | None = None) -> Callable[[LocalState, Action], LocalNextState]:
    p = p or SurrogateParams()
    return lambda s, a: surrogate_step(p, s, a)


def collect_transitions(
    p: SurrogateParams, n: int, seed: int, action_sampler: Callable | None = None
) -> list[TransitionSample]:
    """Chain ``n`` plant steps under uniformly random in-bounds on-times."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    if action_sampler is None:
        lo, hi = p.bounds.min_ms, p.bounds.max_ms
        action_sampler = lambda r: Action(*r.uniform(lo, hi, size=2))  # noqa: E731
    out = []
    s = LocalState()
    for _ in range(n):
        a = action_sampler(rng)
        nxt = surrogate_step(p, s, a)
        out.append(TransitionSample(s, a, nxt))
        s = rebase(nxt)
    return out


def add_state_noise(pose: WorldState, rng: np.random.Generator, sigma_mm: float, sigma_rad: float) -> WorldState:
    dx, dy = rng.normal(0.0, sigma_mm, size=2)
    return WorldState(pose.x_mm + dx, pose.y_mm + dy, pose.theta_rad + rng.normal(0.0, sigma_rad),
                      pose.vx_mm_s, pose.vy_mm_s, pose.omega_rad_s)


# --------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class PathSpec:
    """Right-turn Bezier path parameters (mm, rad)."""

    x_mm: float = 100.0
    y_mm: float = 400.0
    theta_rad: float = 0.0
    radius_scale: float = 150.0
    n: int = 200

    def build(self) -> TargetPath:
        return make_right_turn_path(PathPoint(self.x_mm, self.y_mm, self.theta_rad), self.radius_scale, self.n)


@dataclass
class ScenarioConfig:
    name: str
    start: tuple[float, float, float]  # x mm, y mm, heading rad; velocities start at zero
    controller: str = "expert"  # "expert" (G-MPC) or "distilled" (ILC)
    plant: str = "surrogate"  # "surrogate" or "fdm"
    max_steps: int = 40
    seed: int = 0
    noise_mm: float = 0.0
    noise_rad: float = 0.0
    tank_mm: tuple[float, float] = TANK_MM
    path: PathSpec = field(default_factory=PathSpec)
    gmpc: GmpcConfig = field(default_factory=GmpcConfig)
    surrogate: SurrogateParams = field(default_factory=SurrogateParams)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "start": list(self.start),
            "controller": self.controller,
            "plant": self.plant,
            "max_steps": self.max_steps,
            "seed": self.seed,
            "noise_mm": self.noise_mm,
            "noise_rad": self.noise_rad,
            "tank_mm": list(self.tank_mm),
            "path": asdict(self.path),
            "gmpc": self.gmpc.to_dict(),
            "surrogate": surrogate_to_dict(self.surrogate),
        }


def surrogate_to_dict(p: SurrogateParams) -> dict:
    d = asdict(p)
    d["bounds"] = [p.bounds.min_ms, p.bounds.max_ms]
    return d


def surrogate_from_dict(d: dict) -> SurrogateParams:
    d = dict(d)
    if "bounds" in d:
        d["bounds"] = ActionBounds(*d["bounds"])
    return SurrogateParams(**d)


@dataclass
class RunReport:
    config: ScenarioConfig
    log: TrajectoryLog
    rmse_mm: float
    deviations_mm: list[float]
    elapsed_s: float

    def to_dict(self) -> dict:
        return {
            "name": self.config.name,
            "controller": self.config.controller,
            "rmse_mm": self.rmse_mm,
            "steps": len(self.log.steps),
            "elapsed_s": self.elapsed_s,
            "deviations_mm": self.deviations_mm,
            "final_pose": list(pose_tuple(self.log.poses[-1])),
            "config": self.config.to_dict(),
        }

    def write(self, out_dir, stem: str | None = None) -> None:
        out = Path(out_dir)
        stem = stem or self.config.name
        self.log.write_csv(out / f"{stem}_trajectory.csv")
        (out / f"{stem}_report.json").write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _inside(tank, x, y) -> bool:
    return tank[0] <= x <= tank[1] and tank[0] <= y <= tank[1]


def run_scenario(cfg: ScenarioConfig, models: dict) -> RunReport:
    """Run one closed-loop scenario.  ``models`` maps "fdm"/"ilc" to trained models."""
    x, y, th = cfg.start
    if not _inside(cfg.tank_mm, x, y):
        raise ValueError(f"start ({x}, {y}) lies outside the tank {cfg.tank_mm}")
    if cfg.controller not in ("expert", "distilled"):
        raise ValueError(f"unknown controller {cfg.controller!r}")
    needed = ["fdm"] if cfg.controller == "expert" else ["ilc"]
    if cfg.plant == "fdm":
        needed.append("fdm")
    missing = [k for k in needed if models.get(k) is None]
    if missing:
        raise ValueError(f"scenario {cfg.name!r} needs model(s): {', '.join(missing)}")

    if cfg.plant == "surrogate":
        plant = surrogate_plant(cfg.surrogate)
    elif cfg.plant == "fdm":
        plant = fdm_plant(models["fdm"])
    else:
        raise ValueError(f"unknown plant {cfg.plant!r}")
    perturb = None
    if cfg.noise_mm > 0 or cfg.noise_rad > 0:
        rng = np.random.default_rng(cfg.seed)
        perturb = lambda p: add_state_noise(p, rng, cfg.noise_mm, cfg.noise_rad)  # noqa: E731

    path = cfg.path.build()
    s0 = WorldState(x, y, th)
    if cfg.controller == "expert":
        log = receding_horizon(models["fdm"], plant, s0, path, cfg.gmpc, cfg.max_steps, perturb)
    else:
        log = ilc_control_loop(models["ilc"], plant, s0, path, cfg.gmpc, cfg.max_steps, perturb)
    dev = log.deviations()
    return RunReport(cfg, log, rmse(dev) if dev else float("nan"), dev, log.elapsed_s)


def standard_starts() -> list[tuple[str, tuple[float, float, float]]]:
    """Above, on and below the default path start (100, 400)."""
    return [("above", (100.0, 450.0, 0.0)), ("on", (100.0, 400.0, 0.0)), ("below", (100.0, 350.0, 0.0))]
