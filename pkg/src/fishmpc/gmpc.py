"""Gradient-based MPC through the learned forward dynamics model.

Decision variables are the normalized on-times u in [0, 1]^(H x 2), which
are exactly the last two FDM inputs, so gradients reach them directly from
the network's input gradient.  Reference points are picked per predicted
pose and treated as constants when differentiating.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from fishmpc import tinynn
from fishmpc.fdm import DEFAULT_BOUNDS, Action, ActionBounds, FdmModel, denormalize_action, normalize_action
from fishmpc.fdm import predict as fdm_predict
from fishmpc.geometry import LocalNextState, LocalState, WorldState, compose_world, world_to_local, wrap_angle
from fishmpc.path import PathPoint, TargetPath
from fishmpc.trajectory import StepRecord, TrajectoryLog

Plant = Callable[[LocalState, Action], LocalNextState]


@dataclass
class GmpcConfig:
    horizon: int = 10
    iterations: int = 1000
    lookahead_mm: float = 50.0
    lr: float = 0.005
    cost_weights: tuple[float, float, float] = (5.0, 5.0, 1.0)
    heading_weight: float = 100.0  # mm^2 / rad^2
    action_bounds: ActionBounds = DEFAULT_BOUNDS
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        self.cost_weights = tuple(float(w) for w in self.cost_weights)
        if isinstance(self.action_bounds, (list, tuple)):
            self.action_bounds = ActionBounds(*self.action_bounds)
        if self.horizon < 1 or self.iterations < 0:
            raise ValueError("horizon must be >= 1 and iterations >= 0")
        if self.lookahead_mm <= 0 or self.lr <= 0:
            raise ValueError("lookahead and learning rate must be positive")
        if len(self.cost_weights) != 3 or min(self.cost_weights) < 0 or self.heading_weight < 0:
            raise ValueError("weights must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cost_weights"] = list(self.cost_weights)
        d["action_bounds"] = [self.action_bounds.min_ms, self.action_bounds.max_ms]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GmpcConfig":
        return cls(**d)


# --------------------------------------------------------------------------
# reference selection and cost


def _wrap_array(a: np.ndarray) -> np.ndarray:
    # same arithmetic as geometry.wrap_angle, elementwise
    r = np.fmod(a + math.pi, 2.0 * math.pi)
    r = np.where(r <= 0.0, r + 2.0 * math.pi, r) - math.pi
    return np.where((a > -math.pi) & (a <= math.pi), a, r)


def ref_error(pose: tuple[float, float, float], p: PathPoint, w_h: float) -> float:
    x, y, th = pose
    dh = wrap_angle(p.theta_rad - th)
    return (p.x_mm - x) ** 2 + (p.y_mm - y) ** 2 + w_h * dh * dh


def nearest_index(pose: tuple[float, float, float], path: TargetPath, w_h: float) -> int:
    if len(path) == 0:
        raise ValueError("empty path")
    x, y, th = pose
    arr = path.array
    dh = _wrap_array(arr[:, 2] - th)
    e = (arr[:, 0] - x) ** 2 + (arr[:, 1] - y) ** 2 + w_h * dh * dh
    return int(np.argmin(e))


def get_ref_index(pose: tuple[float, float, float], path: TargetPath, lookahead: float, w_h: float) -> int:
    """Nearest index by position+heading error, then the first point at or after
    it whose distance to the pose is closest to ``lookahead``."""
    i0 = nearest_index(pose, path, w_h)
    tail = path.array[i0:]
    dist = np.sqrt((tail[:, 0] - pose[0]) ** 2 + (tail[:, 1] - pose[1]) ** 2)
    return i0 + int(np.argmin(np.abs(dist - lookahead)))


def get_ref(pose, path: TargetPath, lookahead: float, w_h: float) -> PathPoint:
    if isinstance(pose, WorldState):
        pose = (pose.x_mm, pose.y_mm, pose.theta_rad)
    return path[get_ref_index(pose, path, lookahead, w_h)]


def step_cost(pose, ref: PathPoint, weights: Sequence[float]) -> float:
    if isinstance(pose, WorldState):
        pose = (pose.x_mm, pose.y_mm, pose.theta_rad)
    ex = pose[0] - ref.x_mm
    ey = pose[1] - ref.y_mm
    et = wrap_angle(pose[2] - ref.theta_rad)
    return weights[0] * ex * ex + weights[1] * ey * ey + weights[2] * et * et


# --------------------------------------------------------------------------
# horizon objective and its gradient


def _as_norm_array(A, bounds: ActionBounds) -> np.ndarray:
    if isinstance(A, np.ndarray):
        return np.array(A, dtype=float).reshape(-1, 2)
    return np.array([normalize_action(a, bounds) for a in A], dtype=float).reshape(-1, 2)


@dataclass
class HorizonEval:
    J: float
    refs: list[PathPoint]
    poses: list[WorldState]
    grad: np.ndarray | None = None  # dJ/du, shape (H, 2)


def _evaluate(model: FdmModel, s0: WorldState, U: np.ndarray, path: TargetPath, cfg: GmpcConfig,
              refs: Sequence[PathPoint] | None, step_weights, want_grad: bool) -> HorizonEval:
    net = model.net
    mu_in, sd_in = model.in_norm.mean, model.in_norm.scale
    mu_out, sd_out = model.out_norm.mean, model.out_norm.scale
    wx, wy, wt = cfg.cost_weights
    H = len(U)
    sw = np.ones(H) if step_weights is None else np.asarray(step_weights, dtype=float)

    X, Y, T = s0.x_mm, s0.y_mm, s0.theta_rad
    loc = world_to_local(s0)
    lv = np.array([loc.vx_mm_s, loc.vy_mm_s, loc.omega_rad_s])
    chosen: list[PathPoint] = []
    poses = [s0]
    tape = []
    J = 0.0
    for j in range(H):
        ref = refs[j] if refs is not None else path[
            get_ref_index((X, Y, T), path, cfg.lookahead_mm, cfg.heading_weight)]
        chosen.append(ref)
        z = np.concatenate(((lv - mu_in) / sd_in, U[j]))
        o, cache = tinynn.forward(net, z)
        yv = o * sd_out + mu_out
        if not np.all(np.isfinite(yv)):
            raise FloatingPointError(f"non-finite FDM output at horizon step {j}")
        dx, dy, dth, vx, vy, om = (float(v) for v in yv)
        C, S = math.cos(T), math.sin(T)
        c, s = math.cos(dth), math.sin(dth)
        X2 = X + C * dx - S * dy
        Y2 = Y + S * dx + C * dy
        T2 = wrap_angle(T + wrap_angle(dth))
        # velocities re-expressed in the frame of the next step
        lv = np.array([c * vx + s * vy, -s * vx + c * vy, om])
        ex, ey, et = X2 - ref.x_mm, Y2 - ref.y_mm, wrap_angle(T2 - ref.theta_rad)
        J += sw[j] * (wx * ex * ex + wy * ey * ey + wt * et * et)
        if want_grad:
            tape.append((C, S, c, s, dx, dy, vx, vy, cache, ex, ey, et))
        poses.append(WorldState(X2, Y2, T2, C * vx - S * vy, S * vx + C * vy, om))
        X, Y, T = X2, Y2, T2
    if not math.isfinite(J):
        raise FloatingPointError("non-finite horizon objective")
    out = HorizonEval(J, chosen, poses)
    if not want_grad:
        return out

    gU = np.zeros((H, 2))
    gX = gY = gT = 0.0
    gl = np.zeros(3)
    gy = np.empty(6)
    for j in range(H - 1, -1, -1):
        C, S, c, s, dx, dy, vx, vy, cache, ex, ey, et = tape[j]
        gX += 2.0 * sw[j] * wx * ex
        gY += 2.0 * sw[j] * wy * ey
        gT += 2.0 * sw[j] * wt * et
        gl0, gl1, gl2 = gl
        gy[0] = gX * C + gY * S
        gy[1] = -gX * S + gY * C
        gy[2] = gT + gl0 * (-s * vx + c * vy) + gl1 * (-c * vx - s * vy)
        gy[3] = c * gl0 - s * gl1
        gy[4] = s * gl0 + c * gl1
        gy[5] = gl2
        gT = gT + gX * (-S * dx - C * dy) + gY * (C * dx - S * dy)
        _, gz = tinynn.backward(net, cache, gy * sd_out)
        if not np.all(np.isfinite(gz)):
            raise FloatingPointError(f"non-finite gradient at horizon step {j}")
        gU[j] = gz[3:5]
        gl = gz[:3] / sd_in
    out.grad = gU
    return out


def horizon_objective(model: FdmModel, s0: WorldState, A, path: TargetPath, cfg: GmpcConfig,
                      refs: Sequence[PathPoint] | None = None, step_weights=None) -> HorizonEval:
    """Cost of an action sequence (Actions, or an (H, 2) normalized array) over the horizon.

    ``refs`` freezes the reference points instead of selecting them from the
    predicted poses.  ``step_weights`` scales each step's cost term.
    """
    return _evaluate(model, s0, _as_norm_array(A, cfg.action_bounds), path, cfg, refs, step_weights, False)


def objective_gradient(model: FdmModel, s0: WorldState, A, path: TargetPath, cfg: GmpcConfig,
                       refs: Sequence[PathPoint] | None = None, step_weights=None) -> HorizonEval:
    """Objective plus exact dJ/du with respect to the normalized actions."""
    return _evaluate(model, s0, _as_norm_array(A, cfg.action_bounds), path, cfg, refs, step_weights, True)


def optimize_actions(model: FdmModel, s0: WorldState, path: TargetPath, A_init, cfg: GmpcConfig,
                     on_iteration: Callable[[int, np.ndarray], None] | None = None):
    """Projected AdamW over the normalized action sequence.

    Returns the optimized actions and the objective history: one value per
    iteration (before that iteration's update) followed by the value of the
    returned sequence, so ``len(history) == iterations + 1``.

    ``on_iteration(i, actions_ms)`` sees a copy of the projected plan in
    milliseconds after every update.
    """
    if A_init is None:
        A_init = [Action(*[(cfg.action_bounds.min_ms + cfg.action_bounds.max_ms) / 2] * 2)] * cfg.horizon
    U = np.clip(_as_norm_array(A_init, cfg.action_bounds), 0.0, 1.0)
    if len(U) != cfg.horizon:
        raise ValueError(f"initial sequence has {len(U)} actions, horizon is {cfg.horizon}")
    opt = tinynn.AdamWState.for_params([U], beta1=cfg.beta1, beta2=cfg.beta2,
                                       epsilon=cfg.epsilon, weight_decay=cfg.weight_decay)
    history = []
    for it in range(cfg.iterations):
        ev = _evaluate(model, s0, U, path, cfg, None, None, True)
        history.append(ev.J)
        adamw_step_inplace(U, ev.grad, opt, cfg.lr)
        np.clip(U, 0.0, 1.0, out=U)
        if on_iteration is not None:
            b = cfg.action_bounds
            on_iteration(it, b.min_ms + U * b.span)
    history.append(_evaluate(model, s0, U, path, cfg, None, None, False).J)
    return [denormalize_action(b, d, cfg.action_bounds) for b, d in U], history


def adamw_step_inplace(U, g, opt, lr):
    tinynn.adamw_step([U], [g], opt, lr)


# --------------------------------------------------------------------------
# closed loop


def fdm_plant(model: FdmModel) -> Plant:
    return lambda s, a: fdm_predict(model, s, a)


def pose_tuple(p: WorldState) -> tuple[float, float, float]:
    return p.x_mm, p.y_mm, p.theta_rad


def reached_end(pose: WorldState, path: TargetPath, w_h: float) -> bool:
    return nearest_index(pose_tuple(pose), path, w_h) == len(path) - 1


def receding_horizon(model: FdmModel, plant: Plant, s0: WorldState, path: TargetPath, cfg: GmpcConfig,
                     max_steps: int, perturb: Callable[[WorldState], WorldState] | None = None) -> TrajectoryLog:
    """Optimize, apply the first action to ``plant``, shift the plan, repeat.

    Stops after ``max_steps``, once the nearest path index is the final point,
    or after the first step whose reference was the final point (the rest of
    the path is then inside the look-ahead distance).  ``perturb`` (if given)
    is applied to every realized pose, e.g. for noise.
    """
    log = TrajectoryLog(s0)
    pose = s0
    plan = None
    for k in range(max_steps):
        if reached_end(pose, path, cfg.heading_weight):
            break
        i_ref = get_ref_index(pose_tuple(pose), path, cfg.lookahead_mm, cfg.heading_weight)
        ref = path[i_ref]
        plan, hist = optimize_actions(model, pose, path, plan, cfg)
        a = plan[0]
        pose = compose_world(pose, plant(world_to_local(pose), a))
        if perturb is not None:
            pose = perturb(pose)
        log.steps.append(StepRecord(k, pose, a, (ref.x_mm, ref.y_mm, ref.theta_rad), a.duration_s, hist[-1]))
        if i_ref == len(path) - 1:
            break
        plan = plan[1:] + plan[-1:]
    return log
