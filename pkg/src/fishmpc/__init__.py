"""Learned-dynamics path following for a magnetically actuated fish robot.

Pipeline: a synthetic plant produces transition data, an MLP forward
dynamics model is fit to it, a gradient-based MPC plans coil on-times by
backpropagating through that model, and a small imitation network is
distilled from the MPC for one-pass control.
"""

from fishmpc.geometry import LocalNextState, LocalState, WorldState, wrap_angle
from fishmpc.path import PathPoint, TargetPath, make_right_turn_path
from fishmpc.fdm import Action, FdmModel, train_fdm
from fishmpc.gmpc import GmpcConfig, optimize_actions, receding_horizon
from fishmpc.ilc import IlcModel, train_ilc

__all__ = [
    "Action",
    "FdmModel",
    "GmpcConfig",
    "IlcModel",
    "LocalNextState",
    "LocalState",
    "PathPoint",
    "TargetPath",
    "WorldState",
    "make_right_turn_path",
    "optimize_actions",
    "receding_horizon",
    "train_fdm",
    "train_ilc",
    "wrap_angle",
]
