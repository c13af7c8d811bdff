"""Offline imitation learning via pessimistic model-based occupancy matching.

The package is organized around the pieces of the min-max objective

    min over policies  max over costs f  [ E_model[f + b] - E_expert[f] ]

where the dynamics model and the uncertainty penalty b are both fit from a
fixed offline dataset.  `mdp` holds environments and exact dynamic
programming, `models` the calibrated dynamics models, `discriminators` the
cost classes, `policy_opt` the planners, and `solver` ties them together.
"""

from milo.data import ExpertDataset, OfflineDataset
from milo.mdp import FiniteMDP, LinearGaussianEnv, TabularPolicy, Trajectory
from milo.solver import MiloConfig, SolverReport, bc_train, solve_milo, solve_offline_rl

__all__ = [
    "ExpertDataset",
    "FiniteMDP",
    "LinearGaussianEnv",
    "MiloConfig",
    "OfflineDataset",
    "SolverReport",
    "TabularPolicy",
    "Trajectory",
    "bc_train",
    "solve_milo",
    "solve_offline_rl",
]

__version__ = "0.1.0"
