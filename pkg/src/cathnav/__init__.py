"""Catheter navigation in deformable vessels.

A desk-scale stack for steerable-catheter path planning: a position-based
dynamics vessel simulator with heartbeat motion, a navigation environment
with a waypoint-shaped reward, a curriculum adversarial imitation learner
(PPO + GAIL + behavioral cloning + curiosity), evaluation metrics, a batch
CLI, and a teleoperation session service for browser clients.
"""

from cathnav.errors import (
    CathnavError,
    ConfigError,
    ContractViolation,
    ExtractionError,
    SchemaMismatch,
    SimulationDiverged,
    TrainingDiverged,
)
from cathnav.kinematics import (
    Action,
    CatheterBody,
    CatheterSpec,
    TipPose,
    apply_action,
    clamp_action,
    max_bend_at_step,
    pose_to_matrix,
    propagate_body,
)
from cathnav.planner import CGAILPlanner, load_planner
from cathnav.scenario import Scenario, load_scenario, toy_scenario

__version__ = "0.1.0"

__all__ = [
    "Action",
    "CGAILPlanner",
    "CatheterBody",
    "CatheterSpec",
    "CathnavError",
    "ConfigError",
    "ContractViolation",
    "ExtractionError",
    "Scenario",
    "SchemaMismatch",
    "SimulationDiverged",
    "TipPose",
    "TrainingDiverged",
    "apply_action",
    "clamp_action",
    "load_planner",
    "load_scenario",
    "max_bend_at_step",
    "pose_to_matrix",
    "propagate_body",
    "toy_scenario",
]
