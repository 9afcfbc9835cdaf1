"""Deterministic simulator and benchmark harness for a chain of six
differential-drive robots linked by stiffness-switchable yaw joints,
navigating procedurally generated rugged terrain."""

__version__ = "0.1.0"

GENERATOR_VERSION = f"chainsim-{__version__}"

from .config import SimConfig
from .terrain import TerrainParams, SlopeStats, height, gradient, slope_stats, sample_terrain
from .dynamics import RobotBody, EnvModel, JointParams, ChainState, step
from .control import ControlGains, NavigationTarget
from .baselines import MethodSpec, PlannedPath, plan_astar
from .bench import TrialRecord, BenchReport, run_trial, run_benchmark, metrics

__all__ = [
    "GENERATOR_VERSION",
    "SimConfig",
    "TerrainParams",
    "SlopeStats",
    "height",
    "gradient",
    "slope_stats",
    "sample_terrain",
    "RobotBody",
    "EnvModel",
    "JointParams",
    "ChainState",
    "step",
    "ControlGains",
    "NavigationTarget",
    "MethodSpec",
    "PlannedPath",
    "plan_astar",
    "TrialRecord",
    "BenchReport",
    "run_trial",
    "run_benchmark",
    "metrics",
]
