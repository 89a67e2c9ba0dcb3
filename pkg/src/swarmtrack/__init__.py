"""Decentralized multi-UAV target tracking with information consensus and
multiagent rollout planning."""

from swarmtrack.config import ScenarioConfig, ScenarioError, load_scenario
from swarmtrack.metrics import OspaParams, ospa, summarize
from swarmtrack.planning import PolicyKind, plan
from swarmtrack.simulation import TrialResult, run_experiment, run_trial

__all__ = [
    "OspaParams",
    "PolicyKind",
    "ScenarioConfig",
    "ScenarioError",
    "TrialResult",
    "load_scenario",
    "ospa",
    "plan",
    "run_experiment",
    "run_trial",
    "summarize",
]
__version__ = "0.1.0"
