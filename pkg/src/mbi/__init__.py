"""Coordinate boundedly-rational agents on a differentiable DAG by pricing their actions with loss gradients."""

from .ddag import GraphSpec, build_graph
from .mechanism import Mechanism, NoiseSpec, PlannerConfig, RunResult
from .scenarios import catalog, get, run_scenario

__all__ = ["GraphSpec", "Mechanism", "NoiseSpec", "PlannerConfig", "RunResult", "build_graph",
           "catalog", "get", "run_scenario"]
__version__ = "0.1.0"
