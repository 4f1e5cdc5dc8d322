"""
Deterministic planning: the LP model, the LP agent and perfect-information bounds
"""

from supplywise.planning.lp_model import (
    DeterministicScenario,
    LpInstance,
    LpSolution,
    build_lp,
    forecast_scenario,
    realized_scenario,
    solve_lp,
    write_lp_file,
)
from supplywise.planning.lp_agent import (
    LpAgent,
    LpAgentPlan,
    extract_lp_agent,
    perfect_information_bound,
    solve_forecast,
)

__all__ = [
    "DeterministicScenario",
    "LpInstance",
    "LpSolution",
    "build_lp",
    "forecast_scenario",
    "realized_scenario",
    "solve_lp",
    "write_lp_file",
    "LpAgent",
    "LpAgentPlan",
    "extract_lp_agent",
    "perfect_information_bound",
    "solve_forecast",
]
