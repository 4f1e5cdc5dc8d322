"""
SupplyWise: LP and PPO planning for a stochastic multi-echelon supply chain

Simulate a four-echelon chain under uncertain demand and lead times, plan
it with a linear program, learn it with PPO, and compare both on the same
evaluation episodes.
"""

__version__ = "0.1.0"

from supplywise.core import (
    ChainConfig,
    ScenarioSpec,
    SupplyChainEnv,
    SupplyChainSimulator,
    builtin_scenario,
    list_scenarios,
    load_scenario,
)
from supplywise.agents import PolicyBundle, PpoAgent, PpoHyperparams, train
from supplywise.evaluation import EvalPlan, EvalReport, compare_report, evaluate_agent
from supplywise.planning import LpAgent, extract_lp_agent, perfect_information_bound, solve_lp

__all__ = [
    "ChainConfig",
    "ScenarioSpec",
    "SupplyChainEnv",
    "SupplyChainSimulator",
    "builtin_scenario",
    "list_scenarios",
    "load_scenario",
    "EvalPlan",
    "EvalReport",
    "compare_report",
    "evaluate_agent",
    "LpAgent",
    "extract_lp_agent",
    "perfect_information_bound",
    "solve_lp",
    "PolicyBundle",
    "PpoAgent",
    "PpoHyperparams",
    "train",
]
