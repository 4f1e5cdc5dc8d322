"""
Core supply chain model: chain layout, randomness, simulation and the action codec
"""

from supplywise.core.chain import (
    ChainConfig,
    ScenarioSpec,
    builtin_scenario,
    default_chain,
    list_scenarios,
    load_scenario,
    validate_config,
    validate_scenario,
)
from supplywise.core.stochastic import (
    DemandSpec,
    EpisodeRealization,
    LeadTimeSpec,
    Perturbation,
    Purpose,
    RngStream,
    derive_seed,
)
from supplywise.core.simulator import (
    Observation,
    RawAction,
    StepOutcome,
    SupplyChainSimulator,
    SupplyChainState,
)
from supplywise.core.codec import decode_action, encode_plan, normalize_observation
from supplywise.core.environment import SupplyChainEnv

__all__ = [
    "ChainConfig",
    "ScenarioSpec",
    "builtin_scenario",
    "default_chain",
    "list_scenarios",
    "load_scenario",
    "validate_config",
    "validate_scenario",
    "DemandSpec",
    "EpisodeRealization",
    "LeadTimeSpec",
    "Perturbation",
    "Purpose",
    "RngStream",
    "derive_seed",
    "Observation",
    "RawAction",
    "StepOutcome",
    "SupplyChainSimulator",
    "SupplyChainState",
    "decode_action",
    "encode_plan",
    "normalize_observation",
    "SupplyChainEnv",
]
