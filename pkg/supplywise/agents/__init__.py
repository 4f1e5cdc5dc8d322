"""
Learning agents: actor-critic networks, PPO and its training loop
"""

from supplywise.agents.networks import ActorCritic
from supplywise.agents.normalizer import RewardNormalizer
from supplywise.agents.ppo import (
    PolicyBundle,
    PpoAgent,
    PpoHyperparams,
    RolloutBatch,
    adam_step,
    compute_gae,
    policy_forward,
    policy_sample,
    ppo_loss,
    ppo_update,
)
from supplywise.agents.training import CurveRecord, TrainingResult, evaluate_policy, train

__all__ = [
    "ActorCritic",
    "RewardNormalizer",
    "PolicyBundle",
    "PpoAgent",
    "PpoHyperparams",
    "RolloutBatch",
    "adam_step",
    "compute_gae",
    "policy_forward",
    "policy_sample",
    "ppo_loss",
    "ppo_update",
    "CurveRecord",
    "TrainingResult",
    "evaluate_policy",
    "train",
]
