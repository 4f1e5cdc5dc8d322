"""
Evaluation harness: shared-episode evaluation, statistics, campaigns and tuning
"""

from supplywise.evaluation.evaluator import (
    DEFAULT_EVAL_SEEDS,
    EvalPlan,
    EvalReport,
    EpisodeResult,
    evaluate_agent,
    read_reports,
    run_episode,
)
from supplywise.evaluation.statistics import bootstrap_ci, compare_report, gain
from supplywise.evaluation.campaign import CampaignSpec, episode_bounds, run_campaign
from supplywise.evaluation.tuning import TuningResult, random_search_tune, sample_hyperparams

__all__ = [
    "DEFAULT_EVAL_SEEDS",
    "EvalPlan",
    "EvalReport",
    "EpisodeResult",
    "evaluate_agent",
    "read_reports",
    "run_episode",
    "bootstrap_ci",
    "compare_report",
    "gain",
    "CampaignSpec",
    "episode_bounds",
    "run_campaign",
    "TuningResult",
    "random_search_tune",
    "sample_hyperparams",
]
