"""Random-search hyperparameter tuning with median pruning.

Every trial draws a PPO configuration from :data:`SEARCH_SPACE`, trains it
for a fixed step budget and reports its best evaluation cost at each
checkpoint. A trial whose best-so-far cost is worse than the median of the
earlier trials at the same checkpoint is stopped early. The first trial
always runs the library baseline so the search has a known reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from loguru import logger

from supplywise.agents.ppo import PpoHyperparams
from supplywise.agents.training import CurveRecord, train
from supplywise.core.chain import ScenarioSpec
from supplywise.core.stochastic import Purpose, derive_seed
from supplywise.exceptions import ConfigurationError, TrainingDivergenceError
from supplywise.utils.io import write_csv

TUNING_SCHEMA = "supplywise-tuning v1"
DEFAULT_TRIALS = 100
DEFAULT_TRIAL_STEPS = 200_000
DEFAULT_TRIAL_EVAL_EVERY = 18_000
DEFAULT_TRIAL_EVAL_EPISODES = 5

# Discrete domains are lists; ranges are (low, high) tuples.
SEARCH_SPACE: Dict[str, Any] = {
    "n_steps": [2**k for k in range(5, 12)],
    "n_epochs": [3, 5, 10, 20],
    "batch_size": [64, 128, 256, 512],
    "vf_coef": (0.0, 1.0),
    "clip_range": [0.1, 0.2, 0.3],
    "gae_lambda": [0.9, 0.92, 0.95, 0.98, 1.0],
    "gamma": [0.95, 0.98, 0.99, 0.995, 0.999, 0.9999],
    "hidden_sizes": [(64, 64), (128, 128), (256, 256)],
    "learning_rate": (1e-5, 1e-2),
    "activation": ["relu", "tanh"],
    "max_grad_norm": [0.3, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 2.0, 5.0],
}


def _pick(rng: np.random.Generator, options: List[Any]) -> Any:
    return options[int(rng.integers(len(options)))]


def sample_hyperparams(rng: np.random.Generator) -> PpoHyperparams:
    """Draw one configuration from :data:`SEARCH_SPACE`.

    The learning rate is log-uniform, the value coefficient uniform and
    everything else a uniform choice among the listed values.
    """
    lr_low, lr_high = SEARCH_SPACE["learning_rate"]
    vf_low, vf_high = SEARCH_SPACE["vf_coef"]
    return PpoHyperparams(
        n_steps=_pick(rng, SEARCH_SPACE["n_steps"]),
        n_epochs=_pick(rng, SEARCH_SPACE["n_epochs"]),
        batch_size=_pick(rng, SEARCH_SPACE["batch_size"]),
        vf_coef=float(rng.uniform(vf_low, vf_high)),
        clip_range=_pick(rng, SEARCH_SPACE["clip_range"]),
        gae_lambda=_pick(rng, SEARCH_SPACE["gae_lambda"]),
        gamma=_pick(rng, SEARCH_SPACE["gamma"]),
        hidden_sizes=tuple(_pick(rng, SEARCH_SPACE["hidden_sizes"])),
        learning_rate=float(math.exp(rng.uniform(math.log(lr_low), math.log(lr_high)))),
        activation=_pick(rng, SEARCH_SPACE["activation"]),
        max_grad_norm=_pick(rng, SEARCH_SPACE["max_grad_norm"]),
    )


@dataclass
class TrialResult:
    """Outcome of one tuning trial.

    Attributes:
        number: Trial index, starting at 0.
        hyperparams: Configuration that was trained.
        status: 'complete', 'pruned' or 'failed'.
        checkpoints: Best-so-far mean evaluation cost at each checkpoint.
        message: Failure or pruning detail.
    """

    number: int
    hyperparams: PpoHyperparams
    status: str = "complete"
    checkpoints: List[float] = field(default_factory=list)
    message: str = ""

    @property
    def best_cost(self) -> float:
        return self.checkpoints[-1] if self.checkpoints else math.inf


@dataclass
class TuningResult:
    """All trials of a search, in the order they ran."""

    trials: List[TrialResult]

    @property
    def best_trial(self) -> Optional[TrialResult]:
        complete = [t for t in self.trials if t.status == "complete" and t.checkpoints]
        if not complete:
            return None
        return min(complete, key=lambda t: (t.best_cost, t.number))

    @property
    def best_hyperparams(self) -> PpoHyperparams:
        """Best completed configuration, or the shipped defaults when none completed."""
        best = self.best_trial
        return best.hyperparams if best is not None else PpoHyperparams()

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for trial in self.trials:
            row: Dict[str, Any] = {
                "trial": trial.number,
                "status": trial.status,
                "best_cost": trial.best_cost,
                "checkpoints": len(trial.checkpoints),
            }
            params = trial.hyperparams.to_dict()
            params["hidden_sizes"] = "x".join(str(h) for h in trial.hyperparams.hidden_sizes)
            row.update(params)
            rows.append(row)
        return pd.DataFrame(rows)

    def save(self, output_path: Union[str, Path]) -> Path:
        return write_csv(self.to_frame(), output_path, TUNING_SCHEMA)


def should_prune(history: List[List[float]], checkpoint: int, best_so_far: float) -> bool:
    """Median rule: prune when worse than the median of earlier trials at this checkpoint.

    Args:
        history: Best-so-far costs of every earlier trial, one list per trial.
        checkpoint: Index of the current checkpoint.
        best_so_far: Current trial's best cost up to that checkpoint.

    Example:
        >>> should_prune([[10.0], [30.0]], 0, 25.0)
        True
        >>> should_prune([], 0, 25.0)
        False
    """
    reached = [costs[checkpoint] for costs in history if len(costs) > checkpoint]
    if not reached:
        return False
    return best_so_far > float(np.median(reached))


def random_search_tune(
    scenario: ScenarioSpec,
    trials: int = DEFAULT_TRIALS,
    steps_per_trial: int = DEFAULT_TRIAL_STEPS,
    eval_every: int = DEFAULT_TRIAL_EVAL_EVERY,
    eval_episodes: int = DEFAULT_TRIAL_EVAL_EPISODES,
    seed: int = 0,
) -> TuningResult:
    """Search PPO hyperparameters on one scenario.

    Args:
        scenario: Scenario to tune on.
        trials: Number of configurations to try.
        steps_per_trial: Training budget of each trial.
        eval_every: Checkpoint cadence in environment steps.
        eval_episodes: Held-out episodes per checkpoint.
        seed: Seed for sampling and for each trial's training.

    Returns:
        TuningResult; ``best_hyperparams`` holds the winning configuration.

    Raises:
        ConfigurationError: If trials or the step settings are not positive.
    """
    if trials < 1 or steps_per_trial < 1 or eval_every < 1 or eval_episodes < 1:
        raise ConfigurationError(
            "trials, steps_per_trial, eval_every and eval_episodes must be positive"
        )

    rng = np.random.default_rng(derive_seed(seed, Purpose.TUNING))
    history: List[List[float]] = []
    results: List[TrialResult] = []
    logger.info(f"Tuning PPO on '{scenario.name}': {trials} trials x {steps_per_trial:,} steps")

    for number in range(trials):
        hp = PpoHyperparams.baseline() if number == 0 else sample_hyperparams(rng)
        trial = TrialResult(number=number, hyperparams=hp)

        def on_evaluation(record: CurveRecord, trial: TrialResult = trial) -> bool:
            best = min(record.eval_mean_cost, trial.best_cost)
            trial.checkpoints.append(best)
            index = len(trial.checkpoints) - 1
            if should_prune(history, index, best):
                trial.status = "pruned"
                trial.message = f"pruned at {record.env_steps:,} steps"
                return False
            return True

        try:
            train(
                scenario,
                seed=derive_seed(seed, Purpose.TUNING, number),
                total_steps=steps_per_trial,
                eval_every=eval_every,
                eval_episodes=eval_episodes,
                hyperparams=hp,
                on_evaluation=on_evaluation,
            )
        except (TrainingDivergenceError, ConfigurationError) as e:
            trial.status = "failed"
            trial.message = str(e)
            logger.warning(f"Trial {number} failed: {e}")
        if trial.status == "pruned":
            logger.warning(f"Trial {number} {trial.message}")
        elif trial.status == "complete":
            logger.info(f"Trial {number} complete: best mean cost {trial.best_cost:,.0f}")
        history.append(list(trial.checkpoints))
        results.append(trial)

    result = TuningResult(results)
    best = result.best_trial
    if best is None:
        logger.warning("No trial completed; keeping the default hyperparameters")
    else:
        logger.success(f"Best trial {best.number}: mean cost {best.best_cost:,.0f}")
    return result
