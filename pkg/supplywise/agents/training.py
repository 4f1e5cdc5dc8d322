"""PPO training loop with periodic deterministic evaluation.

Each iteration collects ``n_steps`` transitions from every actor, computes
advantages, and runs the PPO update. Every ``eval_every`` environment steps
the current policy plays held-out episodes with its mean actions; the
bundle with the lowest mean episode cost is kept as the result.

Actors run one after another in a fixed order. Each owns its environment,
its episode-seed sequence and its noise generator, so the learning curve
does not depend on how actors are scheduled.

Example:
    Training on a deterministic scenario::

        from supplywise.agents.training import train
        from supplywise.core.chain import builtin_scenario

        result = train(builtin_scenario("rN0cl"), seed=1, total_steps=500_000)
        result.save_curve("out/curve.csv")
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch
from loguru import logger

from supplywise.agents.ppo import (
    PolicyBundle,
    PpoHyperparams,
    RolloutBatch,
    compute_gae,
    policy_forward,
    policy_sample,
    ppo_update,
)
from supplywise.core.chain import ScenarioSpec
from supplywise.core.environment import SupplyChainEnv
from supplywise.core.stochastic import Purpose, derive_seed
from supplywise.exceptions import ConfigurationError, TrainingDivergenceError
from supplywise.utils.io import write_csv

CURVE_SCHEMA = "supplywise-learning-curve v1"
DEFAULT_EVAL_EVERY = 18_000
DEFAULT_EVAL_EPISODES = 10


@dataclass
class CurveRecord:
    """One point of the learning curve."""

    env_steps: int
    eval_mean_cost: float
    eval_std_cost: float
    is_best: bool


EvaluationCallback = Callable[[CurveRecord], Optional[bool]]


@dataclass
class TrainingResult:
    """Outcome of :func:`train`.

    Attributes:
        best: Snapshot with the lowest mean evaluation cost.
        curve: One record per evaluation.
        final: The bundle as it was when training stopped.
    """

    best: PolicyBundle
    curve: List[CurveRecord]
    final: PolicyBundle

    def curve_frame(self) -> pd.DataFrame:
        return curve_frame(self.curve)

    def save_curve(self, output_path: Union[str, Path]) -> Path:
        return write_csv(self.curve_frame(), output_path, CURVE_SCHEMA)


def curve_frame(curve: Sequence[CurveRecord]) -> pd.DataFrame:
    columns = ["env_steps", "eval_mean_cost", "eval_std_cost", "is_best"]
    return pd.DataFrame([asdict(r) for r in curve], columns=columns)


def holdout_seeds(seed: int, episodes: int) -> List[int]:
    """Episode seeds of the held-out evaluation used during training."""
    return [derive_seed(seed, Purpose.TRAINING_HOLDOUT, i) for i in range(episodes)]


def evaluate_policy(
    bundle: PolicyBundle,
    scenario: ScenarioSpec,
    seeds: Sequence[int],
    factory_cut_units: str = "raw",
    deterministic: bool = True,
    generator: Optional[torch.Generator] = None,
) -> np.ndarray:
    """Total cost of one episode per seed.

    Uses the mean action unless ``deterministic`` is False, in which case
    actions are sampled as during training from ``generator`` (or the
    bundle's own generator).
    """
    env = SupplyChainEnv(scenario, factory_cut_units)
    costs = np.zeros(len(seeds))
    for i, episode_seed in enumerate(seeds):
        obs = env.reset(episode_seed)
        done = False
        while not done:
            sample = policy_sample(bundle, obs, deterministic, generator)
            obs, reward, done, _ = env.step(sample.action)
            costs[i] -= reward
    return costs


class _Actor:
    """One rollout environment with its own episode seeds and noise."""

    def __init__(
        self, scenario: ScenarioSpec, seed: int, index: int, factory_cut_units: str
    ) -> None:
        self.env = SupplyChainEnv(scenario, factory_cut_units)
        self.seed = seed
        self.index = index
        self.episode = 0
        self.generator = torch.Generator().manual_seed(
            derive_seed(seed, Purpose.TRAINING_EPISODE, index) % 2**63
        )
        self.obs = self._next_episode()

    def _next_episode(self) -> np.ndarray:
        episode_seed = derive_seed(self.seed, Purpose.TRAINING_EPISODE, self.index, self.episode)
        self.episode += 1
        return self.env.reset(episode_seed)

    def step(self, bundle: PolicyBundle):
        sample = policy_sample(bundle, self.obs, generator=self.generator)
        obs = self.obs
        next_obs, reward, done, _ = self.env.step(sample.action)
        self.obs = self._next_episode() if done else next_obs
        return obs, sample, reward, done


def collect_rollout(bundle: PolicyBundle, actors: Sequence[_Actor], n_steps: int) -> RolloutBatch:
    """Run every actor for ``n_steps`` and assemble an actor-major batch."""
    hp = bundle.hyperparams
    n = len(actors)
    obs_size = bundle.model.observation_size
    act_size = bundle.model.action_size
    observations = np.zeros((n_steps, n, obs_size))
    actions = np.zeros((n_steps, n, act_size))
    log_probs = np.zeros((n_steps, n))
    values = np.zeros((n_steps, n))
    rewards = np.zeros((n_steps, n))
    dones = np.zeros((n_steps, n), dtype=bool)

    for t in range(n_steps):
        raw_rewards = np.zeros(n)
        for a, actor in enumerate(actors):
            obs, sample, reward, done = actor.step(bundle)
            observations[t, a] = obs
            actions[t, a] = sample.raw_action
            log_probs[t, a] = sample.log_prob
            values[t, a] = sample.value
            raw_rewards[a] = reward
            dones[t, a] = done
        rewards[t] = bundle.normalizer.normalize(raw_rewards, dones[t])

    with torch.no_grad():
        _, _, last = policy_forward(bundle, np.stack([actor.obs for actor in actors]))
    last_values = last.cpu().numpy().astype(float)
    advantages, returns = compute_gae(
        rewards, values, dones, last_values, hp.gamma, hp.gae_lambda
    )
    bundle.num_timesteps += n_steps * n

    def flat(values_: np.ndarray) -> np.ndarray:
        swapped = values_.swapaxes(0, 1)
        return swapped.reshape(n * n_steps, *swapped.shape[2:])

    return RolloutBatch(
        observations=flat(observations),
        actions=flat(actions),
        log_probs=flat(log_probs),
        rewards=flat(rewards),
        values=flat(values),
        dones=flat(dones),
        advantages=flat(advantages),
        returns=flat(returns),
    )


def train(
    scenario: ScenarioSpec,
    seed: int,
    total_steps: int,
    eval_every: int = DEFAULT_EVAL_EVERY,
    eval_episodes: int = DEFAULT_EVAL_EPISODES,
    hyperparams: Optional[PpoHyperparams] = None,
    on_evaluation: Optional[EvaluationCallback] = None,
    checkpoint_path: Optional[Union[str, Path]] = None,
    factory_cut_units: str = "raw",
) -> TrainingResult:
    """Train a PPO policy on one scenario.

    Args:
        scenario: Scenario to train on.
        seed: Seed for weights, episode seeds, action noise and shuffling.
        total_steps: Environment steps to consume (rounded up to a multiple
            of the number of actors).
        eval_every: Evaluate after the first rollout that crosses each multiple
            of this many environment steps. Records carry the actual step count.
        eval_episodes: Held-out episodes per evaluation.
        hyperparams: PPO settings; defaults to the tuned values.
        on_evaluation: Called with each new curve record; returning False
            stops training early.
        checkpoint_path: Where the best bundle is saved whenever it improves.
        factory_cut_units: Factory cut denomination for the action decoder.

    Returns:
        TrainingResult with the best and final bundles and the learning curve.

    Raises:
        ConfigurationError: If hyperparameters are invalid or total_steps is
            smaller than one full rollout.
        TrainingDivergenceError: If an update produces a non-finite loss.
            The error carries the best snapshot and the curve so far.
    """
    hp = (hyperparams or PpoHyperparams()).validate()
    rollout_size = hp.n_steps * hp.n_actors
    if total_steps < rollout_size:
        raise ConfigurationError(
            f"total_steps {total_steps} is smaller than one rollout ({rollout_size} steps)"
        )
    if eval_every < 1 or eval_episodes < 1:
        raise ConfigurationError("eval_every and eval_episodes must be positive")

    actors = [_Actor(scenario, seed, a, factory_cut_units) for a in range(hp.n_actors)]
    env = actors[0].env
    bundle = PolicyBundle.create(env.observation_size, env.action_size, hp, seed=seed)
    eval_seeds = holdout_seeds(seed, eval_episodes)

    logger.info(
        f"Training PPO on '{scenario.name}' (seed {seed}): {total_steps:,} steps, "
        f"{hp.n_actors} actors x {hp.n_steps} steps per rollout"
    )
    curve: List[CurveRecord] = []
    best: Optional[PolicyBundle] = None
    best_cost = math.inf
    next_eval = eval_every
    stopped = False

    while bundle.num_timesteps < total_steps and not stopped:
        remaining = total_steps - bundle.num_timesteps
        n_steps = min(hp.n_steps, math.ceil(remaining / hp.n_actors))
        batch = collect_rollout(bundle, actors, n_steps)
        try:
            ppo_update(bundle, batch)
        except TrainingDivergenceError as e:
            logger.error(f"Training diverged at {bundle.num_timesteps:,} steps: {e}")
            raise TrainingDivergenceError(str(e), best=best, curve=curve) from e

        if next_eval > bundle.num_timesteps:
            continue
        costs = evaluate_policy(bundle, scenario, eval_seeds, factory_cut_units)
        mean, std = float(costs.mean()), float(costs.std())
        improved = mean < best_cost
        if improved:
            best_cost = mean
            best = bundle.snapshot()
            if checkpoint_path is not None:
                best.save(checkpoint_path)
        record = CurveRecord(bundle.num_timesteps, mean, std, improved)
        curve.append(record)
        logger.info(
            f"Evaluation at {bundle.num_timesteps:,} steps: mean cost {mean:,.0f} "
            f"(std {std:,.0f})" + (" *" if improved else "")
        )
        # One evaluation per rollout even when it spans several intervals
        while next_eval <= bundle.num_timesteps:
            next_eval += eval_every
        if on_evaluation is not None and on_evaluation(record) is False:
            logger.info("Training stopped by evaluation callback")
            stopped = True

    if best is None:
        best = bundle.snapshot()
        if checkpoint_path is not None:
            best.save(checkpoint_path)
    logger.success(
        f"Training finished after {bundle.num_timesteps:,} steps; best mean cost "
        + (f"{best_cost:,.0f}" if curve else "not evaluated")
    )
    return TrainingResult(best=best, curve=curve, final=bundle)
