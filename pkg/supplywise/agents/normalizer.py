"""Running reward normalization.

Rewards are divided by the running standard deviation of the discounted
return, one accumulator per actor, and clipped. Statistics only move while
training; evaluation reports raw costs.
"""

from __future__ import annotations

from typing import Any, Dict

import numpy as np

EPSILON = 1e-8


class RunningMeanStd:
    """Streaming mean and variance with batched updates."""

    def __init__(self, count: float = 1e-4) -> None:
        self.mean = 0.0
        self.var = 1.0
        self.count = count

    def update(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            return
        batch_mean = float(values.mean())
        batch_var = float(values.var())
        batch_count = values.size

        delta = batch_mean - self.mean
        total = self.count + batch_count
        m2 = self.var * self.count + batch_var * batch_count
        m2 += delta * delta * self.count * batch_count / total
        self.mean += delta * batch_count / total
        self.var = m2 / total
        self.count = total


class RewardNormalizer:
    """Scales rewards by the running std of the discounted return.

    Args:
        num_actors: Number of parallel reward streams.
        gamma: Discount used for the return accumulator.
        clip: Symmetric bound on scaled rewards.

    Example:
        >>> norm = RewardNormalizer(num_actors=1, gamma=0.999)
        >>> norm.normalize(np.array([-1.0]), np.array([False]))
        array([-1.])
    """

    def __init__(self, num_actors: int = 1, gamma: float = 0.999, clip: float = 10.0) -> None:
        self.num_actors = num_actors
        self.gamma = gamma
        self.clip = clip
        self.returns = np.zeros(num_actors)
        self.stats = RunningMeanStd()

    def scale(self, rewards: np.ndarray) -> np.ndarray:
        """Scale with the current statistics, leaving them untouched."""
        scaled = np.asarray(rewards, dtype=float) / np.sqrt(self.stats.var + EPSILON)
        return np.clip(scaled, -self.clip, self.clip)

    def normalize(self, rewards: np.ndarray, dones: np.ndarray, update: bool = True) -> np.ndarray:
        """Scale one reward per actor, then fold them into the statistics.

        Args:
            rewards: Raw rewards, shape (num_actors,).
            dones: Episode-end flags; an actor's accumulator restarts after one.
            update: Update the accumulators and running variance.

        Returns:
            Scaled rewards in [-clip, clip].
        """
        rewards = np.asarray(rewards, dtype=float)
        scaled = self.scale(rewards)
        if update:
            self.returns = self.returns * self.gamma + rewards
            self.stats.update(self.returns)
            self.returns[np.asarray(dones, dtype=bool)] = 0.0
        return scaled

    def state_dict(self) -> Dict[str, Any]:
        return {
            "num_actors": self.num_actors,
            "gamma": self.gamma,
            "clip": self.clip,
            "returns": self.returns.tolist(),
            "mean": self.stats.mean,
            "var": self.stats.var,
            "count": self.stats.count,
        }

    @classmethod
    def from_state_dict(cls, data: Dict[str, Any]) -> RewardNormalizer:
        norm = cls(int(data["num_actors"]), float(data["gamma"]), float(data["clip"]))
        norm.returns = np.asarray(data["returns"], dtype=float)
        norm.stats.mean = float(data["mean"])
        norm.stats.var = float(data["var"])
        norm.stats.count = float(data["count"])
        return norm
