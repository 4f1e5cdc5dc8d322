"""Proximal policy optimization.

The pieces of one PPO iteration are separate functions so they can be
tested in isolation:

- :func:`policy_forward` / :func:`policy_sample` evaluate the Gaussian policy,
- :func:`compute_gae` turns a rollout into advantages and return targets,
- :func:`ppo_loss` computes the clipped surrogate loss and its gradients,
- :func:`adam_step` clips the gradient norm and applies one Adam update,
- :func:`ppo_update` runs the epochs and mini-batches over one rollout.

:class:`PolicyBundle` owns everything that evolves during training (network,
optimizer moments, reward normalizer, shuffling RNG, step counter) and is
the unit that gets checkpointed.

Example:
    Acting with a freshly initialized policy::

        from supplywise.agents.ppo import PolicyBundle, policy_sample

        bundle = PolicyBundle.create(observation_size=27, action_size=14, seed=0)
        sample = policy_sample(bundle, obs, deterministic=True)
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from loguru import logger
from torch.distributions import Normal

from supplywise.agents.networks import ACTIVATIONS, ActorCritic
from supplywise.agents.normalizer import RewardNormalizer
from supplywise.core.codec import NormalizedObs
from supplywise.core.environment import StepResult, SupplyChainEnv
from supplywise.exceptions import (
    ConfigurationError,
    ContractViolationError,
    CorruptedBundleError,
    TrainingDivergenceError,
)
from supplywise.utils.io import atomic_write

BUNDLE_FORMAT = "supplywise-policy-bundle"
BUNDLE_VERSION = 1
ADVANTAGE_EPS = 1e-8

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass(frozen=True)
class PpoHyperparams:
    """PPO settings; the defaults are the tuned values shipped with SupplyWise.

    Attributes:
        n_steps: Transitions collected per actor before each update.
        n_epochs: Passes over each rollout.
        batch_size: Mini-batch size (the last mini-batch may be smaller).
        vf_coef: Weight of the value-function loss.
        clip_range: Probability-ratio clipping epsilon.
        gae_lambda: GAE smoothing factor.
        gamma: Discount factor.
        hidden_sizes: Hidden layer widths of actor and critic.
        learning_rate: Constant Adam learning rate.
        activation: 'tanh' or 'relu'.
        max_grad_norm: Global gradient-norm bound.
        n_actors: Parallel actor environments.
        ent_coef: Entropy bonus weight.
    """

    n_steps: int = 1024
    n_epochs: int = 20
    batch_size: int = 64
    vf_coef: float = 0.88331
    clip_range: float = 0.2
    gae_lambda: float = 0.95
    gamma: float = 0.999
    hidden_sizes: Tuple[int, ...] = (64, 64)
    learning_rate: float = 1e-4
    activation: str = "tanh"
    max_grad_norm: float = 0.5
    n_actors: int = 4
    ent_coef: float = 0.0

    @classmethod
    def baseline(cls) -> PpoHyperparams:
        """Common library defaults for continuous control, before any tuning."""
        return cls(
            n_steps=2048,
            n_epochs=10,
            batch_size=64,
            vf_coef=0.5,
            clip_range=0.2,
            gae_lambda=0.95,
            gamma=0.99,
            hidden_sizes=(64, 64),
            learning_rate=3e-4,
            activation="tanh",
            max_grad_norm=0.5,
        )

    def violations(self) -> List[str]:
        problems = []
        for name in ("n_steps", "n_epochs", "batch_size", "n_actors"):
            if int(getattr(self, name)) < 1:
                problems.append(f"{name} must be at least 1")
        if not self.clip_range > 0:
            problems.append("clip_range must be positive")
        if not 0 < self.gamma <= 1:
            problems.append("gamma must lie in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            problems.append("gae_lambda must lie in [0, 1]")
        if not self.learning_rate > 0:
            problems.append("learning_rate must be positive")
        if not self.max_grad_norm > 0:
            problems.append("max_grad_norm must be positive")
        if self.vf_coef < 0 or self.ent_coef < 0:
            problems.append("loss coefficients must be non-negative")
        if not self.hidden_sizes or any(int(h) < 1 for h in self.hidden_sizes):
            problems.append("hidden_sizes must be positive widths")
        if self.activation not in ACTIVATIONS:
            problems.append(f"activation must be one of {tuple(ACTIVATIONS)}")
        return problems

    def validate(self) -> PpoHyperparams:
        problems = self.violations()
        if problems:
            message = "Invalid PPO hyperparameters: " + "; ".join(problems)
            raise ConfigurationError(message, problems)
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["hidden_sizes"] = list(self.hidden_sizes)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> PpoHyperparams:
        values = dict(data)
        if "hidden_sizes" in values:
            values["hidden_sizes"] = tuple(int(h) for h in values["hidden_sizes"])
        return cls(**values)


class PolicyBundle:
    """Network, optimizer and training state that travel together.

    Attributes:
        model: Actor-critic network.
        optimizer: Adam over all model parameters.
        normalizer: Reward normalizer (frozen outside training).
        hyperparams: Settings the bundle was trained with.
        generator: RNG for mini-batch shuffling.
        num_timesteps: Environment steps consumed so far.
    """

    def __init__(
        self,
        model: ActorCritic,
        optimizer: torch.optim.Optimizer,
        normalizer: RewardNormalizer,
        hyperparams: PpoHyperparams,
        generator: torch.Generator,
        num_timesteps: int = 0,
    ) -> None:
        self.model = model
        self.optimizer = optimizer
        self.normalizer = normalizer
        self.hyperparams = hyperparams
        self.generator = generator
        self.num_timesteps = num_timesteps

    @classmethod
    def create(
        cls,
        observation_size: int,
        action_size: int,
        hyperparams: Optional[PpoHyperparams] = None,
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ) -> PolicyBundle:
        """Build a freshly initialized bundle; equal seeds give equal weights."""
        hp = (hyperparams or PpoHyperparams()).validate()
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed % 2**63)
            model = ActorCritic(
                observation_size, action_size, hp.hidden_sizes, hp.activation, dtype
            )
        generator = torch.Generator().manual_seed(seed % 2**63)
        return cls(
            model=model,
            optimizer=_adam(model, hp),
            normalizer=RewardNormalizer(hp.n_actors, hp.gamma),
            hyperparams=hp,
            generator=generator,
        )

    @property
    def dtype(self) -> torch.dtype:
        return self.model.dtype

    def parameters(self) -> List[torch.nn.Parameter]:
        return list(self.model.parameters())

    def state_dict(self) -> Dict[str, Any]:
        """Everything needed to resume, as tensors and plain Python values."""
        model = self.model
        return {
            "format": BUNDLE_FORMAT,
            "format_version": BUNDLE_VERSION,
            "observation_size": model.observation_size,
            "action_size": model.action_size,
            "dtype": str(model.dtype).replace("torch.", ""),
            "hyperparams": self.hyperparams.to_dict(),
            "model": model.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "normalizer": self.normalizer.state_dict(),
            "generator": self.generator.get_state(),
            "num_timesteps": int(self.num_timesteps),
        }

    @classmethod
    def from_state_dict(cls, data: Dict[str, Any]) -> PolicyBundle:
        if data.get("format") != BUNDLE_FORMAT:
            raise CorruptedBundleError("Not a SupplyWise policy bundle")
        if data.get("format_version") != BUNDLE_VERSION:
            raise CorruptedBundleError(
                f"Unsupported bundle version {data.get('format_version')}, "
                f"expected {BUNDLE_VERSION}"
            )
        try:
            hp = PpoHyperparams.from_dict(data["hyperparams"])
            model = ActorCritic(
                data["observation_size"],
                data["action_size"],
                hp.hidden_sizes,
                hp.activation,
                _DTYPES[data["dtype"]],
            )
            model.load_state_dict(data["model"])
            optimizer = _adam(model, hp)
            optimizer.load_state_dict(data["optimizer"])
            generator = torch.Generator()
            generator.set_state(data["generator"])
            bundle = cls(
                model=model,
                optimizer=optimizer,
                normalizer=RewardNormalizer.from_state_dict(data["normalizer"]),
                hyperparams=hp,
                generator=generator,
                num_timesteps=int(data["num_timesteps"]),
            )
        except (KeyError, TypeError, ValueError, RuntimeError) as e:
            raise CorruptedBundleError(f"Malformed policy bundle: {e}") from e
        check_finite(bundle)
        return bundle

    def snapshot(self) -> PolicyBundle:
        """Independent deep copy of the current state."""
        return PolicyBundle.from_state_dict(copy.deepcopy(self.state_dict()))

    def restore(self, other: PolicyBundle) -> None:
        """Overwrite this bundle's state with ``other``'s, in place."""
        state = copy.deepcopy(other.state_dict())
        self.model.load_state_dict(state["model"])
        self.optimizer.load_state_dict(state["optimizer"])
        self.normalizer = RewardNormalizer.from_state_dict(state["normalizer"])
        self.generator.set_state(state["generator"])
        self.num_timesteps = state["num_timesteps"]

    def save(self, output_path: Union[str, Path]) -> Path:
        """Write the bundle atomically with ``torch.save``."""
        output_path = Path(output_path)
        with atomic_write(output_path, "wb") as f:
            torch.save(self.state_dict(), f)
        logger.debug(f"Saved policy bundle to {output_path}")
        return output_path

    @classmethod
    def load(cls, path: Union[str, Path]) -> PolicyBundle:
        """Load a bundle written by :meth:`save`.

        Raises:
            FileNotFoundError: If the file does not exist.
            CorruptedBundleError: If the file is unreadable, of another
                version, or holds non-finite parameters.
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Policy bundle not found: {path}")
        try:
            data = torch.load(path, map_location="cpu", weights_only=True)
        except Exception as e:
            raise CorruptedBundleError(f"Cannot read policy bundle {path}: {e}") from e
        if not isinstance(data, dict):
            raise CorruptedBundleError(f"Cannot read policy bundle {path}: not a mapping")
        return cls.from_state_dict(data)


def _adam(model: ActorCritic, hp: PpoHyperparams) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=hp.learning_rate, betas=(0.9, 0.999), eps=1e-8)


def check_finite(bundle: PolicyBundle) -> None:
    """Raise CorruptedBundleError if any parameter is nan or infinite."""
    for name, param in bundle.model.named_parameters():
        if not torch.all(torch.isfinite(param)):
            raise CorruptedBundleError(f"Parameter '{name}' holds non-finite values")


def _as_tensor(values: Union[np.ndarray, torch.Tensor], dtype: torch.dtype) -> torch.Tensor:
    if isinstance(values, torch.Tensor):
        return values.to(dtype)
    return torch.as_tensor(np.asarray(values), dtype=dtype)


def policy_forward(
    bundle: PolicyBundle, obs: Union[NormalizedObs, torch.Tensor]
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Evaluate the policy mean, log-std and value for one or more observations.

    Gradients flow through the outputs; wrap in ``torch.no_grad()`` when
    acting.

    Raises:
        CorruptedBundleError: If a parameter is not finite.
    """
    check_finite(bundle)
    return bundle.model(_as_tensor(obs, bundle.dtype))


class PolicySample(NamedTuple):
    """Action drawn from the policy.

    Attributes:
        action: Action clipped to [-1, 1], sent to the environment.
        raw_action: Pre-clip Gaussian sample; log_prob refers to it.
        log_prob: Diagonal-Gaussian log-density of ``raw_action``.
        value: Critic estimate of the observation.
    """

    action: np.ndarray
    raw_action: np.ndarray
    log_prob: float
    value: float


def policy_sample(
    bundle: PolicyBundle,
    obs: NormalizedObs,
    deterministic: bool = False,
    generator: Optional[torch.Generator] = None,
) -> PolicySample:
    """Draw ``mean + std * z`` with z standard normal, or the mean itself.

    Args:
        bundle: Policy to sample from.
        obs: One normalized observation.
        deterministic: Return the mean action and draw nothing.
        generator: Noise source; defaults to the bundle's generator.
    """
    with torch.no_grad():
        mean, log_std, value = policy_forward(bundle, obs)
        std = log_std.exp()
        if deterministic:
            raw = mean
        else:
            noise = torch.randn(
                mean.shape, generator=generator or bundle.generator, dtype=mean.dtype
            )
            raw = mean + std * noise
        log_prob = Normal(mean, std).log_prob(raw).sum(-1)
    raw_np = raw.cpu().numpy().astype(float)
    return PolicySample(
        action=np.clip(raw_np, -1.0, 1.0),
        raw_action=raw_np,
        log_prob=float(log_prob),
        value=float(value),
    )


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    last_value: Union[float, np.ndarray],
    gamma: float,
    lam: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation by backward recursion.

    ``dones[t]`` marks transition t as the last of its episode: nothing is
    bootstrapped across it. A rollout cut mid-episode bootstraps its last
    transition with ``last_value``.

    Args:
        rewards: (T,) or (T, actors) rewards.
        values: Critic estimates aligned with ``rewards``.
        dones: Episode-end flags aligned with ``rewards``.
        last_value: Value of the state after the final transition.
        gamma: Discount factor.
        lam: GAE smoothing factor.

    Returns:
        (advantages, returns) with returns = advantages + values.

    Raises:
        ContractViolationError: If the arrays are not aligned.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ContractViolationError(
            f"GAE inputs differ in shape: rewards {rewards.shape}, values {values.shape}, "
            f"dones {dones.shape}"
        )
    next_value = np.broadcast_to(np.asarray(last_value, dtype=float), rewards.shape[1:])
    advantages = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[1:])
    for t in reversed(range(len(rewards))):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        advantages[t] = running
        next_value = values[t]
    return advantages, advantages + values


@dataclass
class RolloutBatch:
    """Flattened transitions of one rollout, actor-major.

    All arrays share their first dimension.
    """

    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __post_init__(self) -> None:
        sizes = {name: len(getattr(self, name)) for name in self.__dataclass_fields__}
        if len(set(sizes.values())) > 1:
            raise ContractViolationError(f"Rollout arrays differ in length: {sizes}")
        if not np.all(np.isfinite(self.advantages)):
            raise ContractViolationError("Rollout advantages are not finite")

    def __len__(self) -> int:
        return len(self.rewards)

    def subset(self, index: np.ndarray) -> RolloutBatch:
        fields = self.__dataclass_fields__
        return RolloutBatch(**{name: getattr(self, name)[index] for name in fields})

    def minibatches(self, batch_size: int, generator: torch.Generator) -> Iterator[RolloutBatch]:
        """Shuffle and yield mini-batches; the last one holds the remainder."""
        order = torch.randperm(len(self), generator=generator).numpy()
        for start in range(0, len(self), batch_size):
            yield self.subset(order[start : start + batch_size])


@dataclass
class LossOutput:
    """Loss value, gradients per parameter and diagnostics."""

    loss: float
    grads: List[torch.Tensor]
    stats: Dict[str, float] = field(default_factory=dict)


def clipped_surrogate(
    ratio: torch.Tensor, advantages: torch.Tensor, clip_range: float
) -> torch.Tensor:
    """Per-sample ``min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)``."""
    clipped = torch.clamp(ratio, 1.0 - clip_range, 1.0 + clip_range)
    return torch.min(ratio * advantages, clipped * advantages)


def ppo_loss(
    bundle: PolicyBundle, minibatch: RolloutBatch, normalize_advantages: bool = True
) -> LossOutput:
    """Clipped PPO loss ``-L_clip + c1 * L_vf - c2 * entropy`` and its gradients.

    Args:
        bundle: Policy being optimized.
        minibatch: Transitions with their collecting-policy log-probs.
        normalize_advantages: Standardize advantages within the mini-batch.

    Returns:
        LossOutput with one gradient per model parameter.

    Raises:
        TrainingDivergenceError: If the loss is not finite.
    """
    hp = bundle.hyperparams
    dtype = bundle.dtype
    obs = _as_tensor(minibatch.observations, dtype)
    actions = _as_tensor(minibatch.actions, dtype)
    old_log_probs = _as_tensor(minibatch.log_probs, dtype)
    returns = _as_tensor(minibatch.returns, dtype)
    advantages = _as_tensor(minibatch.advantages, dtype)
    if normalize_advantages and len(advantages) > 1:
        advantages = (advantages - advantages.mean()) / (advantages.std() + ADVANTAGE_EPS)

    mean, log_std, value = bundle.model(obs)
    dist = Normal(mean, log_std.exp())
    log_probs = dist.log_prob(actions).sum(-1)
    ratio = torch.exp(log_probs - old_log_probs)

    policy_loss = -clipped_surrogate(ratio, advantages, hp.clip_range).mean()
    value_loss = torch.mean((value - returns) ** 2)
    entropy = dist.entropy().sum(-1).mean()
    loss = policy_loss + hp.vf_coef * value_loss - hp.ent_coef * entropy
    if not torch.isfinite(loss):
        raise TrainingDivergenceError(f"Non-finite PPO loss ({float(loss)})")

    params = bundle.parameters()
    grads = list(torch.autograd.grad(loss, params, allow_unused=True))
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
    with torch.no_grad():
        log_ratio = log_probs - old_log_probs
        stats = {
            "policy_loss": float(policy_loss),
            "value_loss": float(value_loss),
            "entropy": float(entropy),
            "approx_kl": float(((ratio - 1.0) - log_ratio).mean()),
            "clip_fraction": float(((ratio - 1.0).abs() > hp.clip_range).to(dtype).mean()),
        }
    return LossOutput(loss=float(loss), grads=grads, stats=stats)


def adam_step(
    optimizer: torch.optim.Optimizer,
    params: Sequence[torch.nn.Parameter],
    grads: Sequence[torch.Tensor],
    max_grad_norm: float,
) -> float:
    """Scale gradients to a global norm of at most ``max_grad_norm`` and step Adam.

    Returns:
        The global gradient norm before clipping.

    Raises:
        ContractViolationError: If params and grads do not match.
    """
    if len(params) != len(grads):
        raise ContractViolationError(f"{len(grads)} gradients for {len(params)} parameters")
    for param, grad in zip(params, grads):
        if grad.shape != param.shape:
            raise ContractViolationError(
                f"Gradient shape {tuple(grad.shape)} does not match parameter {tuple(param.shape)}"
            )
        param.grad = grad.detach().clone()
    norm = torch.nn.utils.clip_grad_norm_(params, max_grad_norm)
    optimizer.step()
    optimizer.zero_grad(set_to_none=True)
    return float(norm)


def ppo_update(bundle: PolicyBundle, batch: RolloutBatch) -> Dict[str, float]:
    """Run ``n_epochs`` of mini-batch updates over one rollout.

    On divergence the bundle is rolled back to its state before the update
    and the error propagates.

    Returns:
        Diagnostics averaged over all mini-batches.
    """
    hp = bundle.hyperparams
    before = bundle.snapshot()
    totals: Dict[str, float] = {}
    count = 0
    try:
        for _ in range(hp.n_epochs):
            for minibatch in batch.minibatches(hp.batch_size, bundle.generator):
                out = ppo_loss(bundle, minibatch)
                out.stats["grad_norm"] = adam_step(
                    bundle.optimizer, bundle.parameters(), out.grads, hp.max_grad_norm
                )
                for key, value in out.stats.items():
                    totals[key] = totals.get(key, 0.0) + value
                count += 1
        check_finite(bundle)
    except (TrainingDivergenceError, CorruptedBundleError) as e:
        bundle.restore(before)
        raise TrainingDivergenceError(f"PPO update diverged: {e}") from e
    stats = {key: value / max(count, 1) for key, value in totals.items()}
    logger.debug(
        f"PPO update: policy {stats.get('policy_loss', 0):.4f}, "
        f"value {stats.get('value_loss', 0):.4f}, kl {stats.get('approx_kl', 0):.5f}"
    )
    return stats


class PpoAgent:
    """Drives an environment with a bundle's deterministic (mean) actions."""

    def __init__(
        self, bundle: PolicyBundle, name: str = "ppo", factory_cut_units: str = "raw"
    ) -> None:
        self.bundle = bundle
        self.name = name
        self.factory_cut_units = factory_cut_units

    def begin_episode(self) -> None:
        pass

    def act(self, env: SupplyChainEnv, obs: NormalizedObs) -> StepResult:
        sample = policy_sample(self.bundle, obs, deterministic=True)
        return env.step(sample.action)
