"""Actor and critic networks.

The actor maps a normalized observation to the mean of a diagonal Gaussian
over normalized actions; its standard deviation comes from a learned
vector that does not depend on the observation. The critic is a separate
perceptron of the same shape with a scalar output.
"""

from __future__ import annotations

import math
from typing import Sequence, Tuple

import torch
from torch import nn

ACTIVATIONS = {"tanh": nn.Tanh, "relu": nn.ReLU}


def _mlp(sizes: Sequence[int], activation: str, output_gain: float) -> nn.Sequential:
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == len(sizes) - 2
        linear = nn.Linear(fan_in, fan_out)
        nn.init.orthogonal_(linear.weight, gain=output_gain if last else math.sqrt(2.0))
        nn.init.zeros_(linear.bias)
        layers.append(linear)
        if not last:
            layers.append(ACTIVATIONS[activation]())
    return nn.Sequential(*layers)


class ActorCritic(nn.Module):
    """Gaussian policy and value function.

    Args:
        observation_size: Length of the normalized observation.
        action_size: Length of the normalized action.
        hidden_sizes: Hidden layer widths, shared by actor and critic.
        activation: 'tanh' or 'relu'.
        dtype: Parameter dtype; float64 is used for gradient checks.

    Example:
        >>> model = ActorCritic(27, 14)
        >>> mean, log_std, value = model(torch.zeros(1, 27))
        >>> mean.shape, value.shape
        (torch.Size([1, 14]), torch.Size([1]))
    """

    def __init__(
        self,
        observation_size: int,
        action_size: int,
        hidden_sizes: Sequence[int] = (64, 64),
        activation: str = "tanh",
        dtype: torch.dtype = torch.float32,
    ) -> None:
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValueError(
                f"Invalid activation '{activation}'. Must be one of {tuple(ACTIVATIONS)}"
            )
        self.observation_size = observation_size
        self.action_size = action_size
        self.hidden_sizes = tuple(int(h) for h in hidden_sizes)
        self.activation = activation

        widths = (observation_size, *self.hidden_sizes)
        self.actor = _mlp((*widths, action_size), activation, output_gain=0.01)
        self.critic = _mlp((*widths, 1), activation, output_gain=1.0)
        self.log_std = nn.Parameter(torch.zeros(action_size))
        self.to(dtype)

    @property
    def dtype(self) -> torch.dtype:
        return self.log_std.dtype

    def forward(self, obs: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Return (mean, log_std, value) for a batch of observations."""
        mean = self.actor(obs)
        value = self.critic(obs).squeeze(-1)
        return mean, self.log_std.expand_as(mean), value
