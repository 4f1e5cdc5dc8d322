"""Reproducible demand and lead-time generation.

Demands are seasonal (a sinusoid with ``peaks`` maxima over the horizon) or
regular (a constant mean), optionally perturbed by Gaussian or uniform noise
and clipped to a physical range. Lead times are constant or drawn from a
shifted, truncated Poisson distribution.

Every random draw comes from a counter-based substream addressed by
``(purpose, entity, step)``, so the value a retailer sees at step 40 does not
depend on how many other draws happened before it. This is what lets the LP
bounds, the LP agent and the PPO agent share exactly the same episodes.

Example:
    Sampling a demand trace::

        from supplywise.core.stochastic import DemandSpec, Perturbation, RngStream, sample_demand

        spec = DemandSpec(kind="seasonal", perturbation=Perturbation.gaussian(20))
        rng = RngStream(seed=7)
        demands = [sample_demand(spec, retailer=0, t=t, rng=rng) for t in range(1, 361)]
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from functools import lru_cache
from typing import TYPE_CHECKING, Any, Dict, List

import numpy as np
import pandas as pd
from scipy import stats

if TYPE_CHECKING:
    from supplywise.core.chain import ScenarioSpec


DEMAND_KINDS = ("seasonal", "regular")
PERTURBATION_KINDS = ("none", "gaussian", "uniform")
LEAD_TIME_KINDS = ("constant", "stochastic")


class Purpose(IntEnum):
    """Substream purposes. Values are part of the seed derivation; never renumber."""

    DEMAND = 1
    PRODUCTION_LEAD_TIME = 2
    TRANSPORT_LEAD_TIME = 3
    TRAINING_EPISODE = 4
    EVALUATION_EPISODE = 5
    TRAINING_HOLDOUT = 6
    TUNING = 7


@dataclass(frozen=True)
class Perturbation:
    """Additive demand noise.

    Attributes:
        kind: 'none', 'gaussian' (zero mean, standard deviation ``scale``)
            or 'uniform' (on ``[low, high]``).
        scale: Gaussian standard deviation p.
        low: Lower bound of the uniform noise.
        high: Upper bound of the uniform noise.
    """

    kind: str = "none"
    scale: float = 0.0
    low: float = 0.0
    high: float = 0.0

    @classmethod
    def gaussian(cls, scale: float) -> Perturbation:
        return cls(kind="gaussian", scale=float(scale))

    @classmethod
    def uniform(cls, low: float, high: float) -> Perturbation:
        return cls(kind="uniform", low=float(low), high=float(high))

    def is_zero(self) -> bool:
        """True when the perturbation never changes a demand value."""
        if self.kind == "gaussian":
            return self.scale == 0
        if self.kind == "uniform":
            return self.low == 0 and self.high == 0
        return True

    def draw(self, generator: np.random.Generator) -> float:
        if self.kind == "gaussian":
            return float(generator.normal(0.0, self.scale))
        if self.kind == "uniform":
            return float(generator.uniform(self.low, self.high))
        return 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class DemandSpec:
    """Customer demand model for the retailers.

    Attributes:
        kind: 'seasonal' (sinusoid) or 'regular' (constant mean).
        sin_min: Sinusoid minimum.
        sin_max: Sinusoid maximum.
        clip_min: Lowest physical demand.
        clip_max: Highest physical demand, also the normalization maximum.
        peaks: Number of sinusoid maxima over the horizon.
        perturbation: Additive noise applied before clipping.
        regular_mean: Mean demand of the regular model.
    """

    kind: str = "seasonal"
    sin_min: float = 100.0
    sin_max: float = 300.0
    clip_min: float = 0.0
    clip_max: float = 400.0
    peaks: int = 2
    perturbation: Perturbation = field(default_factory=Perturbation)
    regular_mean: float = 200.0

    def violations(self) -> List[str]:
        """List broken invariants; empty when the spec is valid."""
        problems = []
        if self.kind not in DEMAND_KINDS:
            problems.append(f"demand kind '{self.kind}' must be one of {DEMAND_KINDS}")
        if not self.clip_min <= self.sin_min <= self.sin_max <= self.clip_max:
            problems.append("demand bounds must satisfy clip_min <= sin_min <= sin_max <= clip_max")
        if not self.clip_min <= self.regular_mean <= self.clip_max:
            problems.append("regular_mean must lie within [clip_min, clip_max]")
        if self.peaks < 1:
            problems.append("peaks must be at least 1")
        p = self.perturbation
        if p.kind not in PERTURBATION_KINDS:
            problems.append(f"perturbation kind '{p.kind}' must be one of {PERTURBATION_KINDS}")
        if p.scale < 0:
            problems.append("gaussian perturbation scale must be non-negative")
        if p.low > p.high:
            problems.append("uniform perturbation requires low <= high")
        return problems

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["perturbation"] = self.perturbation.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> DemandSpec:
        data = dict(data)
        perturbation = Perturbation(**data.pop("perturbation", {}))
        return cls(perturbation=perturbation, **data)


@dataclass(frozen=True)
class LeadTimeSpec:
    """Lead-time model shared by production and transport.

    Attributes:
        kind: 'constant' (always ``average``) or 'stochastic'.
        average: Average lead time l^avg in steps.
        maximum: Largest possible lead time l^max in steps.
    """

    kind: str = "stochastic"
    average: int = 2
    maximum: int = 4

    def violations(self) -> List[str]:
        problems = []
        if self.kind not in LEAD_TIME_KINDS:
            problems.append(f"lead time kind '{self.kind}' must be one of {LEAD_TIME_KINDS}")
        if not 1 <= self.average <= self.maximum:
            problems.append("lead times must satisfy 1 <= average <= maximum")
        return problems

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> LeadTimeSpec:
        return cls(**data)


@lru_cache(maxsize=4096)
def _substream_key(seed: int, purpose: int, entity: int) -> int:
    words = np.random.SeedSequence(seed, spawn_key=(purpose, entity)).generate_state(2, np.uint64)
    return int(words[0]) | (int(words[1]) << 64)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random source addressed by (purpose, entity, step).

    Each label maps to its own Philox key (derived from the seed, purpose and
    entity) with the step number placed in the upper counter words, so draws
    are identical across runs and platforms and independent of query order.

    Attributes:
        seed: Non-negative 64-bit episode seed.
    """

    seed: int

    def __post_init__(self) -> None:
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"Invalid seed {self.seed}. Must be a non-negative 64-bit integer")

    def generator(self, purpose: int, entity: int, step: int) -> np.random.Generator:
        """Return a fresh generator for one substream label."""
        key = _substream_key(int(self.seed), int(purpose), int(entity))
        return np.random.Generator(np.random.Philox(key=key, counter=int(step) << 128))


def derive_seed(seed: int, *keys: int) -> int:
    """Derive a deterministic child seed, e.g. ``derive_seed(s, Purpose.EVALUATION_EPISODE, 3)``."""
    state = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(state.generate_state(1, np.uint64)[0])


def sinusoid(spec: DemandSpec, t: int, horizon: int) -> float:
    """Seasonal demand level at step ``t`` before perturbation and clipping.

    Example:
        >>> sinusoid(DemandSpec(), 45, 360)
        300.0
    """
    if t < 0:
        raise ValueError(f"Invalid step {t}. Must be non-negative")
    amplitude = (spec.sin_max - spec.sin_min) / 2.0
    phase = 2.0 * spec.peaks * t * math.pi / horizon
    return spec.sin_min + amplitude * (1.0 + math.sin(phase))


def expected_demand(spec: DemandSpec, t: int, horizon: int) -> float:
    """Unperturbed demand at step ``t``, the value the forecast LP plans for."""
    base = sinusoid(spec, t, horizon) if spec.kind == "seasonal" else spec.regular_mean
    return float(min(max(base, spec.clip_min), spec.clip_max))


def sample_demand(
    spec: DemandSpec,
    retailer: int,
    t: int,
    rng: RngStream,
    horizon: int = 360,
) -> float:
    """Draw the demand of one retailer at step ``t``.

    Args:
        spec: Demand model.
        retailer: Retailer position (0 for the first retailer).
        t: Step the demand is consumed at, within ``1..horizon``.
        rng: Episode random source.
        horizon: Episode length, needed by the seasonal sinusoid.

    Returns:
        Demand in units, clipped to ``[clip_min, clip_max]``.
    """
    base = sinusoid(spec, t, horizon) if spec.kind == "seasonal" else spec.regular_mean
    noise = 0.0
    if not spec.perturbation.is_zero():
        noise = spec.perturbation.draw(rng.generator(Purpose.DEMAND, retailer, t))
    return float(min(max(base + noise, spec.clip_min), spec.clip_max))


@lru_cache(maxsize=64)
def _poisson_cdf_table(mean: float, size: int) -> np.ndarray:
    return stats.poisson.cdf(np.arange(size), mean)


def sample_lead_time(
    spec: LeadTimeSpec,
    entity: int,
    t: int,
    rng: RngStream,
    purpose: int = Purpose.TRANSPORT_LEAD_TIME,
) -> int:
    """Draw the lead time of a dispatch made at step ``t``.

    Stochastic lead times are ``min(Poisson(average - 1) + 1, maximum)``,
    sampled by inverting the Poisson CDF with one uniform draw.

    Args:
        spec: Lead-time model.
        entity: Supplier index (production) or link index (transport).
        t: Dispatch step.
        rng: Episode random source.
        purpose: Purpose.PRODUCTION_LEAD_TIME or Purpose.TRANSPORT_LEAD_TIME.

    Returns:
        Lead time in ``[1, maximum]``.
    """
    if spec.kind == "constant" or spec.average == 1:
        return int(spec.average)
    cdf = _poisson_cdf_table(float(spec.average - 1), spec.maximum - 1)
    u = rng.generator(purpose, entity, t).random()
    k = int(np.searchsorted(cdf, u, side="left"))
    return min(k + 1, spec.maximum)


def expected_lead_time(spec: LeadTimeSpec) -> float:
    """Closed-form mean of :func:`sample_lead_time`."""
    if spec.kind == "constant" or spec.average == 1:
        return float(spec.average)
    mean = spec.average - 1
    cap = spec.maximum - 1
    ks = np.arange(cap)
    body = float(np.sum(ks * stats.poisson.pmf(ks, mean)))
    tail = cap * float(stats.poisson.sf(cap - 1, mean))
    return 1.0 + body + tail


@dataclass
class EpisodeRealization:
    """Every random quantity of one episode, drawn up front.

    Row ``t`` of each array belongs to step ``t``; row 0 is unused padding so
    indices match step numbers.

    Attributes:
        seed: Episode seed the realization was drawn from.
        demands: (h + 1, retailers) demand consumed at step t.
        production_lead: (h + 1, suppliers) lead time of production dispatched at t.
        transport_lead: (h + 1, links) lead time of shipments dispatched at t.
    """

    seed: int
    demands: np.ndarray
    production_lead: np.ndarray
    transport_lead: np.ndarray

    @property
    def horizon(self) -> int:
        return self.demands.shape[0] - 1

    @classmethod
    def sample(cls, scenario: ScenarioSpec, seed: int) -> EpisodeRealization:
        """Draw the realization the simulator would see for ``seed``."""
        chain = scenario.chain
        h = chain.horizon
        rng = RngStream(seed)
        demands = np.zeros((h + 1, len(chain.retailers)))
        for r in range(len(chain.retailers)):
            for t in range(1, h + 1):
                demands[t, r] = sample_demand(scenario.demand, r, t, rng, horizon=h)

        production = np.zeros((h + 1, len(chain.suppliers)), dtype=np.int64)
        transport = np.zeros((h + 1, len(chain.links)), dtype=np.int64)
        for t in range(1, h + 1):
            for s in range(len(chain.suppliers)):
                production[t, s] = sample_lead_time(
                    scenario.lead_time, s, t, rng, purpose=Purpose.PRODUCTION_LEAD_TIME
                )
            for k in range(len(chain.links)):
                transport[t, k] = sample_lead_time(
                    scenario.lead_time, k, t, rng, purpose=Purpose.TRANSPORT_LEAD_TIME
                )
        return cls(
            seed=int(seed),
            demands=demands,
            production_lead=production,
            transport_lead=transport,
        )

    def digest(self) -> str:
        """SHA-256 over the realized values; equal digests mean identical episodes."""
        sha = hashlib.sha256()
        sha.update(np.ascontiguousarray(self.demands, dtype="<f8").tobytes())
        sha.update(np.ascontiguousarray(self.production_lead, dtype="<i8").tobytes())
        sha.update(np.ascontiguousarray(self.transport_lead, dtype="<i8").tobytes())
        return sha.hexdigest()


def forecast_demands(spec: DemandSpec, horizon: int, retailers: int) -> np.ndarray:
    """Unperturbed (h + 1, retailers) demand table with row 0 unused."""
    table = np.zeros((horizon + 1, retailers))
    for t in range(1, horizon + 1):
        table[t, :] = expected_demand(spec, t, horizon)
    return table


def demand_trace(scenario: ScenarioSpec, seed: int) -> pd.DataFrame:
    """Sampled demands as a long table with columns step, retailer, demand."""
    realization = EpisodeRealization.sample(scenario, seed)
    names = [scenario.chain.node_order[n] for n in scenario.chain.retailers]
    rows = [
        {"step": t, "retailer": name, "demand": realization.demands[t, r]}
        for t in range(1, realization.horizon + 1)
        for r, name in enumerate(names)
    ]
    return pd.DataFrame(rows, columns=["step", "retailer", "demand"])
