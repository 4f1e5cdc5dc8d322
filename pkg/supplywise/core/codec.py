"""Conversion between physical quantities and the agent's [-1, 1] space.

Observations are divided by a per-entry maximum and mapped to [-1, 1].
Actions are read as *cuts* into a node's available stock: for a node with
successors m and o, the two rescaled outputs select two cut points in the
stock, the smaller cut is delivered to its own successor, the gap between
the cuts goes to the other successor, and whatever lies beyond the larger
cut stays in stock. Every decoded action is feasible by construction.

:func:`encode_plan` inverts :func:`decode_action` so that a schedule of
physical quantities (the LP agent's plan) can travel through the same
interface as the PPO agent's outputs.

Example:
    Decoding a factory decision::

        from supplywise.core.codec import decode_action

        raw = decode_action(policy_output, simulator.state, scenario.chain)
        simulator.dispatch(raw)
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from supplywise.core.chain import ChainConfig
from supplywise.core.simulator import (
    FEASIBILITY_TOLERANCE,
    Observation,
    RawAction,
    SupplyChainState,
)
from supplywise.exceptions import EncodingError

if TYPE_CHECKING:
    from supplywise.core.chain import ScenarioSpec

# Aliases for readability; both are plain float arrays.
NormalizedObs = np.ndarray
NormalizedAction = np.ndarray

FACTORY_CUT_UNITS = ("raw", "product")


def observation_maxima(scenario: ScenarioSpec) -> np.ndarray:
    """Per-entry maxima used to normalize observations.

    Stocks use the stock capacity. Suppliers' arrivals use the production
    capacity (times ``l_max - 1`` for later arrivals); other nodes use the
    summed stock capacities of their predecessors. Demands use the clipping
    maximum and the remaining-steps entry uses the horizon.
    """
    chain = scenario.chain
    q = chain.num_nodes
    later_factor = scenario.lead_time.maximum - 1
    supplier_set = set(chain.suppliers)
    arriving = np.zeros((q, 2))
    for n in range(q):
        if n in supplier_set:
            nxt = chain.production_cap[n]
        else:
            nxt = sum(chain.stock_cap[p] for p in chain.predecessors(n))
        arriving[n] = (nxt, nxt * later_factor)
    return np.concatenate(
        [
            np.asarray(chain.stock_cap, dtype=float),
            arriving.ravel(),
            np.full(len(chain.retailers), scenario.demand.clip_max, dtype=float),
            [float(chain.horizon)],
        ]
    )


def normalize_observation(obs: Observation, scenario: ScenarioSpec) -> NormalizedObs:
    """Map a physical observation to [-1, 1].

    Each value v with maximum M becomes ``2 * v / M - 1``; entries whose
    maximum is zero map to -1. Results are clipped to [-1, 1] because
    batches dispatched at different steps can arrive together and exceed
    the nominal maximum.

    Args:
        obs: Observation from the simulator.
        scenario: Scenario the observation comes from.

    Returns:
        Normalized observation with the same ordering.

    Example:
        A stock of 400 with capacity 500 maps to 0.6.
    """
    maxima = observation_maxima(scenario)
    values = obs.values if isinstance(obs, Observation) else np.asarray(obs, dtype=float)
    return normalize_with(values, maxima)


def normalize_with(values: np.ndarray, maxima: np.ndarray) -> NormalizedObs:
    """:func:`normalize_observation` with precomputed maxima."""
    ratio = np.divide(values, maxima, out=np.zeros_like(values, dtype=float), where=maxima > 0)
    return np.clip(2.0 * ratio - 1.0, -1.0, 1.0)


def _check_units(factory_cut_units: str) -> None:
    if factory_cut_units not in FACTORY_CUT_UNITS:
        raise ValueError(
            f"Invalid factory_cut_units '{factory_cut_units}'. Must be one of {FACTORY_CUT_UNITS}"
        )


def _cut_base(config: ChainConfig, node: int, stock: float, factory_cut_units: str) -> float:
    if not config.is_factory[node]:
        return stock
    base = min(stock, config.processing_cap[node])
    if factory_cut_units == "product":
        base /= config.processing_ratio[node]
    return base


def _cuts_to_quantities(cuts: np.ndarray) -> np.ndarray:
    # Stable sort: on equal cuts the lower-index successor counts as the smaller cut
    order = np.argsort(cuts, kind="stable")
    ordered = cuts[order]
    quantities = np.empty_like(cuts)
    quantities[order] = np.diff(ordered, prepend=0.0)
    return quantities


def decode_action(
    a: NormalizedAction,
    state: SupplyChainState,
    config: ChainConfig,
    factory_cut_units: str = "raw",
) -> RawAction:
    """Turn a normalized action into physical production and shipments.

    Args:
        a: Normalized action (production entries first, then one entry per
            link in link order). Values outside [-1, 1] are clipped.
        state: State whose stocks the cuts apply to.
        config: Chain of the state.
        factory_cut_units: 'raw' reads factory cuts as raw material consumed;
            'product' reads them as product units shipped, so raw consumed is
            ``processing_ratio`` times the cut.

    Returns:
        Feasible RawAction.

    Example:
        A production output of 0.05 with capacity 400 decodes to 210 units.
    """
    _check_units(factory_cut_units)
    a01 = (np.clip(np.asarray(a, dtype=float), -1.0, 1.0) + 1.0) / 2.0
    n_sup = len(config.suppliers)
    production = a01[:n_sup] * np.asarray(config.production_cap, dtype=float)[:n_sup]

    shipments = np.zeros(len(config.links))
    for n in config.shipping_nodes:
        ks = np.asarray(config.outgoing_links[n])
        base = _cut_base(config, n, float(state.stocks[n]), factory_cut_units)
        quantities = _cuts_to_quantities(a01[n_sup + ks] * base)
        if config.is_factory[n] and factory_cut_units == "product":
            quantities = quantities * config.processing_ratio[n]
        shipments[ks] = quantities
    return RawAction(production=production, shipments=shipments)


def encode_plan(
    quantities: RawAction,
    state: SupplyChainState,
    config: ChainConfig,
    factory_cut_units: str = "raw",
) -> NormalizedAction:
    """Inverse of :func:`decode_action`.

    Shipments from one node are sorted ascending (ties keep link order) and
    their running sums become the cuts, so the smallest quantity is the
    min-cut receiver. A node with no stock to cut encodes as all -1.

    Args:
        quantities: Feasible physical decision for ``state``.
        state: State whose stocks the cuts refer to.
        config: Chain of the state.
        factory_cut_units: Must match the setting used to decode.

    Returns:
        Normalized action in [-1, 1].

    Raises:
        EncodingError: If a quantity is negative or exceeds production
            capacity, stock or processing capacity.

    Example:
        Shipping (200, 20) from a factory holding 295 encodes to about
        (0.492, -0.864).
    """
    _check_units(factory_cut_units)
    names = config.node_order
    n_sup = len(config.suppliers)
    production = np.asarray(quantities.production, dtype=float)
    shipments = np.asarray(quantities.shipments, dtype=float)
    if np.any(production < 0) or np.any(shipments < 0):
        raise EncodingError("Cannot encode negative quantities")

    encoded = np.full(n_sup + len(config.links), -1.0)
    for s in range(n_sup):
        cap = config.production_cap[s]
        if production[s] > cap * (1 + FEASIBILITY_TOLERANCE) + FEASIBILITY_TOLERANCE:
            raise EncodingError(
                f"Production {production[s]:g} at {names[s]} exceeds production_cap {cap:g}"
            )
        if cap > 0:
            encoded[s] = 2.0 * min(production[s] / cap, 1.0) - 1.0

    for n in config.shipping_nodes:
        ks = np.asarray(config.outgoing_links[n])
        stock = float(state.stocks[n])
        qs = shipments[ks]
        total = float(qs.sum())
        bound, limit = "stock", stock
        if config.is_factory[n] and config.processing_cap[n] < stock:
            bound, limit = "processing_cap", config.processing_cap[n]
        if total > limit * (1 + FEASIBILITY_TOLERANCE) + FEASIBILITY_TOLERANCE:
            raise EncodingError(
                f"Shipments {total:g} from {names[n]} exceed {bound} {limit:g}"
            )
        base = _cut_base(config, n, stock, factory_cut_units)
        if base <= 0:
            continue
        if config.is_factory[n] and factory_cut_units == "product":
            qs = qs / config.processing_ratio[n]
        order = np.argsort(qs, kind="stable")
        cuts = np.empty_like(qs)
        cuts[order] = np.cumsum(qs[order])
        encoded[n_sup + ks] = 2.0 * np.minimum(cuts / base, 1.0) - 1.0
    return encoded
