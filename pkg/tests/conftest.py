"""Shared pytest fixtures and helpers for SupplyWise tests.

This module provides the catalog scenarios used across test files, short
horizon variants that keep episodes fast, and a builder for tiny chains
used by the exhaustive LP oracle.
"""

from dataclasses import replace
from typing import Sequence

import numpy as np
import pytest
from loguru import logger

from supplywise.core.chain import ChainConfig, ScenarioSpec, builtin_scenario, full_links
from supplywise.core.simulator import SupplyChainSimulator
from supplywise.core.stochastic import DemandSpec, LeadTimeSpec


@pytest.fixture(autouse=True)
def quiet_logs():
    """Keep loguru output out of the test report."""
    logger.disable("supplywise")
    yield
    logger.enable("supplywise")


# Scenario builders

def short_scenario(name: str = "N20", horizon: int = 12) -> ScenarioSpec:
    """Catalog scenario cut to a short horizon.

    Args:
        name: Catalog name
        horizon: Episode length in steps
    """
    spec = builtin_scenario(name)
    return replace(spec, chain=replace(spec.chain, horizon=horizon))


def tiny_scenario(
    layout: Sequence[int] = (1, 1),
    horizon: int = 3,
    demand: float = 20.0,
    stock_cap: float = 40.0,
    production_cap: float = 30.0,
    initial_stock: float = 10.0,
    initial_arrival: float = 10.0,
    stock_costs: Sequence[float] = None,
    production_cost: float = 3.0,
    transport_cost: float = 1.0,
    excess_penalty: float = 10.0,
    unmet_penalty: float = 50.0,
) -> ScenarioSpec:
    """Factory-free chain with constant one-step lead times and regular demand.

    Every node starts with ``initial_stock`` and receives ``initial_arrival``
    at step 1 from production or from each incoming link.
    """
    layout = tuple(layout)
    q = sum(layout)
    links = full_links(layout)
    n_sup = layout[0]
    costs = tuple(stock_costs) if stock_costs is not None else (1.0,) * q
    chain = ChainConfig(
        echelon_layout=layout,
        node_order=tuple(f"node{n}" for n in range(q)),
        links=links,
        horizon=horizon,
        is_factory=(False,) * q,
        processing_ratio=(1.0,) * q,
        stock_cost=costs,
        production_cost=(production_cost,) * n_sup + (0.0,) * (q - n_sup),
        processing_cost=(0.0,) * q,
        transport_cost=transport_cost,
        excess_penalty=excess_penalty,
        unmet_penalty=unmet_penalty,
        production_cap=(production_cap,) * n_sup + (0.0,) * (q - n_sup),
        processing_cap=(0.0,) * q,
        stock_cap=(stock_cap,) * q,
        initial_stock=(initial_stock,) * q,
        initial_production=((initial_arrival,),) * n_sup + ((0.0,),) * (q - n_sup),
        initial_transport=((initial_arrival,),) * len(links),
    )
    return ScenarioSpec(
        name=f"tiny{q}",
        chain=chain,
        demand=DemandSpec(kind="regular", regular_mean=demand),
        lead_time=LeadTimeSpec(kind="constant", average=1, maximum=1),
    )


# Shared fixtures

@pytest.fixture
def default_scenario():
    """The N20 catalog scenario (seasonal demand, stochastic lead times)."""
    return builtin_scenario("N20")


@pytest.fixture
def short_n20():
    """N20 with a 12-step horizon."""
    return short_scenario("N20", 12)


@pytest.fixture
def short_deterministic():
    """N0cl (no noise, constant lead times) with a 12-step horizon."""
    return short_scenario("N0cl", 12)


@pytest.fixture
def tiny():
    """Two-node chain: one supplier feeding one retailer."""
    return tiny_scenario()


@pytest.fixture
def started_simulator(default_scenario):
    """Simulator on N20 reset with seed 7."""
    sim = SupplyChainSimulator(default_scenario)
    sim.reset(seed=7)
    return sim


@pytest.fixture
def rng():
    """Seeded numpy generator for property tests."""
    return np.random.default_rng(12345)


# Test utilities

def assert_mass_balance(outcome, stocks_before):
    """Check one step's stock update against its recorded flows.

    Args:
        outcome: StepOutcome of the step
        stocks_before: Per-node stocks before the step
    """
    met = np.zeros_like(stocks_before)
    q = len(stocks_before)
    retailers = range(q - len(outcome.met), q)
    for i, n in enumerate(retailers):
        met[n] = outcome.met[i]
    expected = stocks_before + outcome.arrived - outcome.discarded_units - met - outcome.consumed
    np.testing.assert_allclose(outcome.stocks, expected, rtol=1e-9, atol=1e-6)
