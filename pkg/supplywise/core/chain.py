"""Supply-chain configuration and the scenario catalog.

A chain is a layered network: the first echelon holds suppliers (which
produce raw material), the last holds retailers (which face customer
demand), and every node links to every node of the next echelon. Nodes may
be flagged as factories, which turn ``processing_ratio`` units of raw
material into one unit of product when they ship.

Per-node arrays follow ``node_order``; per-link arrays follow ``links``.
Production and processing parameters are stored per node as well and are
simply zero where they do not apply.

Example:
    Loading a catalog scenario::

        from supplywise.core.chain import builtin_scenario, validate_scenario

        scenario = builtin_scenario("N20")
        assert validate_scenario(scenario).ok
        scenario.save("my_scenarios/N20.toml")
"""

from __future__ import annotations

import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import tomli_w
from loguru import logger

from supplywise.core.stochastic import DemandSpec, LeadTimeSpec, Perturbation
from supplywise.exceptions import ConfigurationError, UnknownScenarioError


DEFAULT_NODE_ORDER = (
    "supplier1",
    "supplier2",
    "factory1",
    "factory2",
    "wholesaler1",
    "wholesaler2",
    "retailer1",
    "retailer2",
)

# Catalog names in the order they are listed to users.
SCENARIO_NAMES = (
    "N0",
    "N20",
    "N40",
    "N60",
    "N0cl",
    "N20cl",
    "N40cl",
    "N60cl",
    "rN0",
    "rN50",
    "rN100",
    "rU200",
    "rN0cl",
    "rN50cl",
    "rN100cl",
    "rU200cl",
    "N20stc",
)

_SEASONAL_NOISE = {"N0": 0.0, "N20": 20.0, "N40": 40.0, "N60": 60.0}
_REGULAR_NOISE = {
    "rN0": Perturbation.gaussian(0.0),
    "rN50": Perturbation.gaussian(50.0),
    "rN100": Perturbation.gaussian(100.0),
    "rU200": Perturbation.uniform(-200.0, 200.0),
}
_STC_STOCK_COSTS = (1.0, 2.0, 1.0, 2.0, 5.0, 6.0, 5.0, 6.0)

_PER_NODE_FIELDS = (
    "is_factory",
    "processing_ratio",
    "stock_cost",
    "production_cost",
    "processing_cost",
    "production_cap",
    "processing_cap",
    "stock_cap",
    "initial_stock",
    "initial_production",
)


def _tupled(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return tuple(_tupled(v) for v in value)
    return value


def _listed(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return [_listed(v) for v in value]
    return value


@dataclass(frozen=True)
class ChainConfig:
    """Topology, costs, capacities and initial conditions of a supply chain.

    Attributes:
        echelon_layout: Number of nodes per echelon, suppliers first.
        node_order: Node names in canonical index order.
        links: (source, destination) node-index pairs. Shipment actions use
            this order.
        horizon: Episode length h in steps.
        is_factory: Per-node factory flag f_n.
        processing_ratio: Per-node raw units per product unit r_n.
        stock_cost: Per-node cost per unit held per step c^s_n.
        production_cost: Per-node production cost c^p_n (suppliers only).
        processing_cost: Per-node cost per raw unit processed c^f_n (factories only).
        transport_cost: Cost per unit shipped c^t.
        excess_penalty: Cost per unit discarded above capacity c^e.
        unmet_penalty: Cost per unit of lost sales c^d.
        production_cap: Per-node production capacity b^p_n (suppliers only).
        processing_cap: Per-node raw processing capacity b^f_n (factories only).
        stock_cap: Per-node stock capacity b^s_n.
        transport_cap: Per-node shipment capacity b^t_n; None means stock_cap.
        initial_stock: Per-node stock at t = 0.
        initial_production: Per-node units arriving at steps 1..k from
            production started before the episode.
        initial_transport: Per-link units arriving at steps 1..k from
            shipments made before the episode.
    """

    echelon_layout: Tuple[int, ...]
    node_order: Tuple[str, ...]
    links: Tuple[Tuple[int, int], ...]
    horizon: int
    is_factory: Tuple[bool, ...]
    processing_ratio: Tuple[float, ...]
    stock_cost: Tuple[float, ...]
    production_cost: Tuple[float, ...]
    processing_cost: Tuple[float, ...]
    transport_cost: float
    excess_penalty: float
    unmet_penalty: float
    production_cap: Tuple[float, ...]
    processing_cap: Tuple[float, ...]
    stock_cap: Tuple[float, ...]
    initial_stock: Tuple[float, ...]
    initial_production: Tuple[Tuple[float, ...], ...]
    initial_transport: Tuple[Tuple[float, ...], ...]
    transport_cap: Optional[Tuple[float, ...]] = None

    @property
    def num_nodes(self) -> int:
        return len(self.node_order)

    @cached_property
    def echelon_of(self) -> Tuple[int, ...]:
        owner: List[int] = []
        for echelon, size in enumerate(self.echelon_layout):
            owner.extend([echelon] * size)
        return tuple(owner)

    @cached_property
    def suppliers(self) -> Tuple[int, ...]:
        return tuple(range(self.echelon_layout[0]))

    @cached_property
    def retailers(self) -> Tuple[int, ...]:
        return tuple(range(self.num_nodes - self.echelon_layout[-1], self.num_nodes))

    @cached_property
    def factories(self) -> Tuple[int, ...]:
        return tuple(n for n, flag in enumerate(self.is_factory) if flag)

    @cached_property
    def outgoing_links(self) -> Tuple[Tuple[int, ...], ...]:
        """Link indices leaving each node, in link order."""
        return tuple(
            tuple(k for k, (src, _) in enumerate(self.links) if src == n)
            for n in range(self.num_nodes)
        )

    @cached_property
    def incoming_links(self) -> Tuple[Tuple[int, ...], ...]:
        """Link indices entering each node, in link order."""
        return tuple(
            tuple(k for k, (_, dst) in enumerate(self.links) if dst == n)
            for n in range(self.num_nodes)
        )

    @cached_property
    def shipping_nodes(self) -> Tuple[int, ...]:
        """Nodes with at least one outgoing link, in node order."""
        return tuple(n for n in range(self.num_nodes) if self.outgoing_links[n])

    @property
    def initial_steps(self) -> int:
        """Number of arrival steps covered by the initial pipelines."""
        rows = list(self.initial_production) + list(self.initial_transport)
        return max((len(row) for row in rows), default=0)

    def effective_transport_cap(self) -> Tuple[float, ...]:
        return self.transport_cap if self.transport_cap is not None else self.stock_cap

    def successors(self, node: int) -> Tuple[int, ...]:
        return tuple(self.links[k][1] for k in self.outgoing_links[node])

    def predecessors(self, node: int) -> Tuple[int, ...]:
        return tuple(self.links[k][0] for k in self.incoming_links[node])

    def link_index(self, source: int, destination: int) -> int:
        try:
            return self.links.index((source, destination))
        except ValueError:
            raise KeyError(f"No link {self.node_order[source]} -> {self.node_order[destination]}")

    def link_name(self, k: int) -> str:
        src, dst = self.links[k]
        return f"{self.node_order[src]}->{self.node_order[dst]}"

    def to_dict(self) -> Dict[str, Any]:
        """Plain-data form (lists instead of tuples), omitting an unset transport_cap."""
        data = {f.name: _listed(getattr(self, f.name)) for f in fields(self)}
        if data["transport_cap"] is None:
            del data["transport_cap"]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> ChainConfig:
        values = {key: _tupled(value) for key, value in data.items()}
        values["links"] = tuple((int(src), int(dst)) for src, dst in values["links"])
        values["is_factory"] = tuple(bool(flag) for flag in values["is_factory"])
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigurationError(f"Malformed chain section: {e}")


def full_links(echelon_layout: Sequence[int]) -> Tuple[Tuple[int, int], ...]:
    """Every node to every node of the next echelon, source-major."""
    links = []
    start = 0
    for size, next_size in zip(echelon_layout, echelon_layout[1:]):
        for src in range(start, start + size):
            for dst in range(start + size, start + size + next_size):
                links.append((src, dst))
        start += size
    return tuple(links)


def default_chain(horizon: int = 360, average_lead: int = 2) -> ChainConfig:
    """The common configuration shared by every catalog scenario.

    Initial in-transit material per arrival step: each supplier receives its
    production capacity, each factory receives its processing capacity split
    evenly between the two suppliers, and each wholesaler or retailer
    receives 240 units per incoming link.
    """
    links = full_links((2, 2, 2, 2))
    factory_inbound = {2: 600.0, 3: 840.0}
    transport = []
    for src, dst in links:
        per_step = factory_inbound[dst] / 2 if dst in factory_inbound else 240.0
        transport.append((per_step,) * average_lead)
    zeros = (0.0,) * average_lead
    return ChainConfig(
        echelon_layout=(2, 2, 2, 2),
        node_order=DEFAULT_NODE_ORDER,
        links=links,
        horizon=horizon,
        is_factory=(False, False, True, True, False, False, False, False),
        processing_ratio=(1.0, 1.0, 3.0, 3.0, 1.0, 1.0, 1.0, 1.0),
        stock_cost=(1.0,) * 8,
        production_cost=(6.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        processing_cost=(0.0, 0.0, 12.0, 10.0, 0.0, 0.0, 0.0, 0.0),
        transport_cost=2.0,
        excess_penalty=10.0,
        unmet_penalty=216.0,
        production_cap=(600.0, 840.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        processing_cap=(0.0, 0.0, 840.0, 960.0, 0.0, 0.0, 0.0, 0.0),
        stock_cap=(1600.0, 1800.0, 6400.0, 7200.0, 1600.0, 1800.0, 1600.0, 1800.0),
        initial_stock=(800.0,) * 8,
        initial_production=((600.0,) * average_lead, (840.0,) * average_lead) + (zeros,) * 6,
        initial_transport=tuple(transport),
    )


@dataclass
class ValidationResult:
    """Outcome of a validation pass; violations are data, not exceptions."""

    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def raise_if_invalid(self, subject: str = "configuration") -> None:
        if self.violations:
            raise ConfigurationError(
                f"Invalid {subject}: " + "; ".join(self.violations), self.violations
            )


def validate_config(config: ChainConfig) -> ValidationResult:
    """Check every structural invariant of a chain configuration.

    Args:
        config: Configuration to check.

    Returns:
        ValidationResult listing every violated invariant (empty when valid).

    Example:
        >>> validate_config(default_chain()).ok
        True
    """
    problems: List[str] = []
    q = config.num_nodes
    names = config.node_order

    if not config.echelon_layout or any(size < 1 for size in config.echelon_layout):
        problems.append("echelon layout must contain positive sizes")
        return ValidationResult(problems)
    if sum(config.echelon_layout) != q:
        covered = sum(config.echelon_layout)
        problems.append(f"echelon layout covers {covered} nodes, node order has {q}")
        return ValidationResult(problems)
    if config.horizon < 1:
        problems.append("horizon must be at least 1 step")

    per_node = {name: getattr(config, name) for name in _PER_NODE_FIELDS}
    if config.transport_cap is not None:
        per_node["transport_cap"] = config.transport_cap
    for name, values in per_node.items():
        if len(values) != q:
            problems.append(f"{name} has {len(values)} entries, expected {q}")
    if len(config.initial_transport) != len(config.links):
        problems.append(
            f"initial_transport has {len(config.initial_transport)} entries, "
            f"expected {len(config.links)}"
        )
    if problems:
        return ValidationResult(problems)

    numeric: Dict[str, Any] = {
        key: values for key, values in per_node.items() if key not in ("is_factory",)
    }
    numeric["initial_transport"] = config.initial_transport
    numeric["scalar costs"] = (config.transport_cost, config.excess_penalty, config.unmet_penalty)
    for name, values in numeric.items():
        flat = [v for row in values for v in (row if isinstance(row, tuple) else (row,))]
        if any(not math.isfinite(v) or v < 0 for v in flat):
            problems.append(f"{name} must be non-negative and finite")

    seen = set()
    echelon = config.echelon_of
    last = len(config.echelon_layout) - 1
    for src, dst in config.links:
        if not (0 <= src < q and 0 <= dst < q):
            problems.append(f"link ({src}, {dst}) references an unknown node")
            continue
        label = f"{names[src]}->{names[dst]}"
        if (src, dst) in seen:
            problems.append(f"duplicate link {label}")
        seen.add((src, dst))
        if echelon[src] == last:
            problems.append(f"retailer {names[src]} has an outgoing link {label}")
        if echelon[dst] == 0:
            problems.append(f"supplier {names[dst]} has an incoming link {label}")
        if echelon[dst] != echelon[src] + 1:
            problems.append(f"non-adjacent echelon link {label}")
    for src in range(q):
        for dst in range(q):
            if echelon[src] != last and echelon[dst] == echelon[src] + 1 and (src, dst) not in seen:
                problems.append(f"missing link {names[src]}->{names[dst]}")

    for n in range(q):
        if config.initial_stock[n] > config.stock_cap[n]:
            problems.append(
                f"initial stock exceeds capacity at {names[n]} "
                f"({config.initial_stock[n]:g} > {config.stock_cap[n]:g})"
            )
        if not config.is_factory[n] and config.processing_ratio[n] != 1:
            problems.append(f"processing ratio must be 1 at non-factory node {names[n]}")
        if config.is_factory[n] and config.processing_ratio[n] <= 0:
            problems.append(f"processing ratio must be positive at factory {names[n]}")
        if echelon[n] != 0 and any(v != 0 for v in config.initial_production[n]):
            problems.append(f"initial production at non-supplier {names[n]}")

    lengths = {len(row) for row in list(config.initial_production) + list(config.initial_transport)}
    if len(lengths) > 1:
        problems.append("initial pipelines must all cover the same number of arrival steps")

    return ValidationResult(problems)


@dataclass(frozen=True)
class ScenarioSpec:
    """A named experiment: chain, demand model and lead-time model.

    Attributes:
        name: Catalog name or a user-defined identifier.
        chain: Chain configuration.
        demand: Customer demand model.
        lead_time: Production and transport lead-time model.
    """

    name: str
    chain: ChainConfig
    demand: DemandSpec
    lead_time: LeadTimeSpec

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "chain": self.chain.to_dict(),
            "demand": self.demand.to_dict(),
            "lead_time": self.lead_time.to_dict(),
        }

    def save(self, output_path: Union[str, Path]) -> None:
        """Write the scenario as a TOML file.

        Args:
            output_path: Destination file; parent directories are created.
        """
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, "wb") as f:
            tomli_w.dump(self.to_dict(), f)
        logger.debug(f"Saved scenario '{self.name}' to {output_path}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> ScenarioSpec:
        missing = [key for key in ("name", "chain", "demand", "lead_time") if key not in data]
        if missing:
            raise ConfigurationError(f"Scenario file is missing sections: {', '.join(missing)}")
        return cls(
            name=str(data["name"]),
            chain=ChainConfig.from_dict(data["chain"]),
            demand=DemandSpec.from_dict(data["demand"]),
            lead_time=LeadTimeSpec.from_dict(data["lead_time"]),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> ScenarioSpec:
        """Read a scenario TOML file.

        Raises:
            FileNotFoundError: If the file does not exist.
            ConfigurationError: If a section is missing or malformed.
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Scenario file not found: {path}")
        with open(path, "rb") as f:
            data = tomllib.load(f)
        return cls.from_dict(data)


def validate_scenario(spec: ScenarioSpec) -> ValidationResult:
    """Validate the chain plus the demand and lead-time models of a scenario."""
    result = validate_config(spec.chain)
    problems = list(result.violations)
    if not spec.name:
        problems.append("scenario name must not be empty")
    problems.extend(spec.demand.violations())
    problems.extend(spec.lead_time.violations())
    if not problems and spec.chain.initial_steps != spec.lead_time.average:
        problems.append(
            f"initial pipelines cover {spec.chain.initial_steps} arrival steps, "
            f"average lead time is {spec.lead_time.average}"
        )
    return ValidationResult(problems)


def list_scenarios() -> List[str]:
    return list(SCENARIO_NAMES)


def builtin_scenario(name: str) -> ScenarioSpec:
    """Build one of the 17 catalog scenarios.

    Args:
        name: Catalog name, e.g. 'N20', 'rU200cl' or 'N20stc'.

    Returns:
        ScenarioSpec with the common chain and the named variation.

    Raises:
        UnknownScenarioError: If ``name`` is not in the catalog.

    Example:
        >>> builtin_scenario("rU200cl").demand.perturbation.kind
        'uniform'
    """
    if name not in SCENARIO_NAMES:
        raise UnknownScenarioError(
            f"unknown scenario '{name}'. Must be one of: {', '.join(SCENARIO_NAMES)}"
        )
    base = name[:-2] if name.endswith("cl") else name
    lead_kind = "constant" if name.endswith("cl") else "stochastic"
    chain = default_chain()

    if base == "N20stc":
        base = "N20"
        chain = replace(chain, stock_cost=_STC_STOCK_COSTS)

    if base in _SEASONAL_NOISE:
        noise = Perturbation.gaussian(_SEASONAL_NOISE[base])
        demand = DemandSpec(kind="seasonal", perturbation=noise)
    else:
        demand = DemandSpec(kind="regular", perturbation=_REGULAR_NOISE[base])

    return ScenarioSpec(
        name=name,
        chain=chain,
        demand=demand,
        lead_time=LeadTimeSpec(kind=lead_kind, average=2, maximum=4),
    )


def scenario_file(name: str) -> Path:
    """Path of the shipped TOML file for a catalog scenario."""
    if name not in SCENARIO_NAMES:
        raise UnknownScenarioError(f"unknown scenario '{name}'")
    return Path(str(resources.files("supplywise") / "scenarios" / f"{name}.toml"))


def load_scenario(source: Union[str, Path]) -> ScenarioSpec:
    """Load a scenario from a catalog name or a TOML file path."""
    if isinstance(source, str) and source in SCENARIO_NAMES:
        return builtin_scenario(source)
    spec = ScenarioSpec.load(source)
    validate_scenario(spec).raise_if_invalid(f"scenario '{spec.name}'")
    return spec
