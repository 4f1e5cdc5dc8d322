"""Deterministic production-planning LP.

The model decides, for every step of the horizon, how much each supplier
produces, how much every node ships along each link and how much each
factory processes, given known demands and known lead times. Variables:

- ``S[i, n]``      stock of node n at the end of step i (i = 0..h)
- ``P[i, j, n]``   production of supplier n arriving at step i after j steps
- ``T[i, j, n, m]`` product shipped n -> m arriving at step i after j steps
- ``F[i, n]``      raw material processed by factory n at step i
- ``De[i, n]``     material discarded above capacity at step i
- ``Dd[i, n]``     unmet demand of retailer n at step i

P and T variables exist only for the single lead time each dispatch step
maps to. Material dispatched before the episode (dispatch step 0) and the
initial stocks are pinned by fixed bounds and carry no cost.

Example:
    Solving the forecast plan of a scenario::

        from supplywise.core.chain import builtin_scenario
        from supplywise.planning.lp_model import DeterministicScenario, build_lp, solve_lp

        scenario = builtin_scenario("N0cl")
        instance = build_lp(scenario, DeterministicScenario.forecast(scenario))
        solution = solve_lp(instance)
        print(f"Objective: {solution.objective:,.0f}")
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from loguru import logger
from scipy import sparse
from scipy.optimize import linprog

from supplywise.core.chain import ScenarioSpec
from supplywise.core.stochastic import EpisodeRealization, forecast_demands
from supplywise.exceptions import LpBuildError, SolverError
from supplywise.utils.io import atomic_write

VARIABLE_KINDS = ("S", "P", "T", "F", "De", "Dd")

# Absolute primal feasibility tolerance, scaled by (1 + |rhs|) when checking rows.
FEASIBILITY_TOL = 1e-6

_LINPROG_STATUS = {2: "infeasible", 3: "unbounded"}


@dataclass
class DeterministicScenario:
    """Known demands and lead times for one planning problem.

    Row ``t`` belongs to step ``t``; row 0 is padding.

    Attributes:
        demands: (h + 1, retailers) demand per step.
        production_lead: (h + 1, suppliers) lead time of production dispatched at t.
        transport_lead: (h + 1, links) lead time of shipments dispatched at t.
        label: Free-form description ('forecast', 'seed 17', ...).
    """

    demands: np.ndarray
    production_lead: np.ndarray
    transport_lead: np.ndarray
    label: str = "forecast"

    @property
    def horizon(self) -> int:
        return self.demands.shape[0] - 1

    @classmethod
    def forecast(cls, scenario: ScenarioSpec) -> DeterministicScenario:
        """Unperturbed demands and the average lead time everywhere."""
        chain = scenario.chain
        h = chain.horizon
        avg = scenario.lead_time.average
        return cls(
            demands=forecast_demands(scenario.demand, h, len(chain.retailers)),
            production_lead=np.full((h + 1, len(chain.suppliers)), avg, dtype=np.int64),
            transport_lead=np.full((h + 1, len(chain.links)), avg, dtype=np.int64),
            label="forecast",
        )

    @classmethod
    def from_realization(cls, realization: EpisodeRealization) -> DeterministicScenario:
        """The realized demands and lead times of one episode."""
        return cls(
            demands=realization.demands.copy(),
            production_lead=realization.production_lead.copy(),
            transport_lead=realization.transport_lead.copy(),
            label=f"seed {realization.seed}",
        )


def forecast_scenario(scenario: ScenarioSpec) -> DeterministicScenario:
    return DeterministicScenario.forecast(scenario)


def realized_scenario(realization: EpisodeRealization) -> DeterministicScenario:
    return DeterministicScenario.from_realization(realization)


@dataclass
class LpInstance:
    """An LP in the form ``min c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lower <= x <= upper``.

    Attributes:
        c: Objective coefficients.
        A_ub: Inequality matrix (sparse) or None.
        b_ub: Inequality right-hand side.
        A_eq: Equality matrix (sparse) or None.
        b_eq: Equality right-hand side.
        lower: Variable lower bounds.
        upper: Variable upper bounds (np.inf when unbounded).
        variables: Column index per variable kind and key.
        steps: Size of the step index set (h + l_max + 1).
        scenario: Scenario the instance was built from, if any.
        deterministic: Demands and lead times the instance encodes, if any.
    """

    c: np.ndarray
    A_ub: Optional[sparse.csr_array]
    b_ub: Optional[np.ndarray]
    A_eq: Optional[sparse.csr_array]
    b_eq: Optional[np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    variables: Dict[str, Dict[tuple, int]] = field(default_factory=dict)
    steps: int = 0
    scenario: Optional[ScenarioSpec] = None
    deterministic: Optional[DeterministicScenario] = None

    @property
    def num_variables(self) -> int:
        return len(self.c)

    @property
    def num_constraints(self) -> int:
        rows = 0
        for matrix in (self.A_ub, self.A_eq):
            if matrix is not None:
                rows += matrix.shape[0]
        return rows

    def column_names(self) -> List[str]:
        names = [f"x{i}" for i in range(self.num_variables)]
        for kind, index in self.variables.items():
            for key, col in index.items():
                names[col] = kind + "_" + "_".join(str(k) for k in key)
        return names


@dataclass
class LpSolution:
    """Result of :func:`solve_lp`.

    Attributes:
        status: 'optimal', 'infeasible' or 'unbounded'.
        objective: Optimal objective value (nan unless optimal).
        x: Variable values (empty unless optimal).
        instance: The solved instance.
    """

    status: str
    objective: float
    x: np.ndarray
    instance: LpInstance

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def value(self, kind: str, key: tuple) -> float:
        """Value of one variable; 0 for variables the instance does not define."""
        col = self.instance.variables.get(kind, {}).get(key)
        return 0.0 if col is None else float(self.x[col])

    def values(self, kind: str) -> Dict[tuple, float]:
        index = self.instance.variables.get(kind, {})
        return {key: float(self.x[col]) for key, col in index.items()}


class _Columns:
    """Accumulates variables with their cost and bounds."""

    def __init__(self) -> None:
        self.index: Dict[str, Dict[tuple, int]] = {kind: {} for kind in VARIABLE_KINDS}
        self.cost: List[float] = []
        self.lower: List[float] = []
        self.upper: List[float] = []

    def add(
        self, kind: str, key: tuple, cost: float, lower: float = 0.0, upper: float = np.inf
    ) -> int:
        col = len(self.cost)
        self.index[kind][key] = col
        self.cost.append(cost)
        self.lower.append(lower)
        self.upper.append(upper)
        return col


class _Rows:
    """Accumulates sparse rows in coordinate form."""

    def __init__(self) -> None:
        self.rows: List[int] = []
        self.cols: List[int] = []
        self.vals: List[float] = []
        self.rhs: List[float] = []

    def add(self, terms: List[Tuple[int, float]], rhs: float) -> None:
        r = len(self.rhs)
        for col, coef in terms:
            self.rows.append(r)
            self.cols.append(col)
            self.vals.append(coef)
        self.rhs.append(rhs)

    def matrix(self, num_cols: int) -> Tuple[Optional[sparse.csr_array], Optional[np.ndarray]]:
        if not self.rhs:
            return None, None
        shape = (len(self.rhs), num_cols)
        coo = sparse.coo_array((self.vals, (self.rows, self.cols)), shape=shape)
        return coo.tocsr(), np.asarray(self.rhs, dtype=float)


def _check_deterministic(scenario: ScenarioSpec, det: DeterministicScenario) -> None:
    chain = scenario.chain
    h = chain.horizon
    l_max = scenario.lead_time.maximum
    expected = {
        "demands": (h + 1, len(chain.retailers)),
        "production_lead": (h + 1, len(chain.suppliers)),
        "transport_lead": (h + 1, len(chain.links)),
    }
    for name, shape in expected.items():
        actual = np.shape(getattr(det, name))
        if actual != shape:
            raise LpBuildError(
                f"{name} has shape {actual}, expected {shape} (steps 0..{h} for every entity)"
            )
    demands = det.demands[1:]
    if not np.all(np.isfinite(demands)):
        raise LpBuildError("demands contain non-finite values")
    spec = scenario.demand
    if np.any(demands < spec.clip_min - 1e-9) or np.any(demands > spec.clip_max + 1e-9):
        raise LpBuildError(f"demands must lie within [{spec.clip_min:g}, {spec.clip_max:g}]")
    for name in ("production_lead", "transport_lead"):
        leads = getattr(det, name)[1:]
        if leads.size and (leads.min() < 1 or leads.max() > l_max):
            raise LpBuildError(f"{name} values must lie within [1, {l_max}]")


def build_lp(scenario: ScenarioSpec, det: DeterministicScenario) -> LpInstance:
    """Build the planning LP for known demands and lead times.

    Args:
        scenario: Scenario providing the chain, costs and capacities.
        det: Demands per step and retailer plus the lead time of every
            dispatch (average lead times for the forecast plan, realized
            ones for a perfect-information bound).

    Returns:
        LpInstance whose objective is the total operating cost, excluding
        the cost of material already in the pipelines at t = 0.

    Raises:
        LpBuildError: If ``det`` does not cover steps 1..h for every entity
            or holds out-of-range values.
    """
    _check_deterministic(scenario, det)
    chain = scenario.chain
    h = chain.horizon
    q = chain.num_nodes
    l_max = scenario.lead_time.maximum
    suppliers = chain.suppliers
    retailer_pos = {n: r for r, n in enumerate(chain.retailers)}
    transport_cap = chain.effective_transport_cap()
    cols = _Columns()

    for n in range(q):
        cols.add("S", (0, n), 0.0, chain.initial_stock[n], chain.initial_stock[n])
        for i in range(1, h + 1):
            cols.add("S", (i, n), chain.stock_cost[n])

    # Production and shipments: one variable per dispatch step at its mapped lead time
    arrivals: Dict[Tuple[int, int], List[int]] = {}
    departures: Dict[Tuple[int, int], List[int]] = {}
    for s in suppliers:
        for i, units in enumerate(chain.initial_production[s], start=1):
            col = cols.add("P", (i, i, s), 0.0, units, units)
            arrivals.setdefault((i, s), []).append(col)
        for k in range(1, h + 1):
            j = int(det.production_lead[k, s])
            cost, cap = chain.production_cost[s], chain.production_cap[s]
            col = cols.add("P", (k + j, j, s), cost, 0.0, cap)
            arrivals.setdefault((k + j, s), []).append(col)
    for link, (n, m) in enumerate(chain.links):
        for i, units in enumerate(chain.initial_transport[link], start=1):
            col = cols.add("T", (i, i, n, m), 0.0, units, units)
            arrivals.setdefault((i, m), []).append(col)
        for k in range(1, h + 1):
            j = int(det.transport_lead[k, link])
            col = cols.add("T", (k + j, j, n, m), chain.transport_cost, 0.0, transport_cap[n])
            arrivals.setdefault((k + j, m), []).append(col)
            departures.setdefault((k, n), []).append(col)

    for n in chain.factories:
        for i in range(1, h + 1):
            cols.add("F", (i, n), chain.processing_cost[n], 0.0, chain.processing_cap[n])
    for n in range(q):
        for i in range(1, h + 1):
            cols.add("De", (i, n), chain.excess_penalty)
    for n in chain.retailers:
        for i in range(1, h + 1):
            # Lost sales cannot exceed the demand itself
            demand = float(det.demands[i, retailer_pos[n]])
            cols.add("Dd", (i, n), chain.unmet_penalty, 0.0, demand)

    S, F, De, Dd = (cols.index[k] for k in ("S", "F", "De", "Dd"))
    eq = _Rows()
    ub = _Rows()
    for n in range(q):
        ratio = chain.processing_ratio[n]
        for i in range(1, h + 1):
            arriving = [(col, -1.0) for col in arrivals.get((i, n), [])]
            leaving = departures.get((i, n), [])
            demand = float(det.demands[i, retailer_pos[n]]) if n in retailer_pos else 0.0

            # Stock balance
            terms = [(S[(i, n)], 1.0), (S[(i - 1, n)], -1.0), (De[(i, n)], 1.0)]
            terms += arriving
            terms += [(col, ratio) for col in leaving]
            if n in retailer_pos:
                terms.append((Dd[(i, n)], -1.0))
            eq.add(terms, -demand)

            # Stock capacity after arrivals and discards
            ub.add(
                [(S[(i - 1, n)], 1.0), (De[(i, n)], -1.0)] + [(col, 1.0) for col, _ in arriving],
                chain.stock_cap[n],
            )

            # Processed raw material
            if chain.is_factory[n]:
                eq.add([(F[(i, n)], 1.0)] + [(col, -ratio) for col in leaving], 0.0)

    num_cols = len(cols.cost)
    A_eq, b_eq = eq.matrix(num_cols)
    A_ub, b_ub = ub.matrix(num_cols)
    instance = LpInstance(
        c=np.asarray(cols.cost, dtype=float),
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        lower=np.asarray(cols.lower, dtype=float),
        upper=np.asarray(cols.upper, dtype=float),
        variables=cols.index,
        steps=h + l_max + 1,
        scenario=scenario,
        deterministic=det,
    )
    logger.debug(
        f"Built LP '{scenario.name}' ({det.label}): "
        f"{instance.num_variables} variables, {instance.num_constraints} constraints"
    )
    return instance


def solve_lp(instance: LpInstance) -> LpSolution:
    """Solve an LP instance with the HiGHS solver.

    Args:
        instance: Instance to solve.

    Returns:
        LpSolution with status 'optimal', 'infeasible' or 'unbounded'.

    Raises:
        SolverError: If the solver stops for any other reason or the
            returned point violates the constraints beyond tolerance.

    Example:
        >>> solution = solve_lp(instance)
        >>> solution.status
        'optimal'
    """
    if np.any(instance.lower > instance.upper):
        logger.debug("Contradictory variable bounds; instance is infeasible")
        return LpSolution("infeasible", float("nan"), np.zeros(0), instance)

    result = linprog(
        instance.c,
        A_ub=instance.A_ub,
        b_ub=instance.b_ub,
        A_eq=instance.A_eq,
        b_eq=instance.b_eq,
        bounds=np.column_stack([instance.lower, instance.upper]),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-7, "dual_feasibility_tolerance": 1e-7},
    )
    if result.status in _LINPROG_STATUS:
        status = _LINPROG_STATUS[result.status]
        logger.warning(f"LP is {status}: {result.message}")
        return LpSolution(status, float("nan"), np.zeros(0), instance)
    if result.status != 0:
        raise SolverError(f"LP solver failed (status {result.status}): {result.message}")

    x = np.asarray(result.x, dtype=float)
    violation = _max_violation(instance, x)
    if violation > 0:
        raise SolverError(f"LP solution violates constraints by {violation:.3g}: {result.message}")
    logger.debug(f"LP optimal, objective {result.fun:,.2f}")
    return LpSolution("optimal", float(result.fun), x, instance)


def _max_violation(instance: LpInstance, x: np.ndarray) -> float:
    """Largest scaled constraint violation beyond FEASIBILITY_TOL, 0 when feasible."""
    excesses = []
    if instance.A_ub is not None:
        excesses.append(instance.A_ub @ x - instance.b_ub - _slack(instance.b_ub))
    if instance.A_eq is not None:
        excesses.append(np.abs(instance.A_eq @ x - instance.b_eq) - _slack(instance.b_eq))
    excesses.append(instance.lower - x - _slack(instance.lower))
    # Infinite upper bounds give -inf here, never a violation
    excesses.append(x - instance.upper - _slack(instance.upper))
    return max(float(np.max(e, initial=0.0)) for e in excesses)


def _slack(rhs: np.ndarray) -> np.ndarray:
    return FEASIBILITY_TOL * (1.0 + np.abs(rhs))


def write_lp_file(instance: LpInstance, output_path: Union[str, Path]) -> Path:
    """Export an instance in CPLEX LP text format for external solvers."""
    names = instance.column_names()

    def expression(pairs) -> str:
        parts = []
        for col, coef in pairs:
            if coef == 0:
                continue
            sign = "-" if coef < 0 else "+"
            parts.append(f"{sign} {abs(coef):.12g} {names[col]}")
        lines = [" ".join(parts[i : i + 8]) for i in range(0, len(parts), 8)]
        return "\n   ".join(lines) if lines else "0 x0"

    def row_pairs(matrix, r):
        start, end = matrix.indptr[r], matrix.indptr[r + 1]
        return zip(matrix.indices[start:end], matrix.data[start:end])

    output_path = Path(output_path)
    with atomic_write(output_path) as f:
        f.write("\\ supplywise planning LP\n")
        f.write("Minimize\n obj: " + expression(enumerate(instance.c)) + "\n")
        f.write("Subject To\n")
        blocks = (
            ("eq", instance.A_eq, instance.b_eq, "="),
            ("ub", instance.A_ub, instance.b_ub, "<="),
        )
        for label, matrix, rhs, op in blocks:
            if matrix is None:
                continue
            matrix = sparse.csr_array(matrix)
            for r in range(matrix.shape[0]):
                f.write(f" {label}{r}: {expression(row_pairs(matrix, r))} {op} {rhs[r]:.12g}\n")
        f.write("Bounds\n")
        for col, name in enumerate(names):
            lo, hi = instance.lower[col], instance.upper[col]
            upper = "+inf" if not np.isfinite(hi) else f"{hi:.12g}"
            f.write(f" {lo:.12g} <= {name} <= {upper}\n")
        f.write("End\n")
    logger.info(f"Wrote LP model with {instance.num_variables} variables to {output_path}")
    return output_path
