"""Independent brute-force references for small instances.

The grid dynamic program restricts charging decisions to a SoC grid:
departure SoCs at stations must be grid levels (or the station's reachable
maximum), while driving between stations is simulated exactly. Its result
therefore upper-bounds the true optimum, converges as the grid refines,
and exceeds the optimum by at most one grid step's worth of charging time
per stop.

A plain bicriteria reference (no charging) covers the constrained
shortest-path special case.
"""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass, field
from typing import Optional

from .cfp import cfp_query
from .model import EPS, INF, NEG_INF, Graph, apply_profile

DEFAULT_STATE_CAP = 2_000_000


class StateSpaceExceeded(RuntimeError):
    pass


def _pareto_insert(frontier: list[tuple[float, float]], time: float, soc: float) -> bool:
    """Insert into a (time asc, soc asc) Pareto frontier; False if dominated."""
    for (ot, os) in frontier:
        if ot <= time + 1e-12 and os >= soc - 1e-12:
            return False
    frontier[:] = [
        (ot, os) for (ot, os) in frontier if not (time <= ot + 1e-12 and soc >= os - 1e-12)
    ]
    frontier.append((time, soc))
    return True


def grid_dp_query(
    graph: Graph,
    source: int,
    target: int,
    init_soc: float,
    delta: float,
    state_cap: int = DEFAULT_STATE_CAP,
) -> float:
    """Minimum trip time over grid-restricted charging policies (inf if none).

    Product Dijkstra over (vertex, SoC) labels: arcs apply exact per-arc
    profiles; at a station a label may charge to any higher grid level up
    to the reachable maximum (one transition per stop, setup time included).
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    capacity = graph.capacity
    levels = [i * delta for i in range(int(capacity / delta) + 1)]
    if levels[-1] < capacity - 1e-12:
        levels.append(capacity)
    counter = itertools.count()
    frontier: dict[int, list[tuple[float, float]]] = {source: [(0.0, init_soc)]}
    heap = [(0.0, -init_soc, next(counter), source, init_soc)]
    inserted = 1
    while heap:
        time, negsoc, _, v, soc = heapq.heappop(heap)
        best = frontier.get(v)
        if best is None or not any(
            abs(ot - time) <= 1e-12 and abs(os - soc) <= 1e-12 for ot, os in best
        ):
            continue
        if v == target:
            return time
        # charge at a station to a grid level
        cf = graph.stations.get(v)
        if cf is not None and soc <= cf.alpha_max + EPS:
            targets = [lv for lv in levels if soc < lv <= cf.alpha_max + 1e-12]
            if cf.alpha_max > soc and all(
                abs(cf.alpha_max - lv) > 1e-12 for lv in targets
            ):
                targets.append(cf.alpha_max)
            for lv in targets:
                lv = min(lv, cf.alpha_max)
                nt = time + cf.init_time + cf.duration(min(soc, cf.alpha_max), lv)
                if _pareto_insert(frontier.setdefault(v, []), nt, lv):
                    inserted += 1
                    if inserted > state_cap:
                        raise StateSpaceExceeded("grid DP state cap exceeded")
                    heapq.heappush(heap, (nt, -lv, next(counter), v, lv))
        # drive
        for idx in graph.out[v]:
            _, head, d, _ = graph.arcs[idx]
            nsoc = apply_profile(graph.profile(idx), soc)
            if nsoc == NEG_INF:
                continue
            nt = time + d
            if _pareto_insert(frontier.setdefault(head, []), nt, nsoc):
                inserted += 1
                if inserted > state_cap:
                    raise StateSpaceExceeded("grid DP state cap exceeded")
                heapq.heappush(heap, (nt, -nsoc, next(counter), head, nsoc))
    return INF


def bsp_query(graph: Graph, source: int, target: int, init_soc: float) -> float:
    """Bicriteria (time, SoC) reference without any charging."""
    counter = itertools.count()
    frontier: dict[int, list[tuple[float, float]]] = {source: [(0.0, init_soc)]}
    heap = [(0.0, -init_soc, next(counter), source, init_soc)]
    while heap:
        time, _, _, v, soc = heapq.heappop(heap)
        best = frontier.get(v)
        if best is None or not any(
            abs(ot - time) <= 1e-12 and abs(os - soc) <= 1e-12 for ot, os in best
        ):
            continue
        if v == target:
            return time
        for idx in graph.out[v]:
            _, head, d, _ = graph.arcs[idx]
            nsoc = apply_profile(graph.profile(idx), soc)
            if nsoc == NEG_INF:
                continue
            if _pareto_insert(frontier.setdefault(head, []), time + d, nsoc):
                heapq.heappush(heap, (time + d, -nsoc, next(counter), head, nsoc))
    return INF


def grid_tolerance(graph: Graph, delta: float, max_stops: int) -> float:
    """Worst-case optimality gap of the grid DP: one grid step of charging
    per stop at the slowest positive charging rate (floor at 1e-9)."""
    slopes = [
        cf.min_pos_slope for cf in graph.stations.values() if cf.min_pos_slope < INF
    ]
    if not slopes:
        return 1e-9
    return max((max_stops + 1) * delta / min(slopes), 1e-9)


@dataclass
class ValidationReport:
    instances: int = 0
    queries: int = 0
    feasible: int = 0
    violations: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json_dict(self) -> dict:
        return {
            "schema": "evroute.validation.v1",
            "instances": self.instances,
            "queries": self.queries,
            "feasible": self.feasible,
            "violations": self.violations,
            "ok": self.ok,
        }

    def summary(self) -> str:
        status = "OK" if self.ok else f"{len(self.violations)} VIOLATIONS"
        return (
            f"validated {self.queries} queries on {self.instances} instances,"
            f" {self.feasible} feasible: {status}"
        )


def validate_instance(
    graph: Graph,
    queries: list[tuple[int, int, float]],
    delta: float,
    report: Optional[ValidationReport] = None,
    instance_label: str = "",
) -> ValidationReport:
    """Cross-check the exact search against the grid DP on one instance."""
    if report is None:
        report = ValidationReport()
    report.instances += 1

    def violation(name: str, query, detail: str, exact: float, dp: float) -> None:
        report.violations.append(
            {
                "assertion": name,
                "instance": instance_label,
                "query": list(query),
                "detail": detail,
                "exact": exact,
                "grid_dp": dp,
            }
        )

    for query in queries:
        s, t, b = query
        report.queries += 1
        result = cfp_query(graph, s, t, b)
        dp = grid_dp_query(graph, s, t, b, delta)
        if result.feasible:
            report.feasible += 1
            exact = result.trip_time
            tol = grid_tolerance(graph, delta, max_stops=max(1, len(result.stops)))
            if dp == INF:
                violation(
                    "feasibility_agreement", query,
                    "exact feasible but grid DP infeasible", exact, dp,
                )
            else:
                if exact > dp + 1e-9:
                    violation(
                        "exact_not_above_dp", query,
                        f"exact exceeds grid DP by {exact - dp}", exact, dp,
                    )
                if dp - exact > tol:
                    violation(
                        "dp_within_tolerance", query,
                        f"grid DP exceeds exact by {dp - exact} > tol {tol}", exact, dp,
                    )
        else:
            if dp < INF:
                violation(
                    "feasibility_agreement", query,
                    "exact infeasible but grid DP found a route", INF, dp,
                )
    return report


def report_to_json(report: ValidationReport) -> str:
    return json.dumps(report.to_json_dict(), indent=2, sort_keys=True)
