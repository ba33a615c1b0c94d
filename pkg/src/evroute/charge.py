"""Three-phase queries over a partial CH: component, potentials, core CFP.

Phase 1 runs a backward bicriteria search from the target over upward arcs
inside the component and turns every nondominated label into a temporary
shortcut to the target. Phase 2 builds a potential on the core enriched
with those temporary arcs (omega tables, or the convex-bound propagation,
optionally suspended on demand). Phase 3 runs the label search from the
source restricted to upward, core and temporary arcs, with component
potentials fixed at zero.

Heuristic modes relax the scan of parallel shortcut bundles to a single
label per head vertex; the aggressive variant additionally requires an
overlay preprocessed without multi-arcs.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Optional

from .cfp import CfpEngine, ItineraryResult, VerificationError, verify_itinerary
from .model import EPS, INF, Graph, Profile, link_profiles, profile_dominates
from .overlay import CORE_RANK, Overlay
from .potentials import (
    ConvexBound,
    OmegaPotential,
    PiPotential,
    PiSearch,
    ZeroPotential,
    compute_omega_tables,
    hull_of_points,
    link_convex_bounds,
)

MODES = ("exact", "heu-pi", "heu-omega", "heu-omega-aggr")
POTENTIALS = ("zero", "omega", "pi", "pi-demand")


@dataclass(frozen=True)
class QueryPlan:
    source: int
    target: int
    init_soc: float
    mode: str = "exact"
    potential: str = "pi"

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.potential not in POTENTIALS:
            raise ValueError(f"unknown potential {self.potential!r}")
        if self.mode == "heu-pi" and self.potential not in ("pi", "pi-demand"):
            raise ValueError("heu-pi requires the pi potential")
        if self.mode in ("heu-omega", "heu-omega-aggr") and self.potential != "omega":
            raise ValueError(f"{self.mode} requires the omega potential")


@dataclass
class _TempShortcut:
    drive: float
    profile: Profile
    arc_ids: tuple[int, ...]  # overlay arc-table indices, path order v..t


def _phase1_component_backward(graph: Graph, overlay: Overlay, target: int
                               ) -> dict[int, list[_TempShortcut]]:
    """Backward search from the target over upward arcs in the component.

    Labels carry (drive time, profile of the v->target path). Core vertices
    are recorded but not expanded. Returns nondominated temporary shortcuts
    per vertex (excluding the target itself).
    """
    rank = overlay.rank
    arcs = overlay.arcs
    counter = itertools.count()
    start = (0.0, (0.0, 0.0, graph.capacity), ())
    per_vertex: dict[int, list[tuple[float, Profile, tuple[int, ...]]]] = {target: [start]}
    heap = [(0.0, 0.0, 0.0, -graph.capacity, next(counter), target, start)]
    while heap:
        d, _, _, _, _, v, lab = heapq.heappop(heap)
        if lab not in per_vertex.get(v, ()):
            continue
        if rank[v] == CORE_RANK and v != target:
            continue  # recorded, never expanded
        for idx in overlay.in_up[v]:
            arc = arcs[idx]
            tail = arc[0]
            np = link_profiles((arc[3], arc[4], arc[5]), lab[1])
            if np is None:
                continue
            nd = d + arc[2]
            new = (nd, np, (idx,) + lab[2])
            bucket = per_vertex.setdefault(tail, [])
            dominated = False
            for (od, op, _) in bucket:
                if od <= nd + EPS and profile_dominates(op, np):
                    dominated = True
                    break
            if dominated:
                continue
            bucket[:] = [
                e for e in bucket
                if not (nd <= e[0] + EPS and profile_dominates(np, e[1]))
            ]
            bucket.append(new)
            heapq.heappush(
                heap, (nd, np[0], np[1], -np[2], next(counter), tail, new)
            )
    temp: dict[int, list[_TempShortcut]] = {}
    for v, bucket in per_vertex.items():
        if v == target:
            continue
        keep: list[tuple[float, Profile, tuple[int, ...]]] = []
        for e in sorted(bucket, key=lambda x: (x[0], x[1])):
            if not any(
                o[0] <= e[0] + EPS and profile_dominates(o[1], e[1]) for o in keep
            ):
                keep.append(e)
        temp[v] = [_TempShortcut(d, p, ids) for d, p, ids in keep]
    return temp


class ChargeView:
    """Search view for phase 3: upward + core + temporary arcs."""

    __slots__ = (
        "graph", "overlay", "temp", "target", "n", "capacity", "stations",
        "collapse_omega", "cf_max", "_best_cache",
    )

    def __init__(self, graph: Graph, overlay: Overlay, temp, target: int,
                 collapse_omega: bool = False) -> None:
        self.graph = graph
        self.overlay = overlay
        self.temp = temp
        self.target = target
        self.n = graph.n
        self.capacity = graph.capacity
        self.stations = graph.stations
        self.collapse_omega = collapse_omega
        self.cf_max = graph.max_charging_slope()
        self._best_cache: dict[int, list[int]] = {}

    def _arc_ids(self, v: int) -> list[int]:
        ov = self.overlay
        ids = ov.core_out[v] if ov.rank[v] == CORE_RANK else ov.out_up[v]
        if not self.collapse_omega:
            return ids
        cached = self._best_cache.get(v)
        if cached is not None:
            return cached
        best: dict[int, int] = {}
        for idx in ids:
            arc = ov.arcs[idx]
            scaled = 0.0 if self.cf_max == INF else arc[4] / self.cf_max
            omega = arc[2] + scaled
            cur = best.get(arc[1])
            if cur is None:
                best[arc[1]] = idx
            else:
                carc = ov.arcs[cur]
                cscaled = 0.0 if self.cf_max == INF else carc[4] / self.cf_max
                if omega < carc[2] + cscaled - EPS:
                    best[arc[1]] = idx
        filtered = sorted(best.values())
        self._best_cache[v] = filtered
        return filtered

    def expand(self, v: int):
        arcs = self.overlay.arcs
        for idx in self._arc_ids(v):
            arc = arcs[idx]
            yield arc[1], arc[2], (arc[3], arc[4], arc[5]), ("o", idx)
        for i, ts in enumerate(self.temp.get(v, ())):
            yield self.target, ts.drive, ts.profile, ("t", v, i)

    def arc_base_path(self, ref) -> list[int]:
        if ref[0] == "o":
            return list(self.overlay.unpack(ref[1]))
        ts = self.temp[ref[1]][ref[2]]
        out: list[int] = []
        for idx in ts.arc_ids:
            out.extend(self.overlay.unpack(idx))
        return out


def core_bounds(overlay: Overlay) -> dict[tuple[int, int], ConvexBound]:
    """Convex lower bound per ordered core pair, hulled over parallel arcs.

    Points are (profile cost, drive time). Hulling over the minimum
    required SoC instead would give tighter bounds but breaks consistency
    when a shortcut's cost is far below its entry requirement (the bound
    would then undercut reachable downstream states).
    """
    pairs: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for v in range(overlay.n):
        if overlay.rank[v] != CORE_RANK:
            continue
        for idx in overlay.core_out[v]:
            arc = overlay.arcs[idx]
            pairs.setdefault((arc[0], arc[1]), []).append((arc[4], arc[2]))
    return {pair: hull_of_points(pts) for pair, pts in pairs.items()}


def _core_backward_adjacency(overlay: Overlay, temp, target,
                             bounds: dict[tuple[int, int], ConvexBound]):
    """Backward relax actions for phase 2 over core + temporary arcs."""
    incoming: dict[int, list] = {}
    seen_pair: set[tuple[int, int]] = set()
    for v in range(overlay.n):
        if overlay.rank[v] != CORE_RANK:
            continue
        for idx in overlay.core_out[v]:
            arc = overlay.arcs[idx]
            pair = (arc[0], arc[1])
            if pair in seen_pair:
                continue
            seen_pair.add(pair)
            incoming.setdefault(arc[1], []).append((arc[0], ("link", bounds[pair])))
    for v, shortcuts in temp.items():
        pts = hull_of_points([(ts.profile[0], ts.drive) for ts in shortcuts])
        incoming.setdefault(target, []).append((v, ("link", pts)))

    def backward(v: int):
        return incoming.get(v, ())

    return backward


def _scalar_backward_adjacency(overlay: Overlay, temp, target):
    incoming: dict[int, list[tuple[int, float, float]]] = {}
    for v in range(overlay.n):
        if overlay.rank[v] != CORE_RANK:
            continue
        for idx in overlay.core_out[v]:
            arc = overlay.arcs[idx]
            incoming.setdefault(arc[1], []).append((arc[0], arc[2], arc[4]))
    for v, shortcuts in temp.items():
        for ts in shortcuts:
            incoming.setdefault(target, []).append((v, ts.drive, ts.profile[1]))

    def backward(v: int):
        return incoming.get(v, ())

    return backward


def charge_query(
    graph: Graph,
    overlay: Overlay,
    plan: QueryPlan,
    check_invariants: bool = False,
    verify: bool = True,
) -> ItineraryResult:
    """Run a CHArge query per the plan; exact modes match plain CFP."""
    if tuple(sorted(graph.stations)) != overlay.station_ids:
        raise ValueError("overlay was built for a different station set")
    if overlay.aggressive and plan.mode != "heu-omega-aggr":
        raise ValueError("aggressive overlays only answer heu-omega-aggr queries")
    if not overlay.aggressive and plan.mode == "heu-omega-aggr":
        raise ValueError("heu-omega-aggr requires an aggressive overlay")

    s, t, b_s = plan.source, plan.target, plan.init_soc
    if s == t:
        return ItineraryResult(status="ok", trip_time=0.0, path=[s])

    temp = _phase1_component_backward(graph, overlay, t)
    collapse = plan.mode in ("heu-omega", "heu-omega-aggr")
    view = ChargeView(graph, overlay, temp, t, collapse_omega=collapse)

    rank = overlay.rank

    def is_component(v: int) -> bool:
        return rank[v] != CORE_RANK and v != t

    if plan.potential == "zero":
        potential = ZeroPotential()
    elif plan.potential == "omega":
        tables = compute_omega_tables(
            graph.n,
            _scalar_backward_adjacency(overlay, temp, t),
            t,
            graph.max_charging_slope(),
        )
        potential = OmegaPotential(tables, is_zero=is_component)
    else:
        bounds = core_bounds(overlay)
        search = PiSearch(
            graph.n,
            _core_backward_adjacency(overlay, temp, t, bounds),
            t,
            graph.stations,
        )
        potential = PiPotential(
            search,
            on_demand=(plan.potential == "pi-demand"),
            is_zero=is_component,
        )

    engine = CfpEngine(
        view,
        potential,
        heuristic_single=(plan.mode in ("heu-pi", "heu-omega", "heu-omega-aggr")),
        check_invariants=check_invariants,
    )
    result = engine.query(s, t, b_s)
    if verify and result.feasible:
        simulated = verify_itinerary(graph, s, result.arc_path, result.stops, b_s)
        if abs(simulated - result.trip_time) > 1e-6:
            raise VerificationError(
                f"trip time {result.trip_time} disagrees with simulation {simulated}"
            )
    return result
