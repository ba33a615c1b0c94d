"""Label-setting search over charging-function-propagating labels.

A label bundles the trip time up to (and including the setup time of) the
last charging station, the arrival SoC there, the station itself, and the
SoC profile of the subpath driven since. Its SoC function maps total trip
time to the SoC at the label's vertex; it is evaluated lazily from the
station's charging curve and the profile, so labels stay constant size.

The engine runs over an abstract search graph (plain network or a CH
overlay view) and takes a pluggable potential for A* keys.
"""

from __future__ import annotations

import bisect
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol

from .model import (
    EPS,
    INF,
    NEG_INF,
    ChargingFunction,
    Graph,
    Profile,
    apply_profile,
    const_function,
    identity_profile,
    link_profiles,
)

DUMMY_STATION = -1


class SearchView(Protocol):
    """What the engine needs from a search graph."""

    n: int
    capacity: float
    stations: dict[int, ChargingFunction]

    def expand(self, v: int) -> Iterable[tuple[int, float, Profile, object]]:
        """Yield (head, drive_time, profile, arc_ref) for arcs out of v."""
        ...

    def arc_base_path(self, ref: object) -> list[int]:
        """Original-graph arc indices realized by the referenced arc."""
        ...


class PlainView:
    """Search view over an unprocessed Graph."""

    __slots__ = ("graph", "n", "capacity", "stations")

    def __init__(self, graph: Graph) -> None:
        self.graph = graph
        self.n = graph.n
        self.capacity = graph.capacity
        self.stations = graph.stations

    def expand(self, v: int):
        g = self.graph
        for idx in g.out[v]:
            _, head, d, _ = g.arcs[idx]
            yield head, d, g.profile(idx), idx

    def arc_base_path(self, ref) -> list[int]:
        return [ref]


class Label:
    __slots__ = (
        "tau",
        "soc",
        "station",
        "cf",
        "profile",
        "vertex",
        "parent",
        "via_arc",
        "spawn",
        "serial",
        "_bps",
        "_key",
    )

    def __init__(self, tau, soc, station, cf, profile, vertex, parent, via_arc, spawn, serial):
        self.tau = tau
        self.soc = soc
        self.station = station
        self.cf = cf
        self.profile = profile
        self.vertex = vertex
        self.parent = parent
        self.via_arc = via_arc
        self.spawn = spawn
        self.serial = serial
        self._bps = None
        self._key = None

    def breakpoints(self) -> tuple[tuple[float, float], ...]:
        """SoC function as breakpoints (trip time, SoC), plateau after last.

        The function is -inf before the first breakpoint. Kinks happen where
        the charging curve has breakpoints and where the profile starts to
        clamp, restricted to the reachable SoC window at the station.
        """
        if self._bps is not None:
            return self._bps
        cf = self.cf
        in_min, cost, out_max = self.profile
        x0 = cf.eval(self.soc, 0.0)
        if in_min <= x0:
            t0 = self.tau
            x_start = x0
        else:
            t0 = self.tau + cf.duration(self.soc, in_min)
            x_start = in_min
        x_end = min(cf.alpha_max, out_max + cost)
        if x_end <= x_start or cf.kind != "curve":
            bps = ((t0, apply_profile(self.profile, x_start)),)
        else:
            base = cf.inv(self.soc)
            out = [(t0, apply_profile(self.profile, x_start))]
            for _, b in cf.points:
                if x_start < b < x_end:
                    out.append((self.tau + cf.inv(b) - base, apply_profile(self.profile, b)))
            out.append((self.tau + cf.inv(x_end) - base, apply_profile(self.profile, x_end)))
            bps = tuple(out)
        self._bps = bps
        return bps

    def min_feasible(self) -> float:
        return self.breakpoints()[0][0]

    def eval(self, t: float) -> float:
        """SoC function value at trip time t."""
        bps = self.breakpoints()
        if t < bps[0][0]:
            return NEG_INF
        if t >= bps[-1][0]:
            return bps[-1][1]
        lo, hi = 0, len(bps) - 1
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            if bps[mid][0] <= t:
                lo = mid
            else:
                hi = mid
        t1, s1 = bps[lo]
        t2, s2 = bps[lo + 1]
        return s1 + (s2 - s1) * (t - t1) / (t2 - t1)


def soc_function_eval(label: Label, t: float) -> float:
    return label.eval(t)


def min_feasible_trip_time(label: Label) -> float:
    """Least trip time at which the label is feasible; inf means discard."""
    cf = label.cf
    in_min = label.profile[0]
    if in_min > cf.alpha_max:
        return INF
    return label.min_feasible()


def _eval_bps(bps, t: float) -> float:
    if t < bps[0][0]:
        return NEG_INF
    if t >= bps[-1][0]:
        return bps[-1][1]
    for i in range(len(bps) - 1):
        t1, s1 = bps[i]
        t2, s2 = bps[i + 1]
        if t <= t2:
            return s1 + (s2 - s1) * (t - t1) / (t2 - t1)
    return bps[-1][1]


def bps_dominate(b1, b2, tol: float = EPS) -> bool:
    if b1[0][0] > b2[0][0] + tol:
        return False
    if b1[-1][1] < b2[-1][1] - tol:
        return False
    n1, n2 = len(b1), len(b2)
    if n1 == 1 and n2 == 1:
        return True  # both constant; start and plateau already checked
    # sweep the union of breakpoint times from b2's start, two pointers
    i = j = 0
    t = b2[0][0]
    while True:
        while i + 1 < n1 and b1[i + 1][0] <= t:
            i += 1
        while j + 1 < n2 and b2[j + 1][0] <= t:
            j += 1
        if t < b1[0][0]:
            f1 = NEG_INF
        elif i + 1 < n1 and t > b1[i][0]:
            t1, s1 = b1[i]
            t2, s2 = b1[i + 1]
            f1 = s1 + (s2 - s1) * (t - t1) / (t2 - t1)
        else:
            f1 = b1[i][1]
        if j + 1 < n2 and t > b2[j][0]:
            t1, s1 = b2[j]
            t2, s2 = b2[j + 1]
            f2 = s1 + (s2 - s1) * (t - t1) / (t2 - t1)
        else:
            f2 = b2[j][1]
        if f1 < f2 - tol:
            return False
        nt = INF
        if i + 1 < n1 and b1[i + 1][0] > t:
            nt = b1[i + 1][0]
        if j + 1 < n2 and b2[j + 1][0] > t and b2[j + 1][0] < nt:
            nt = b2[j + 1][0]
        if nt == INF:
            return True
        t = nt


def dominates(l1: Label, l2: Label, tol: float = EPS) -> bool:
    """True iff the SoC function of l1 is pointwise >= that of l2 - tol."""
    return bps_dominate(l1.breakpoints(), l2.breakpoints(), tol)


def switching_candidates(label: Label) -> list[float]:
    """Charging durations at the previous station worth spawning for.

    Breakpoints of the label's SoC function (including the minimum feasible
    trip time), as durations relative to the label's trip time: a superset
    of the true switching sequence for concave piecewise-linear curves.
    """
    return [t - label.tau for t, _ in label.breakpoints()]


@dataclass(frozen=True)
class Stop:
    vertex: int
    path_pos: int
    arrival_soc: float
    depart_soc: float
    duration: float
    init_time: float


@dataclass
class ItineraryResult:
    status: str
    trip_time: float = INF
    drive_time: float = 0.0
    charge_time: float = 0.0
    path: list[int] = field(default_factory=list)
    arc_path: list[int] = field(default_factory=list)
    stops: list[Stop] = field(default_factory=list)
    labels_settled: int = 0
    dominance_checks: int = 0
    lower_bound_source: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status == "ok"

    def to_json_dict(self) -> dict:
        return {
            "schema": "evroute.query.v1",
            "status": self.status,
            "trip_time_s": self.trip_time if self.feasible else None,
            "drive_time_s": self.drive_time if self.feasible else None,
            "charge_time_s": self.charge_time if self.feasible else None,
            "stops": [
                {
                    "vertex": st.vertex,
                    "arrival_soc_wh": st.arrival_soc,
                    "depart_soc_wh": st.depart_soc,
                    "duration_s": st.duration,
                }
                for st in self.stops
            ],
            "path": self.path,
            "labels_settled": self.labels_settled,
            "dominance_checks": self.dominance_checks,
        }


class VerificationError(RuntimeError):
    """An itinerary failed re-simulation."""


def verify_itinerary(
    graph: Graph,
    source: int,
    arc_path: list[int],
    stops: list[Stop],
    init_soc: float,
    tol: float = 1e-6,
) -> float:
    """Re-simulate an itinerary arc by arc; returns the total trip time.

    Battery constraints are checked exactly (per-arc profiles); charging
    uses the stations' inverse curves. Raises VerificationError when the
    itinerary is infeasible or ill-formed.
    """
    soc = init_soc
    if not (-tol <= soc <= graph.capacity + tol):
        raise VerificationError(f"initial SoC {soc} outside battery range")
    total = 0.0
    stop_iter = iter(sorted(stops, key=lambda s: s.path_pos))
    pending = next(stop_iter, None)
    pos = 0
    at = source

    def do_stops_at(pos: int, at: int, soc: float, total: float):
        nonlocal pending
        while pending is not None and pending.path_pos == pos:
            if pending.vertex != at:
                raise VerificationError(
                    f"stop at position {pos} names vertex {pending.vertex}, path has {at}"
                )
            cf = graph.stations.get(at)
            if cf is None:
                raise VerificationError(f"stop at non-station vertex {at}")
            depart = cf.eval(min(soc, cf.alpha_max), pending.duration)
            if depart < soc - tol:
                raise VerificationError("charging decreased SoC")
            total += cf.init_time + pending.duration
            soc = max(soc, depart)
            pending = next(stop_iter, None)
        return soc, total

    soc, total = do_stops_at(pos, at, soc, total)
    for arc_idx in arc_path:
        tail, head, d, _ = graph.arcs[arc_idx]
        if tail != at:
            raise VerificationError(f"arc {arc_idx} does not start at {at}")
        if soc < graph.profile(arc_idx)[0] - tol:
            raise VerificationError(f"battery empty on arc {arc_idx}")
        soc = apply_profile(graph.profile(arc_idx), max(soc, graph.profile(arc_idx)[0]))
        total += d
        at = head
        pos += 1
        soc, total = do_stops_at(pos, at, soc, total)
    if pending is not None:
        raise VerificationError("stop beyond end of path")
    if soc < -tol:
        raise VerificationError("negative SoC at target")
    return total


class CfpEngine:
    """The charging-function-propagation algorithm over a search view.

    Per vertex the engine keeps a heap of unsettled labels and the list of
    settled ones; a global queue orders vertices by their minimum unsettled
    key. Whenever a vertex's minimum changes it is checked against the
    settled labels and dropped while dominated. With ``heuristic_single``
    only the best new label per head vertex survives each scan.
    """

    def __init__(
        self,
        view: SearchView,
        potential,
        heuristic_single: bool = False,
        check_invariants: bool = False,
    ) -> None:
        self.view = view
        self.potential = potential
        self.heuristic_single = heuristic_single
        self.check_invariants = check_invariants
        self.labels_settled = 0
        self.dominance_checks = 0

    # -- label plumbing -----------------------------------------------------

    def _key(self, label: Label) -> float:
        if label._key is None:
            label._key = self.potential.label_key(label)
        return label._key

    def _entry(self, label: Label):
        return (self._key(label), -label.breakpoints()[0][1], label.serial, label)

    def _enforce_min(self, uns, settled, v: int) -> None:
        heap = uns.get(v)
        if not heap:
            return
        seen = settled.get(v)
        if seen is None:
            return
        t0s, labels, prefix_max = seen
        while heap:
            top = heap[0][3]
            top_bps = top._bps if top._bps is not None else top.breakpoints()
            t0 = top_bps[0][0] + EPS
            plateau = top_bps[-1][1] - EPS
            # only settled labels starting no later than the candidate can
            # dominate it, and one of them must reach at least its plateau
            idx = bisect.bisect_right(t0s, t0)
            if idx == 0 or prefix_max[idx - 1] < plateau:
                return
            dominated = False
            checks = 0
            for k in range(idx):
                checks += 1
                sb = labels[k]._bps
                if sb[-1][1] < plateau:
                    continue
                if bps_dominate(sb, top_bps):
                    dominated = True
                    break
            self.dominance_checks += checks
            if dominated:
                heapq.heappop(heap)
            else:
                return

    @staticmethod
    def _settle_record(settled, v: int, label: Label) -> None:
        entry = settled.get(v)
        bps = label.breakpoints()
        t0 = bps[0][0]
        plateau = bps[-1][1]
        if entry is None:
            settled[v] = ([t0], [label], [plateau])
            return
        t0s, labels, prefix_max = entry
        idx = bisect.bisect_right(t0s, t0)
        t0s.insert(idx, t0)
        labels.insert(idx, label)
        prev = prefix_max[idx - 1] if idx > 0 else -INF
        prefix_max.insert(idx, max(prev, plateau))
        for i in range(idx + 1, len(prefix_max)):
            cur = max(prefix_max[i - 1], labels[i].breakpoints()[-1][1])
            if cur == prefix_max[i]:
                break
            prefix_max[i] = cur

    # -- main query ---------------------------------------------------------

    def query(self, source: int, target: int, init_soc: float) -> ItineraryResult:
        view = self.view
        capacity = view.capacity
        if not (0 <= source < view.n and 0 <= target < view.n):
            raise ValueError("source/target outside vertex range")
        if not (-EPS <= init_soc <= capacity + EPS):
            raise ValueError("initial SoC outside [0, capacity]")
        if source == target:
            return ItineraryResult(
                status="ok", trip_time=0.0, path=[source],
                lower_bound_source=0.0,
            )

        serial = itertools.count()
        dummy_cf = const_function(capacity, init_soc)
        root = Label(
            0.0, init_soc, DUMMY_STATION, dummy_cf, identity_profile(capacity),
            source, None, None, False, next(serial),
        )
        uns: dict[int, list] = {source: []}
        settled: dict[int, list] = {}
        vqueue: list = []
        root_key = self._key(root)
        lower_bound_source = self.potential.value(source, init_soc)

        def push_vertex(v: int) -> None:
            heap = uns.get(v)
            if heap:
                key, tie, ser, _ = heap[0]
                heapq.heappush(vqueue, (key, tie, ser, v))

        def insert(v: int, label: Label) -> None:
            if label.profile[0] > label.cf.alpha_max:
                return
            if self._key(label) == INF:
                return
            heap = uns.setdefault(v, [])
            entry = self._entry(label)
            heapq.heappush(heap, entry)
            if heap[0][2] == entry[2]:  # the new label became the minimum
                self._enforce_min(uns, settled, v)
                push_vertex(v)

        if root_key < INF:
            heapq.heappush(uns[source], self._entry(root))
            push_vertex(source)

        stations = view.stations
        last_settled_key = -INF
        while vqueue:
            key, tie, ser, v = heapq.heappop(vqueue)
            heap = uns.get(v)
            if not heap or heap[0][2] != ser:
                continue  # stale queue entry
            _, _, _, label = heapq.heappop(heap)
            self._settle_record(settled, v, label)
            self.labels_settled += 1
            if self.check_invariants:
                assert key >= last_settled_key - EPS, "settled keys must not decrease"
                last_settled_key = max(last_settled_key, key)

            if v == target:
                result = self._build_result(source, label)
                result.labels_settled = self.labels_settled
                result.dominance_checks = self.dominance_checks
                result.lower_bound_source = lower_bound_source
                return result

            cf_here = stations.get(v)
            if cf_here is not None and label.station != v:
                self._spawn(uns, v, label, cf_here, serial)

            self._enforce_min(uns, settled, v)
            push_vertex(v)

            # scan outgoing arcs
            if self.heuristic_single:
                best: dict[int, Label] = {}
                for head, d, prof, ref in view.expand(v):
                    child = self._extend(label, head, d, prof, ref, serial)
                    if child is None:
                        continue
                    cur = best.get(head)
                    if cur is None or self._key(child) < self._key(cur) - EPS:
                        best[head] = child
                for head, child in best.items():
                    insert(head, child)
            else:
                for head, d, prof, ref in view.expand(v):
                    child = self._extend(label, head, d, prof, ref, serial)
                    if child is not None:
                        insert(head, child)

        return ItineraryResult(
            status="infeasible",
            labels_settled=self.labels_settled,
            dominance_checks=self.dominance_checks,
            lower_bound_source=lower_bound_source,
        )

    def _extend(self, label: Label, head, d, prof, ref, serial) -> Optional[Label]:
        linked = link_profiles(label.profile, prof)
        if linked is None or linked[0] > label.cf.alpha_max:
            return None
        return Label(
            label.tau + d, label.soc, label.station, label.cf, linked,
            head, label, ref, False, next(serial),
        )

    def _spawn(self, uns, v: int, label: Label, cf: ChargingFunction, serial) -> None:
        ident = identity_profile(self.view.capacity)
        heap = uns.setdefault(v, [])
        for t_bp, soc_bp in label.breakpoints():
            if soc_bp > cf.alpha_max + EPS:
                continue
            child = Label(
                t_bp + cf.init_time, min(soc_bp, cf.alpha_max), v, cf, ident,
                v, label, None, True, next(serial),
            )
            if self._key(child) == INF:
                continue
            if self.check_invariants:
                assert self._key(child) >= self._key(label) - 1e-6, "spawn decreased key"
            heapq.heappush(heap, self._entry(child))
            if cf.kind == "swap":
                break  # later swap spawns are dominated by the first

    # -- result construction ------------------------------------------------

    def _build_result(self, source: int, final: Label) -> ItineraryResult:
        trip = final.min_feasible()
        chain: list[Label] = []
        lab: Optional[Label] = final
        while lab is not None:
            chain.append(lab)
            lab = lab.parent
        chain.reverse()

        path = [source]
        arc_path: list[int] = []
        drive_time = 0.0
        raw_stops: list[tuple[int, int, ChargingFunction, float, float]] = []
        station_pos = 0
        view = self.view
        for lab in chain[1:]:
            if lab.spawn:
                parent = lab.parent
                dur = lab.tau - parent.tau - lab.cf.init_time
                raw_stops.append((station_pos, parent.station, parent.cf, parent.soc, dur))
                station_pos = len(path) - 1
            else:
                for arc_idx in view.arc_base_path(lab.via_arc):
                    _, head, d, _ = self._base_graph().arcs[arc_idx]
                    arc_path.append(arc_idx)
                    path.append(head)
                    drive_time += d
        raw_stops.append((station_pos, final.station, final.cf, final.soc, trip - final.tau))

        stops: list[Stop] = []
        for pos, stn, cf, arrival, dur in raw_stops:
            if stn == DUMMY_STATION:
                continue
            dur = max(0.0, dur)
            if dur <= EPS and cf.init_time == 0.0:
                continue
            depart = cf.eval(min(arrival, cf.alpha_max), dur)
            stops.append(Stop(stn, pos, arrival, max(arrival, depart), dur, cf.init_time))

        return ItineraryResult(
            status="ok",
            trip_time=trip,
            drive_time=drive_time,
            charge_time=trip - drive_time,
            path=path,
            arc_path=arc_path,
            stops=stops,
        )

    def _base_graph(self) -> Graph:
        return self.view.graph


def cfp_query(
    graph: Graph,
    source: int,
    target: int,
    init_soc: float,
    potential=None,
    check_invariants: bool = False,
    verify: bool = True,
) -> ItineraryResult:
    """Exact minimum-trip-time query on a plain graph.

    ``potential`` defaults to the zero potential (plain label setting).
    With ``verify`` the returned itinerary is re-simulated and the trip
    time cross-checked.
    """
    from .potentials import ZeroPotential

    engine = CfpEngine(
        PlainView(graph),
        potential if potential is not None else ZeroPotential(),
        check_invariants=check_invariants,
    )
    result = engine.query(source, target, init_soc)
    if verify and result.feasible and source != target:
        simulated = verify_itinerary(graph, source, result.arc_path, result.stops, init_soc)
        if abs(simulated - result.trip_time) > 1e-6:
            raise VerificationError(
                f"trip time {result.trip_time} disagrees with simulation {simulated}"
            )
    return result
