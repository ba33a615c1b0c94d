"""A* potentials: scalar omega tables and convex lower-bound propagation.

Two families of SoC-aware vertex potentials, both lower-bounding the
remaining trip time to a fixed target:

* omega: three scalar backward searches (drive time, consumption, and the
  combined weight ``d + c / cf_max``) feeding a two-case formula.
* pi: a label-correcting backward search propagating decreasing convex
  piecewise-linear maps from SoC to a trip-time lower bound, with optional
  on-demand suspension (the suspended variant caps unexplored regions with
  the current queue minimum).

Convex bounds are tuples of ``(soc, time)`` breakpoints with strictly
increasing SoC and strictly decreasing time; the empty tuple is identically
infinite. Evaluation is infinite below the first breakpoint, constant after
the last, and linear in between.
"""

from __future__ import annotations

import heapq
from collections import deque
from typing import Callable, Iterable, Optional

from .model import EPS, INF, NEG_INF, ChargingFunction

ConvexBound = tuple[tuple[float, float], ...]

EMPTY_BOUND: ConvexBound = ()

# Suspension rule for on-demand searches: resume until the queue minimum
# exceeds min(factor * t1, t1 + slack) for the first breakpoint value t1.
SUSPEND_FACTOR = 2.0
SUSPEND_SLACK = 3600.0

_COLLINEAR = 1e-12


def bound_eval(bound: ConvexBound, soc: float) -> float:
    if not bound or soc == NEG_INF:
        return INF
    if soc < bound[0][0]:
        return INF
    if soc >= bound[-1][0]:
        return bound[-1][1]
    lo, hi = 0, len(bound) - 1
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if bound[mid][0] <= soc:
            lo = mid
        else:
            hi = mid
    (b1, t1), (b2, t2) = bound[lo], bound[lo + 1]
    return t1 + (t2 - t1) * (soc - b1) / (b2 - b1)


def hull_of_points(points: Iterable[tuple[float, float]]) -> ConvexBound:
    """Lower convex hull of ``(soc, time)`` points, trimmed to be decreasing."""
    pts = sorted(points)
    filtered: list[tuple[float, float]] = []
    for p in pts:
        if filtered and p[0] - filtered[-1][0] <= _COLLINEAR:
            continue  # same soc: keep the earlier (lower time) point
        filtered.append(p)
    hull: list[tuple[float, float]] = []
    for p in filtered:
        while len(hull) >= 2:
            (b1, t1), (b2, t2) = hull[-2], hull[-1]
            s1 = (t2 - t1) / (b2 - b1)
            s2 = (p[1] - t2) / (p[0] - b2)
            if s1 >= s2 - _COLLINEAR:
                hull.pop()
            else:
                break
        hull.append(p)
    while len(hull) >= 2 and hull[-1][1] >= hull[-2][1] - _COLLINEAR:
        hull.pop()
    return tuple(hull)


def merge_bounds(f1: ConvexBound, f2: ConvexBound) -> ConvexBound:
    """Convex lower hull of the pointwise minimum of two bounds."""
    if not f1:
        return f2
    if not f2:
        return f1
    return hull_of_points(list(f1) + list(f2))


def shift_bound(bound: ConvexBound, consumption: float, drive: float) -> ConvexBound:
    """Move every breakpoint by (+consumption, +drive); constraints ignored."""
    return tuple((b + consumption, t + drive) for b, t in bound)


def extend_bound(bound: ConvexBound, cf: ChargingFunction) -> ConvexBound:
    """Incorporate recharging at a station into a bound.

    Approximates the charging curve by its maximum slope: finds the pivot
    breakpoint where the bound's segment slope crosses ``-1/max_slope`` and
    replaces everything before it with one segment of exactly that slope
    down to SoC 0. Bounds whose pivot lies at SoC <= 0 are unchanged.
    """
    if not bound:
        return bound
    chi = cf.max_slope
    if chi <= 0.0:
        return bound
    inv = -1.0 / chi
    k = len(bound)
    i = k - 1
    for j in range(k - 1):
        (b1, t1), (b2, t2) = bound[j], bound[j + 1]
        if inv < (t2 - t1) / (b2 - b1):
            i = j
            break
    soc_i, t_i = bound[i]
    if soc_i <= 0.0:
        return bound
    return ((0.0, t_i + soc_i / chi),) + bound[i:]


def link_convex_bounds(f1: ConvexBound, f2: ConvexBound) -> ConvexBound:
    """Infimal convolution ``b -> min over splits of f1(b1) + f2(b - b1)``.

    Merges segments in ascending slope order, always advancing the
    currently steeper function (collinear segments advance both), in time
    linear in the breakpoint counts.
    """
    if not f1 or not f2:
        return EMPTY_BOUND
    k, m = len(f1), len(f2)
    i = j = 0
    out: list[tuple[float, float]] = [(f1[0][0] + f2[0][0], f1[0][1] + f2[0][1])]
    while i < k - 1 or j < m - 1:
        s1 = (
            (f1[i + 1][1] - f1[i][1]) / (f1[i + 1][0] - f1[i][0])
            if i < k - 1
            else 0.0
        )
        s2 = (
            (f2[j + 1][1] - f2[j][1]) / (f2[j + 1][0] - f2[j][0])
            if j < m - 1
            else 0.0
        )
        if i < k - 1 and (j == m - 1 or s1 < s2 - _COLLINEAR):
            i += 1
        elif j < m - 1 and (i == k - 1 or s2 < s1 - _COLLINEAR):
            j += 1
        else:
            i += 1
            j += 1
        out.append((f1[i][0] + f2[j][0], f1[i][1] + f2[j][1]))
    dedup: list[tuple[float, float]] = [out[0]]
    for p in out[1:]:
        if p[0] - dedup[-1][0] > _COLLINEAR:
            dedup.append(p)
    return tuple(dedup)


def _improves(candidate: ConvexBound, current: ConvexBound) -> bool:
    if not candidate:
        return False
    if not current:
        return True
    for b, _ in candidate + current:
        if bound_eval(candidate, b) < bound_eval(current, b) - _COLLINEAR:
            return True
    return False


# ---------------------------------------------------------------------------
# omega tables


class OmegaTables:
    """Backward distances under drive time, consumption and the omega weight.

    ``cf_max`` is the best charging rate available anywhere in the network;
    the omega weight of an arc is ``d + c / cf_max``. The consumption and
    omega searches are label correcting (consumption may be negative).
    Pruning consumption labels above the battery capacity follows the
    original formulation but is off by default: with pruning the consumption
    table can overestimate through vertices whose cheapest continuation
    temporarily needs more than a full battery, which breaks potential
    consistency on adversarial inputs.
    """

    __slots__ = ("d_time", "d_cons", "d_omega", "cf_max")

    def __init__(self, d_time, d_cons, d_omega, cf_max: float) -> None:
        self.d_time = d_time
        self.d_cons = d_cons
        self.d_omega = d_omega
        self.cf_max = cf_max


def compute_omega_tables(
    n: int,
    backward: Callable[[int], Iterable[tuple[int, float, float]]],
    target: int,
    cf_max: float,
    prune_above_capacity: bool = False,
    capacity: float = INF,
) -> OmegaTables:
    """Run the three backward searches from ``target``.

    ``backward(v)`` yields ``(u, drive, consumption)`` for every arc u -> v.
    """

    def spfa(weight: Callable[[float, float], float], prune: float = INF):
        dist = [INF] * n
        dist[target] = 0.0
        queue = deque([target])
        queued = [False] * n
        queued[target] = True
        while queue:
            v = queue.popleft()
            queued[v] = False
            dv = dist[v]
            for u, d, c in backward(v):
                nd = dv + weight(d, c)
                if nd > prune:
                    continue
                if nd < dist[u] - _COLLINEAR:
                    dist[u] = nd
                    if not queued[u]:
                        queued[u] = True
                        queue.append(u)
        return dist

    inv = 0.0 if cf_max == INF else 1.0 / cf_max
    d_time = spfa(lambda d, c: d)
    d_cons = spfa(lambda d, c: c, prune=capacity if prune_above_capacity else INF)
    d_omega = spfa(lambda d, c: d + c * inv)
    return OmegaTables(d_time, d_cons, d_omega, cf_max)


class OmegaPotential:
    """SoC-aware potential from omega tables (Eq.-style two-case rule)."""

    __slots__ = ("tables", "is_zero")

    def __init__(self, tables: OmegaTables, is_zero: Optional[Callable[[int], bool]] = None):
        self.tables = tables
        self.is_zero = is_zero

    def value(self, v: int, soc: float) -> float:
        if self.is_zero is not None and self.is_zero(v):
            return 0.0
        if soc == NEG_INF:
            return INF
        t = self.tables
        if soc >= t.d_cons[v]:
            return t.d_time[v]
        if t.d_omega[v] == INF:
            return INF
        scaled = 0.0 if t.cf_max == INF else soc / t.cf_max
        return t.d_omega[v] - scaled

    def label_key(self, label) -> float:
        bps = label.breakpoints()
        v = label.vertex
        if self.is_zero is not None and self.is_zero(v):
            return bps[0][0]
        t1, s1 = bps[0]
        best = t1 + self.value(v, s1)
        dc = self.tables.d_cons[v]
        if s1 < dc <= bps[-1][1]:
            t2 = _first_time_at_soc(bps, dc)
            best = min(best, t2 + self.tables.d_time[v])
        return best


def _first_time_at_soc(bps: tuple[tuple[float, float], ...], soc: float) -> float:
    """Least trip time at which a label's SoC function reaches ``soc``."""
    for idx in range(len(bps)):
        if bps[idx][1] >= soc:
            if idx == 0:
                return bps[0][0]
            t1, s1 = bps[idx - 1]
            t2, s2 = bps[idx]
            if s2 <= s1 + _COLLINEAR:
                return t2
            return t1 + (t2 - t1) * (soc - s1) / (s2 - s1)
    return INF


# ---------------------------------------------------------------------------
# pi: function-propagating backward search

# Relax actions yielded by the backward adjacency: ("shift", cons, drive)
# for plain arcs, ("link", bound) for shortcut bundles and seeds.
RelaxAction = tuple


class PiSearch:
    """Label-correcting backward search propagating convex lower bounds.

    Vertices are keyed by the least trip time among breakpoints newly added
    at their last improvement, which keeps the queue minimum nondecreasing
    and thereby makes suspension sound. Station labels are extended on every
    update so the stored bound always overestimates charging speed.
    """

    def __init__(
        self,
        n: int,
        backward: Callable[[int], Iterable[tuple[int, RelaxAction]]],
        target: int,
        stations: dict[int, ChargingFunction],
    ) -> None:
        self.n = n
        self.backward = backward
        self.target = target
        self.stations = stations
        self.bounds: list[ConvexBound] = [EMPTY_BOUND] * n
        self._keys = [INF] * n
        self._heap: list[tuple[float, int]] = []
        self.scanned = [False] * n
        seed: ConvexBound = ((0.0, 0.0),)
        cf = stations.get(target)
        if cf is not None:
            seed = extend_bound(seed, cf)
        self.bounds[target] = seed
        self._keys[target] = 0.0
        heapq.heappush(self._heap, (0.0, target))
        self.t_star = 0.0

    @property
    def drained(self) -> bool:
        return not self._heap

    def step(self) -> bool:
        """Scan one vertex; returns False once the queue is empty."""
        while self._heap:
            key, v = heapq.heappop(self._heap)
            if key > self._keys[v] + _COLLINEAR:
                continue  # stale entry
            self._keys[v] = INF
            self.t_star = max(self.t_star, key)
            self.scanned[v] = True
            self._scan(v)
            return True
        self.t_star = INF
        return False

    def run(self) -> None:
        while self.step():
            pass

    def _scan(self, v: int) -> None:
        fv = self.bounds[v]
        for u, action in self.backward(v):
            if action[0] == "shift":
                cand = shift_bound(fv, action[1], action[2])
            else:
                cand = link_convex_bounds(action[1], fv)
            old = self.bounds[u]
            if not _improves(cand, old):
                continue
            new = merge_bounds(old, cand)
            cf = self.stations.get(u)
            if cf is not None:
                new = extend_bound(new, cf)
            self.bounds[u] = new
            key = self._new_breakpoint_key(old, new)
            if key < self._keys[u]:
                self._keys[u] = key
                heapq.heappush(self._heap, (key, u))

    def _new_breakpoint_key(self, old: ConvexBound, new: ConvexBound) -> float:
        old_set = old
        best = INF
        for p in new:
            is_old = False
            for q in old_set:
                if abs(p[0] - q[0]) <= EPS and abs(p[1] - q[1]) <= EPS:
                    is_old = True
                    break
            if not is_old and p[1] < best:
                best = p[1]
        if best == INF:
            best = new[-1][1]
        # Queue keys never regress: float noise must not break monotonicity.
        return max(best, self.t_star)


def pi_backward_search(
    n: int,
    backward: Callable[[int], Iterable[tuple[int, RelaxAction]]],
    target: int,
    stations: dict[int, ChargingFunction],
) -> list[ConvexBound]:
    """Run the backward search to completion; returns per-vertex bounds."""
    search = PiSearch(n, backward, target, stations)
    search.run()
    return search.bounds


def plain_backward_adjacency(graph) -> Callable[[int], Iterable[tuple[int, RelaxAction]]]:
    """Backward relax actions over a plain Graph (shift per original arc)."""

    def backward(v: int):
        for idx in graph.rev[v]:
            tail, _, d, c = graph.arcs[idx]
            yield tail, ("shift", c, d)

    return backward


class PiPotential:
    """Potential backed by a PiSearch, fully run or suspended on demand.

    When suspended, evaluations merge the stored bound with the constant
    ``t_star`` cap induced by the queue minimum; the merged function is
    built per evaluation and never stored.
    """

    __slots__ = ("search", "on_demand", "is_zero", "suspend_factor", "suspend_slack")

    def __init__(
        self,
        search: PiSearch,
        on_demand: bool = False,
        is_zero: Optional[Callable[[int], bool]] = None,
        suspend_factor: float = SUSPEND_FACTOR,
        suspend_slack: float = SUSPEND_SLACK,
    ) -> None:
        self.search = search
        self.on_demand = on_demand
        self.is_zero = is_zero
        self.suspend_factor = suspend_factor
        self.suspend_slack = suspend_slack
        if not on_demand:
            search.run()

    def _ensure(self, v: int) -> None:
        if not self.on_demand:
            return
        s = self.search
        while not s.drained and not s.scanned[v]:
            s.step()
        while not s.drained:
            fv = s.bounds[v]
            if not fv:
                break
            t1 = fv[0][1]
            threshold = min(self.suspend_factor * t1, t1 + self.suspend_slack)
            if s.t_star > threshold:
                break
            s.step()

    def effective_bound(self, v: int) -> ConvexBound:
        s = self.search
        fv = s.bounds[v]
        if s.drained:
            return fv
        return merge_bounds(fv, ((0.0, s.t_star),))

    def value(self, v: int, soc: float) -> float:
        if self.is_zero is not None and self.is_zero(v):
            return 0.0
        if soc == NEG_INF:
            return INF
        self._ensure(v)
        return bound_eval(self.effective_bound(v), soc)

    def label_key(self, label) -> float:
        bps = label.breakpoints()
        v = label.vertex
        if self.is_zero is not None and self.is_zero(v):
            return bps[0][0]
        self._ensure(v)
        bound = self.effective_bound(v)
        if not bound:
            return INF
        best = INF
        for t, s in bps:
            val = t + bound_eval(bound, s)
            if val < best:
                best = val
        for b, y in bound:
            t = _first_time_at_soc(bps, b)
            if t < INF:
                val = t + bound_eval(bound, max(b, _soc_at_time(bps, t)))
                if val < best:
                    best = val
        return best


def _soc_at_time(bps: tuple[tuple[float, float], ...], t: float) -> float:
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
    if t2 <= t1:
        return s2
    return s1 + (s2 - s1) * (t - t1) / (t2 - t1)


class ZeroPotential:
    """Potential of the plain algorithm: identically zero."""

    __slots__ = ()

    def value(self, v: int, soc: float) -> float:
        return 0.0

    def label_key(self, label) -> float:
        return label.breakpoints()[0][0]
