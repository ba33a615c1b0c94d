"""Core vehicle/network model: SoC profiles, charging functions, graphs.

SoC values are Wh, times are seconds, both as 64-bit floats. Comparisons
use exact ``<``/``>``; equality-like checks use an absolute tolerance of
``EPS``. A SoC of ``-inf`` marks infeasibility.

A SoC profile maps the state of charge at the start of a path to the state
of charge at its end under battery constraints (clamped to ``[0, capacity]``,
``-inf`` below the minimum required charge). Profiles are represented by the
triple ``(in_min, cost, out_max)``; the infeasible profile is ``None``.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

EPS = 1e-9
NEG_INF = float("-inf")
INF = float("inf")

Profile = tuple[float, float, float]

SWAP = "swap"
CURVE = "curve"
CONST = "const"  # internal: dummy source station with a fixed SoC


class ModelError(ValueError):
    """Raised for invalid model inputs (bad curves, bad graphs, ...)."""


def identity_profile(capacity: float) -> Profile:
    return (0.0, 0.0, capacity)


def make_arc_profile(consumption: float, capacity: float) -> Profile:
    """Profile of a single arc with the given energy consumption."""
    return (
        max(0.0, consumption),
        consumption,
        min(capacity, capacity - consumption),
    )


def apply_profile(p: Optional[Profile], soc: float) -> float:
    """Evaluate a profile at an entry SoC; returns -inf when infeasible."""
    if p is None or soc == NEG_INF:
        return NEG_INF
    in_min, cost, out_max = p
    if soc < in_min:
        return NEG_INF
    if soc - cost > out_max:
        return out_max
    return soc - cost


def link_profiles(a: Optional[Profile], b: Optional[Profile]) -> Optional[Profile]:
    """Profile of the concatenation of two paths (None when infeasible)."""
    if a is None or b is None:
        return None
    if a[2] < b[0]:
        return None
    return (
        max(a[0], a[1] + b[0]),
        max(a[1] + b[1], a[0] - b[2]),
        min(b[2], a[2] - b[1]),
    )


def profile_dominates(p: Optional[Profile], q: Optional[Profile], tol: float = EPS) -> bool:
    """True iff ``apply_profile(p, s) >= apply_profile(q, s) - tol`` for all s.

    Both evaluation maps are piecewise linear with kinks only at their
    ``in_min`` and at the SoC where clamping starts, so comparing at those
    points is exact.
    """
    if q is None:
        return True
    if p is None:
        return False
    if p[0] > q[0] + tol:
        return False
    probes = (q[0], q[2] + q[1], p[2] + p[1], max(q[0], q[2] + q[1], p[2] + p[1]) + 1.0)
    for s in probes:
        if s < q[0]:
            continue
        if apply_profile(p, s) < apply_profile(q, s) - tol:
            return False
    return True


def validate_profile(p: Profile, capacity: float) -> None:
    in_min, cost, out_max = p
    if not (0.0 <= in_min <= capacity + EPS):
        raise ModelError(f"profile in_min {in_min} outside [0, {capacity}]")
    if not (0.0 <= out_max <= capacity + EPS):
        raise ModelError(f"profile out_max {out_max} outside [0, {capacity}]")
    if cost > in_min + EPS:
        raise ModelError(f"profile cost {cost} exceeds in_min {in_min}")


class ChargingFunction:
    """Univariate charging curve of a station, with its expanded inverse.

    ``kind`` is one of:

    * ``swap``: battery swap; any arrival SoC becomes ``capacity`` instantly
      (the swap duration is modeled by ``init_time``).
    * ``curve``: piecewise-linear concave curve given by breakpoints
      ``(t_i, b_i)`` with strictly increasing times and SoCs (the final SoC
      is the plateau ``alpha_max``).
    * ``const``: internal kind used for the dummy source station, evaluating
      to a fixed SoC for any duration.
    """

    __slots__ = (
        "kind",
        "points",
        "init_time",
        "capacity",
        "alpha_min",
        "alpha_max",
        "max_time",
        "max_slope",
        "min_pos_slope",
        "station_type",
    )

    def __init__(
        self,
        kind: str,
        capacity: float,
        init_time: float = 0.0,
        points: Sequence[tuple[float, float]] = (),
        station_type: Optional[str] = None,
        const_level: float = 0.0,
    ) -> None:
        self.kind = kind
        self.capacity = capacity
        self.init_time = init_time
        self.station_type = station_type
        if init_time < 0.0:
            raise ModelError("init_time must be >= 0")
        if kind == SWAP:
            if init_time <= 0.0:
                raise ModelError("swap stations require init_time > 0")
            self.points = ((0.0, capacity),)
            self.alpha_min = capacity
            self.alpha_max = capacity
            self.max_time = 0.0
            self.max_slope = capacity / init_time
            self.min_pos_slope = INF
        elif kind == CONST:
            self.points = ((0.0, const_level),)
            self.alpha_min = const_level
            self.alpha_max = const_level
            self.max_time = 0.0
            self.max_slope = 0.0
            self.min_pos_slope = INF
        elif kind == CURVE:
            self.points = tuple((float(t), float(b)) for t, b in points)
            self._validate_curve()
            self.alpha_min = self.points[0][1]
            self.alpha_max = self.points[-1][1]
            self.max_time = self.points[-1][0]
            slopes = [
                (b2 - b1) / (t2 - t1)
                for (t1, b1), (t2, b2) in zip(self.points, self.points[1:])
            ]
            self.max_slope = max(slopes) if slopes else 0.0
            pos = [s for s in slopes if s > EPS]
            self.min_pos_slope = min(pos) if pos else INF
            if self.alpha_min > EPS:
                if init_time <= 0.0:
                    raise ModelError("curve with alpha_min > 0 requires init_time > 0")
                self.max_slope = max(self.max_slope, self.alpha_min / init_time)
            if self.max_slope <= 0.0:
                raise ModelError("charging curve must have positive maximum slope")
        else:
            raise ModelError(f"unknown charging-function kind {kind!r}")

    def _validate_curve(self) -> None:
        pts = self.points
        if len(pts) < 2:
            raise ModelError("charging curve needs at least two breakpoints")
        if pts[0][0] != 0.0:
            raise ModelError("charging curve must start at time 0")
        prev_slope = INF
        for (t1, b1), (t2, b2) in zip(pts, pts[1:]):
            if t2 <= t1:
                raise ModelError("charging curve times must be strictly increasing")
            if b2 <= b1:
                raise ModelError("charging curve SoCs must be strictly increasing")
            slope = (b2 - b1) / (t2 - t1)
            if slope > prev_slope + EPS:
                raise ModelError("charging curve must be concave")
            prev_slope = slope
        for _, b in pts:
            if b < -EPS or b > self.capacity + EPS:
                raise ModelError("charging curve SoC outside [0, capacity]")

    def value(self, t: float) -> float:
        """Forward curve: SoC after charging for time ``t`` from SoC 0."""
        if self.kind == SWAP:
            return self.capacity
        if self.kind == CONST:
            return self.alpha_min
        pts = self.points
        if t <= 0.0:
            return pts[0][1]
        if t >= self.max_time:
            return self.alpha_max
        lo, hi = 0, len(pts) - 1
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            if pts[mid][0] <= t:
                lo = mid
            else:
                hi = mid
        t1, b1 = pts[lo]
        t2, b2 = pts[lo + 1]
        return b1 + (b2 - b1) * (t - t1) / (t2 - t1)

    def inv(self, soc: float) -> float:
        """Expanded inverse: 0 below alpha_min, max_time above alpha_max."""
        if self.kind in (SWAP, CONST):
            return 0.0
        if soc < self.alpha_min:
            return 0.0
        if soc >= self.alpha_max:
            return self.max_time
        pts = self.points
        lo, hi = 0, len(pts) - 1
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            if pts[mid][1] <= soc:
                lo = mid
            else:
                hi = mid
        t1, b1 = pts[lo]
        t2, b2 = pts[lo + 1]
        return t1 + (t2 - t1) * (soc - b1) / (b2 - b1)

    def eval(self, soc: float, duration: float) -> float:
        """Departure SoC after charging ``duration`` from arrival SoC ``soc``."""
        if soc > self.alpha_max + EPS:
            raise ModelError(
                f"arrival SoC {soc} exceeds reachable maximum {self.alpha_max}"
            )
        if self.kind == SWAP:
            return self.capacity
        if self.kind == CONST:
            return self.alpha_min
        return self.value(self.inv(soc) + duration)

    def duration(self, soc_from: float, soc_to: float) -> float:
        """Minimal charging time from ``soc_from`` to ``soc_to``."""
        if soc_to > self.alpha_max + EPS:
            raise ModelError(
                f"target SoC {soc_to} exceeds reachable maximum {self.alpha_max}"
            )
        if soc_to <= soc_from:
            return 0.0
        return max(0.0, self.inv(soc_to) - self.inv(soc_from))


def swap_function(capacity: float, init_time: float) -> ChargingFunction:
    return ChargingFunction(SWAP, capacity, init_time=init_time, station_type="SWAP")


def curve_function(
    capacity: float,
    points: Sequence[tuple[float, float]],
    init_time: float = 0.0,
    station_type: Optional[str] = None,
) -> ChargingFunction:
    return ChargingFunction(
        CURVE, capacity, init_time=init_time, points=points, station_type=station_type
    )


def const_function(capacity: float, level: float) -> ChargingFunction:
    return ChargingFunction(CONST, capacity, const_level=level)


class Graph:
    """Directed road network with drive times, consumptions and stations.

    Adjacency is kept in deterministic order (head id, then drive time,
    then consumption) so that identical inputs reproduce identical runs.
    """

    __slots__ = ("n", "capacity", "arcs", "stations", "out", "rev", "_profiles")

    def __init__(
        self,
        n: int,
        arcs: Sequence[tuple[int, int, float, float]],
        stations: dict[int, ChargingFunction],
        capacity: float,
        validate: bool = True,
    ) -> None:
        if capacity <= 0.0:
            raise ModelError("battery capacity must be positive")
        self.n = n
        self.capacity = capacity
        self.arcs = [(int(t), int(h), float(d), float(c)) for t, h, d, c in arcs]
        self.stations = dict(stations)
        if validate:
            self._validate()
        order = sorted(range(len(self.arcs)), key=lambda i: self.arcs[i])
        self.arcs = [self.arcs[i] for i in order]
        self._profiles = [make_arc_profile(c, capacity) for _, _, _, c in self.arcs]
        self.out: list[list[int]] = [[] for _ in range(n)]
        self.rev: list[list[int]] = [[] for _ in range(n)]
        for i, (t, h, _, _) in enumerate(self.arcs):
            self.out[t].append(i)
            self.rev[h].append(i)

    def _validate(self) -> None:
        for t, h, d, c in self.arcs:
            if not (0 <= t < self.n and 0 <= h < self.n):
                raise ModelError(f"arc ({t},{h}) has vertex outside [0,{self.n})")
            if d <= 0.0:
                raise ModelError(f"arc ({t},{h}) has non-positive drive time {d}")
            if not math.isfinite(c):
                raise ModelError(f"arc ({t},{h}) has non-finite consumption")
        for v, cf in self.stations.items():
            if not (0 <= v < self.n):
                raise ModelError(f"station vertex {v} outside [0,{self.n})")
            if cf.kind == CONST:
                raise ModelError("const charging functions are internal only")
            if abs(cf.capacity - self.capacity) > EPS:
                raise ModelError(f"station {v} built for a different capacity")

    def profile(self, arc_index: int) -> Profile:
        return self._profiles[arc_index]

    def max_charging_slope(self) -> float:
        """Best charging rate available anywhere (inf when no stations)."""
        if not self.stations:
            return INF
        return max(cf.max_slope for cf in self.stations.values())

    def check_no_negative_cycle(self) -> None:
        """Bellman-Ford check that no cycle has negative total consumption."""
        dist = [0.0] * self.n
        for _ in range(self.n):
            changed = False
            for t, h, _, c in self.arcs:
                if dist[t] + c < dist[h] - EPS:
                    dist[h] = dist[t] + c
                    changed = True
            if not changed:
                return
        raise ModelError("graph contains a cycle with negative total consumption")
