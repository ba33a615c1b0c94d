"""Instance files, station-type library, scenarios, synthetic networks.

Text format (UTF-8, line oriented, decimals rendered with six fractional
digits)::

    ev <n> <m> <k> <capacity_wh>
    a <tail> <head> <drive_s> <cons_wh>
    s <vertex> <init_s> swap
    s <vertex> <init_s> curve <p> <t1> <b1> ... <tp> <bp>
    s <vertex> type <SWAP|SUPER|KW44|KW22|KW11>

Query files hold ``q <s> <t> <soc_wh>`` lines. Comments start with ``#``.
"""

from __future__ import annotations

import heapq
import math
import random
from typing import Iterable, Optional

from .model import (
    ChargingFunction,
    Graph,
    ModelError,
    curve_function,
    swap_function,
)

STATION_TYPES = ("SWAP", "SUPER", "KW44", "KW22", "KW11")

SWAP_INIT_TIME = 180.0
DEFAULT_INIT_TIME = 60.0
SUPER_TIME_TO_80 = 34.0 * 60.0
SUPER_MAX_FRACTION = 0.8

# Scenario compositions: fractions per type in STATION_TYPES order.
SCENARIOS = {
    "bss": {"SWAP": 1.0},
    "mixed": {"KW11": 0.3, "KW22": 0.3, "KW44": 0.2, "SUPER": 0.1, "SWAP": 0.1},
    "realistic": {"KW11": 0.5, "KW22": 0.4, "KW44": 0.1},
}

NEGATIVE_CYCLE_CHECK_LIMIT = 512


class ParseError(ValueError):
    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def station_function(station_type: str, capacity: float) -> ChargingFunction:
    """Concrete charging function for a named station type.

    Regular chargers deliver nominal power up to 80% of capacity; each
    remaining 5% band runs at half the previous band's power (a coarse
    stand-in for the tapering of real charge controllers). Superchargers
    reach 80% in 34 minutes and stop there; swap stations replace the
    battery within their setup time.
    """
    if station_type == "SWAP":
        return swap_function(capacity, SWAP_INIT_TIME)
    if station_type == "SUPER":
        pts = [(0.0, 0.0), (SUPER_TIME_TO_80, SUPER_MAX_FRACTION * capacity)]
        return curve_function(capacity, pts, DEFAULT_INIT_TIME, station_type)
    powers = {"KW44": 44000.0, "KW22": 22000.0, "KW11": 11000.0}
    if station_type not in powers:
        raise ModelError(f"unknown station type {station_type!r}")
    rate = powers[station_type] / 3600.0  # Wh per second
    pts = [(0.0, 0.0)]
    t = 0.8 * capacity / rate
    pts.append((t, 0.8 * capacity))
    band_rate = rate
    for k in range(1, 5):
        band_rate /= 2.0
        t += 0.05 * capacity / band_rate
        pts.append((t, (0.8 + 0.05 * k) * capacity))
    return curve_function(capacity, pts, DEFAULT_INIT_TIME, station_type)


def assign_scenario(station_ids: Iterable[int], scenario: str, seed: int) -> dict[int, str]:
    """Deterministic station-type assignment with exact largest-remainder counts."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    ids = sorted(station_ids)
    n = len(ids)
    fractions = SCENARIOS[scenario]
    order = list(fractions)
    counts: dict[str, int] = {}
    remainders: list[tuple[float, int, str]] = []
    total = 0
    for pos, st in enumerate(order):
        quota = n * fractions[st]
        base = int(math.floor(quota + 1e-12))
        counts[st] = base
        total += base
        remainders.append((quota - base, -pos, st))
    remainders.sort(reverse=True)
    for i in range(n - total):
        counts[remainders[i % len(remainders)][2]] += 1
    rng = random.Random(seed)
    shuffled = list(ids)
    rng.shuffle(shuffled)
    assignment: dict[int, str] = {}
    pos = 0
    for st in order:
        for _ in range(counts[st]):
            assignment[shuffled[pos]] = st
            pos += 1
    return assignment


# ---------------------------------------------------------------------------
# parsing / rendering


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def parse_instance(text: str) -> Graph:
    header: Optional[tuple[int, int, int, float]] = None
    arcs: list[tuple[int, int, float, float]] = []
    stations: dict[int, ChargingFunction] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "ev":
                if header is not None:
                    raise ParseError(line_no, "duplicate header")
                if len(parts) != 5:
                    raise ParseError(line_no, "header needs n, m, k, capacity")
                header = (int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4]))
            elif tag == "a":
                if header is None:
                    raise ParseError(line_no, "arc before header")
                if len(parts) != 5:
                    raise ParseError(line_no, "arc needs tail, head, drive, consumption")
                arcs.append((int(parts[1]), int(parts[2]), float(parts[3]), float(parts[4])))
            elif tag == "s":
                if header is None:
                    raise ParseError(line_no, "station before header")
                v = int(parts[1])
                if v in stations:
                    raise ParseError(line_no, f"duplicate station at vertex {v}")
                capacity = header[3]
                if len(parts) >= 3 and parts[2] == "type":
                    if len(parts) != 4 or parts[3] not in STATION_TYPES:
                        raise ParseError(line_no, "expected: s <v> type <TYPE>")
                    stations[v] = station_function(parts[3], capacity)
                elif len(parts) == 4 and parts[3] == "swap":
                    stations[v] = swap_function(capacity, float(parts[2]))
                elif len(parts) >= 5 and parts[3] == "curve":
                    init = float(parts[2])
                    count = int(parts[4])
                    vals = parts[5:]
                    if len(vals) != 2 * count:
                        raise ParseError(line_no, f"curve expects {2 * count} numbers")
                    pts = [
                        (float(vals[2 * i]), float(vals[2 * i + 1]))
                        for i in range(count)
                    ]
                    stations[v] = curve_function(capacity, pts, init)
                else:
                    raise ParseError(line_no, "malformed station line")
            elif tag == "q":
                raise ParseError(line_no, "query lines belong in a query file")
            else:
                raise ParseError(line_no, f"unknown record {tag!r}")
        except ParseError:
            raise
        except (ValueError, ModelError) as exc:
            raise ParseError(line_no, str(exc)) from exc
    if header is None:
        raise ParseError(0, "missing ev header")
    n, m, k, capacity = header
    if len(arcs) != m:
        raise ParseError(0, f"header declares {m} arcs, found {len(arcs)}")
    if len(stations) != k:
        raise ParseError(0, f"header declares {k} stations, found {len(stations)}")
    try:
        graph = Graph(n, arcs, stations, capacity)
    except ModelError as exc:
        raise ParseError(0, str(exc)) from exc
    if n <= NEGATIVE_CYCLE_CHECK_LIMIT:
        graph.check_no_negative_cycle()
    return graph


def render_instance(graph: Graph) -> str:
    lines = [
        f"ev {graph.n} {len(graph.arcs)} {len(graph.stations)} {_fmt(graph.capacity)}"
    ]
    for t, h, d, c in graph.arcs:
        lines.append(f"a {t} {h} {_fmt(d)} {_fmt(c)}")
    for v in sorted(graph.stations):
        cf = graph.stations[v]
        if cf.station_type in STATION_TYPES:
            lines.append(f"s {v} type {cf.station_type}")
        elif cf.kind == "swap":
            lines.append(f"s {v} {_fmt(cf.init_time)} swap")
        else:
            pts = " ".join(f"{_fmt(t)} {_fmt(b)}" for t, b in cf.points)
            lines.append(f"s {v} {_fmt(cf.init_time)} curve {len(cf.points)} {pts}")
    return "\n".join(lines) + "\n"


def parse_queries(text: str) -> list[tuple[int, int, float]]:
    queries = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] != "q" or len(parts) != 4:
            raise ParseError(line_no, "expected: q <s> <t> <soc_wh>")
        queries.append((int(parts[1]), int(parts[2]), float(parts[3])))
    return queries


def render_queries(queries: Iterable[tuple[int, int, float]]) -> str:
    return "".join(f"q {s} {t} {_fmt(b)}\n" for s, t, b in queries)


# ---------------------------------------------------------------------------
# synthetic instances


def _round6(x: float) -> float:
    return round(x, 6)


def generate_synthetic(
    n: int,
    avg_degree: float = 4.0,
    station_fraction: float = 0.01,
    elevation_roughness: float = 300.0,
    seed: int = 1,
    capacity: float = 16000.0,
    scenario: str = "realistic",
    region_km: float = 100.0,
) -> Graph:
    """Random geometric road network with an elevation-based consumption.

    Vertices are points in a square of side ``region_km``; each connects to
    its nearest neighbors until the average degree is reached (arcs in both
    directions, so the result is strongly connected in practice). Drive time
    comes from length and a per-arc road class; consumption is a rolling
    term plus an elevation potential difference, so no cycle can have
    negative total consumption. At the default roughness roughly a tenth of
    all arcs have negative consumption.
    """
    if n < 2:
        raise ValueError("need at least two vertices")
    rng = random.Random(seed)
    pts = [(rng.random(), rng.random()) for _ in range(n)]

    # elevation field: a few smooth seeded waves, amplitude in meters
    waves = [
        (
            rng.uniform(0.5, 1.0),
            rng.uniform(15.0, 45.0),
            rng.uniform(15.0, 45.0),
            rng.uniform(0.0, 2.0 * math.pi),
        )
        for _ in range(4)
    ]
    amp_norm = sum(a for a, _, _, _ in waves)

    def elevation(p: tuple[float, float]) -> float:
        h = 0.0
        for a, kx, ky, phase in waves:
            h += a * math.sin(kx * p[0] + ky * p[1] + phase)
        return elevation_roughness * h / amp_norm

    k_neighbors = max(1, int(round(avg_degree / 2.0)))
    buckets = 1 + int(math.sqrt(n))
    grid: dict[tuple[int, int], list[int]] = {}
    for i, p in enumerate(pts):
        cell = (int(p[0] * buckets), int(p[1] * buckets))
        grid.setdefault(cell, []).append(i)

    def nearest(i: int) -> list[int]:
        px, py = pts[i]
        cx, cy = int(px * buckets), int(py * buckets)
        found: list[tuple[float, int]] = []
        radius = 1
        while True:
            found.clear()
            for dx in range(-radius, radius + 1):
                for dy in range(-radius, radius + 1):
                    for j in grid.get((cx + dx, cy + dy), ()):
                        if j != i:
                            qx, qy = pts[j]
                            found.append(((px - qx) ** 2 + (py - qy) ** 2, j))
            if len(found) >= k_neighbors or radius >= buckets:
                break
            radius += 1
        found.sort()
        return [j for _, j in found[:k_neighbors]]

    speeds = (60.0, 80.0, 100.0, 120.0)
    rolling = 150.0  # Wh per km
    climb = 4.0  # Wh per meter of elevation difference
    arc_set: set[tuple[int, int]] = set()
    arcs: list[tuple[int, int, float, float]] = []

    def add_road(i: int, j: int) -> None:
        speed = speeds[rng.randrange(len(speeds))]
        for (a, b) in ((i, j), (j, i)):
            if (a, b) in arc_set:
                continue
            arc_set.add((a, b))
            dist_km = max(region_km * math.dist(pts[a], pts[b]), 1e-3)
            drive = max(_round6(dist_km / speed * 3600.0), 1e-6)
            cons = _round6(
                rolling * dist_km + climb * (elevation(pts[b]) - elevation(pts[a]))
            )
            arcs.append((a, b, drive, cons))

    for i in range(n):
        for j in nearest(i):
            add_road(i, j)

    # k-NN graphs fragment; merge components along nearest cross pairs
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in arc_set:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    def nearest_foreign(v: int, root: int) -> Optional[tuple[float, int, int]]:
        px, py = pts[v]
        cx, cy = int(px * buckets), int(py * buckets)
        best: Optional[tuple[float, int, int]] = None
        for radius in range(buckets + 1):
            ring = []
            for dx in range(-radius, radius + 1):
                for dy in range(-radius, radius + 1):
                    if max(abs(dx), abs(dy)) == radius:
                        ring.extend(grid.get((cx + dx, cy + dy), ()))
            for u in ring:
                if find(u) != root:
                    d2 = (px - pts[u][0]) ** 2 + (py - pts[u][1]) ** 2
                    cand = (d2, v, u)
                    if best is None or cand < best:
                        best = cand
            if best is not None and radius >= 1:
                return best
        return best

    while True:
        roots = sorted({find(v) for v in range(n)})
        if len(roots) <= 1:
            break
        members: dict[int, list[int]] = {}
        for v in range(n):
            members.setdefault(find(v), []).append(v)
        links: list[tuple[float, int, int]] = []
        for root in roots:
            best: Optional[tuple[float, int, int]] = None
            for v in members[root]:
                cand = nearest_foreign(v, root)
                if cand is not None and (best is None or cand < best):
                    best = cand
            if best is not None:
                links.append(best)
        for _, v, u in sorted(links):
            if find(v) != find(u):
                add_road(v, u)
                parent[find(v)] = find(u)

    station_count = int(round(station_fraction * n))
    if station_fraction > 0.0:
        station_count = max(1, station_count)
    station_ids = sorted(rng.sample(range(n), min(station_count, n)))
    types = assign_scenario(station_ids, scenario, seed)
    stations = {v: station_function(types[v], capacity) for v in station_ids}
    return Graph(n, arcs, stations, capacity, validate=True)


def drive_time_dijkstra_order(graph: Graph, source: int) -> list[int]:
    """Vertices in settling order of a plain drive-time Dijkstra."""
    dist = [math.inf] * graph.n
    dist[source] = 0.0
    heap = [(0.0, source)]
    order: list[int] = []
    done = [False] * graph.n
    while heap:
        d, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        order.append(v)
        for idx in graph.out[v]:
            _, h, dt, _ = graph.arcs[idx]
            nd = d + dt
            if nd < dist[h]:
                dist[h] = nd
                heapq.heappush(heap, (nd, h))
    return order


def generate_rank_queries(
    graph: Graph,
    seed: int,
    ranks: Iterable[int],
    per_rank: int = 100,
    init_soc: Optional[float] = None,
) -> list[tuple[int, int, int, float]]:
    """Dijkstra-rank queries: (rank, source, target, init_soc) tuples.

    The target of a rank-r query is the r-th vertex settled by a plain
    drive-time Dijkstra from the source (the source itself is settled 0th).
    """
    rng = random.Random(seed)
    soc = graph.capacity if init_soc is None else init_soc
    out: list[tuple[int, int, int, float]] = []
    for rank in ranks:
        for _ in range(per_rank):
            source = rng.randrange(graph.n)
            order = drive_time_dijkstra_order(graph, source)
            if rank >= len(order):
                raise ValueError(
                    f"rank {rank} exceeds reachable set size {len(order)} from {source}"
                )
            out.append((rank, source, order[rank], soc))
    return out
