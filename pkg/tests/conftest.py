"""Shared fixtures: worked-example instances and random-instance factories."""

from __future__ import annotations

import math
import random

import pytest

from evroute.model import ChargingFunction, Graph, curve_function, swap_function


def fig3_graph() -> Graph:
    """Line graph with two stations; optimal trip time is 9 from SoC 4."""
    arcs = [
        (0, 1, 1.0, -2.0),
        (1, 2, 1.0, 4.0),
        (2, 3, 1.0, -1.0),
        (3, 4, 1.0, 3.0),
        (4, 5, 1.0, -1.0),
        (5, 6, 1.0, 2.0),
        (6, 7, 1.0, 1.0),
    ]
    stations = {
        2: curve_function(5.0, [(0.0, 0.0), (1.5, 3.0), (5.5, 5.0)], 0.0),
        5: curve_function(5.0, [(0.0, 0.0), (5.0, 5.0)], 0.0),
    }
    return Graph(8, arcs, stations, 5.0)


def fig5_curve() -> ChargingFunction:
    return curve_function(4.0, [(0.0, 0.0), (1.0, 2.0), (2.0, 3.0), (5.0, 4.0)])


@pytest.fixture
def fig3():
    return fig3_graph()


def random_concave_curve(rng: random.Random, capacity: float) -> ChargingFunction:
    """Random strictly increasing concave curve from SoC 0 to capacity."""
    segments = rng.randint(1, 4)
    slopes = sorted((rng.uniform(0.2, 4.0) for _ in range(segments)), reverse=True)
    soc_steps = [rng.uniform(0.5, 2.0) for _ in range(segments)]
    total = sum(soc_steps)
    soc_steps = [s * capacity / total for s in soc_steps]
    pts = [(0.0, 0.0)]
    t = 0.0
    b = 0.0
    for slope, db in zip(slopes, soc_steps):
        t += db / slope
        b += db
        pts.append((t, b))
    pts[-1] = (pts[-1][0], capacity)
    return curve_function(capacity, pts)


def random_station(rng: random.Random, capacity: float, allow_swap: bool = True) -> ChargingFunction:
    if allow_swap and rng.random() < 0.25:
        return swap_function(capacity, rng.uniform(30.0, 240.0))
    return random_concave_curve(rng, capacity)


def random_instance(
    seed: int,
    n: int = 30,
    max_stations: int = 3,
    capacity: float = 10.0,
    extra_arcs: float = 1.5,
    allow_swap: bool = True,
) -> Graph:
    """Small random instance: spanning tree plus extra arcs, consumption from
    a vertex potential plus a nonnegative term (so cycles never gain energy)."""
    rng = random.Random(seed)
    potential = [rng.uniform(0.0, 0.6 * capacity) for _ in range(n)]
    arcs = []

    def add(u: int, v: int) -> None:
        drive = round(rng.uniform(0.5, 4.0), 4)
        cons = round(potential[v] - potential[u] + rng.uniform(0.0, 0.4 * capacity), 4)
        arcs.append((u, v, drive, cons))

    order = list(range(n))
    rng.shuffle(order)
    for i in range(1, n):
        u = order[rng.randrange(i)]
        v = order[i]
        if rng.random() < 0.5:
            u, v = v, u
        add(u, v)
        if rng.random() < 0.7:
            add(v, u)
    for _ in range(int(extra_arcs * n)):
        u, v = rng.randrange(n), rng.randrange(n)
        if u != v:
            add(u, v)
    station_count = rng.randint(1, max_stations)
    station_ids = rng.sample(range(n), station_count)
    stations = {v: random_station(rng, capacity, allow_swap) for v in station_ids}
    return Graph(n, arcs, stations, capacity)


def random_queries(graph: Graph, seed: int, count: int) -> list[tuple[int, int, float]]:
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        s = rng.randrange(graph.n)
        t = rng.randrange(graph.n)
        b = rng.choice([graph.capacity, round(rng.uniform(0.0, graph.capacity), 4)])
        out.append((s, t, b))
    return out
