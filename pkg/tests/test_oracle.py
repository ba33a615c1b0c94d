"""Grid dynamic program and validation harness."""

import pytest

from evroute.cfp import cfp_query
from evroute.model import INF, Graph
from evroute.oracle import (
    bsp_query,
    grid_dp_query,
    grid_tolerance,
    validate_instance,
)

from .conftest import fig3_graph, random_instance, random_queries


def test_grid_dp_fig3():
    g = fig3_graph()
    assert grid_dp_query(g, 0, 7, 4.0, delta=0.5) == pytest.approx(9.0, abs=1e-9)
    assert grid_dp_query(g, 3, 3, 2.0, delta=0.5) == 0.0
    assert grid_dp_query(g, 7, 0, 4.0, delta=0.5) == INF


def test_grid_dp_nested_grid_monotone():
    for seed in range(12):
        g = random_instance(seed + 40, n=20, max_stations=2, capacity=8.0)
        s, t, b = random_queries(g, seed, 1)[0]
        coarse = grid_dp_query(g, s, t, b, delta=g.capacity / 50.0)
        fine = grid_dp_query(g, s, t, b, delta=g.capacity / 100.0)
        assert fine <= coarse + 1e-9


def test_grid_dp_never_below_exact():
    for seed in range(15):
        g = random_instance(seed + 60, n=25, max_stations=3, capacity=8.0)
        for s, t, b in random_queries(g, seed, 3):
            dp = grid_dp_query(g, s, t, b, delta=g.capacity / 100.0)
            exact = cfp_query(g, s, t, b)
            if exact.feasible:
                assert exact.trip_time <= dp + 1e-9
            else:
                assert dp == INF


def test_validate_instance_clean_corpus():
    from evroute.oracle import ValidationReport

    report = ValidationReport()
    for seed in range(10):
        g = random_instance(seed + 80, n=25, max_stations=3, capacity=8.0)
        queries = random_queries(g, seed, 3)
        validate_instance(g, queries, delta=g.capacity / 400.0, report=report)
    assert report.ok, report.violations
    assert report.queries == 30


def test_validate_reports_violation_on_corrupted_result(monkeypatch):
    g = random_instance(99, n=20, max_stations=2, capacity=8.0)
    queries = [q for q in random_queries(g, 1, 6)]
    import evroute.oracle as oracle_mod

    real = oracle_mod.cfp_query
    feasible_query = None
    for q in queries:
        if real(g, q[0], q[1], q[2]).feasible:
            feasible_query = q
            break
    assert feasible_query is not None

    def corrupted(graph, s, t, b, **kw):
        res = real(graph, s, t, b, **kw)
        if res.feasible:
            res.trip_time += 1000.0  # pretend the search overshot
        return res

    monkeypatch.setattr(oracle_mod, "cfp_query", corrupted)
    report = validate_instance(g, [feasible_query], delta=g.capacity / 400.0)
    assert not report.ok
    assert report.violations[0]["assertion"] == "exact_not_above_dp"


def test_bsp_matches_cfp_without_stations():
    for seed in range(10):
        g0 = random_instance(seed + 120, n=25, max_stations=1, capacity=8.0)
        # strip stations and make consumption nonnegative: plain CSP instance
        arcs = [(t, h, d, abs(c)) for t, h, d, c in g0.arcs]
        g = Graph(g0.n, arcs, {}, g0.capacity)
        for s, t, b in random_queries(g, seed, 3):
            ref = bsp_query(g, s, t, b)
            res = cfp_query(g, s, t, b)
            if res.feasible:
                assert res.trip_time == pytest.approx(ref, abs=1e-9)
            else:
                assert ref == INF


def test_grid_tolerance_floor():
    g = fig3_graph()
    assert grid_tolerance(g, 0.01, 2) > 0
    arcs = [(0, 1, 1.0, 1.0)]
    from evroute.model import swap_function

    g2 = Graph(2, arcs, {0: swap_function(5.0, 60.0)}, 5.0)
    assert grid_tolerance(g2, 0.01, 3) == 1e-9  # swaps lose nothing to the grid
