"""Label search: SoC functions, dominance, spawning, queries, retrieval."""

import math
import random

import pytest

from evroute.cfp import (
    Label,
    VerificationError,
    cfp_query,
    dominates,
    min_feasible_trip_time,
    soc_function_eval,
    switching_candidates,
    verify_itinerary,
)
from evroute.model import (
    INF,
    NEG_INF,
    Graph,
    const_function,
    curve_function,
    identity_profile,
    swap_function,
)

from .conftest import fig3_graph, fig5_curve, random_instance, random_queries


def fig5_label() -> Label:
    # label at some vertex with tau=3, arrival SoC 0.5 at the station,
    # subpath profile (1, -1, 3)
    return Label(3.0, 0.5, 0, fig5_curve(), (1.0, -1.0, 3.0), 1, None, None, False, 0)


def test_soc_function_fig5():
    lab = fig5_label()
    assert soc_function_eval(lab, 3.0) == NEG_INF
    assert soc_function_eval(lab, 3.2) == NEG_INF
    assert soc_function_eval(lab, 3.75) == pytest.approx(3.0, abs=1e-9)
    assert soc_function_eval(lab, 9.0) == pytest.approx(3.0, abs=1e-9)
    assert lab.breakpoints() == ((3.25, 2.0), (3.75, 3.0))


def test_soc_function_swap_station():
    swap = swap_function(5.0, 60.0)
    lab = Label(10.0, 1.0, 0, swap, identity_profile(5.0), 1, None, None, False, 0)
    assert soc_function_eval(lab, 10.0) == 5.0
    assert soc_function_eval(lab, 9.9) == NEG_INF


def test_min_feasible_trip_time():
    assert min_feasible_trip_time(fig5_label()) == pytest.approx(3.25, abs=1e-9)
    easy = Label(2.0, 3.0, 0, fig5_curve(), (1.0, 1.0, 3.0), 1, None, None, False, 0)
    assert min_feasible_trip_time(easy) == 2.0
    # requirement above the station's reachable maximum: discard signal
    blocked = Label(2.0, 3.0, 0, fig5_curve(), (4.5, 4.0, 0.2), 1, None, None, False, 0)
    assert min_feasible_trip_time(blocked) == INF


def test_dominance_reflexive_and_crossing():
    lab = fig5_label()
    assert dominates(lab, lab)
    # Fig 4d: the propagated label and the spawn at trip time 6 cross
    cf_b = curve_function(5.0, [(0.0, 0.0), (1.5, 3.0), (5.5, 5.0)], 0.0)
    cf_e = curve_function(5.0, [(0.0, 0.0), (5.0, 5.0)], 0.0)
    l2prime = Label(5.0, 1.0, 2, cf_b, (2.0, 1.0, 3.0), 5, None, None, False, 0)
    assert l2prime.breakpoints() == ((5.5, 1.0), (6.0, 2.0), (8.0, 3.0))
    l4 = Label(6.0, 2.0, 5, cf_e, identity_profile(5.0), 5, None, None, False, 1)
    assert not dominates(l2prime, l4)
    assert not dominates(l4, l2prime)


def _grid_dominates(l1, l2, capacity, points=1000):
    hi = max(l1.breakpoints()[-1][0], l2.breakpoints()[-1][0]) + 1.0
    lo = min(l1.breakpoints()[0][0], l2.breakpoints()[0][0]) - 0.5
    for i in range(points + 1):
        t = lo + (hi - lo) * i / points
        f1, f2 = soc_function_eval(l1, t), soc_function_eval(l2, t)
        if f2 == NEG_INF:
            continue
        if f1 == NEG_INF or f1 < f2 - 1e-9:
            return False
    return True


def test_dominance_matches_grid_oracle():
    rng = random.Random(5)
    capacity = 8.0
    from .conftest import random_station

    for _ in range(200):
        cf1 = random_station(rng, capacity)
        cf2 = random_station(rng, capacity)
        labs = []
        for cf in (cf1, cf2):
            tau = rng.uniform(0.0, 5.0)
            b = rng.uniform(0.0, min(capacity, cf.alpha_max))
            in_min = rng.uniform(0.0, capacity)
            cost = rng.uniform(-capacity, in_min)
            out_max = rng.uniform(0.0, capacity)
            labs.append(Label(tau, b, 0, cf, (in_min, cost, out_max), 1,
                              None, None, False, 0))
        l1, l2 = labs
        if min_feasible_trip_time(l1) == INF or min_feasible_trip_time(l2) == INF:
            continue
        assert dominates(l1, l2, tol=1e-9) == _grid_dominates(l1, l2, capacity)


def test_switching_candidates_fig5():
    durations = switching_candidates(fig5_label())
    assert durations == pytest.approx([0.25, 0.75])


def test_switching_candidates_swap_predecessor():
    swap = swap_function(5.0, 60.0)
    lab = Label(4.0, 2.0, 0, swap, (1.0, 0.5, 3.0), 1, None, None, False, 0)
    assert switching_candidates(lab) == [0.0]


def test_switching_candidates_nothing_left_to_charge():
    cf = fig5_curve()
    lab = Label(2.0, cf.alpha_max, 0, cf, identity_profile(4.0), 1, None, None, False, 0)
    assert switching_candidates(lab) == [0.0]


def test_spawn_times_fig4(fig3):
    # run the query and inspect the spawned labels at station 5
    res = cfp_query(fig3, 0, 7, 4.0)
    assert res.trip_time == pytest.approx(9.0, abs=1e-9)
    # direct structural check of the spawn rule
    cf_b = fig3.stations[2]
    l2prime = Label(5.0, 1.0, 2, cf_b, (2.0, 1.0, 3.0), 5, None, None, False, 0)
    spawn_times = [t + 0.0 for t, _ in l2prime.breakpoints()]
    assert spawn_times == pytest.approx([5.5, 6.0, 8.0])
    spawn_socs = [s for _, s in l2prime.breakpoints()]
    assert spawn_socs == pytest.approx([1.0, 2.0, 3.0])


def test_lemma1_spawned_family_dominates_intermediates():
    rng = random.Random(9)
    capacity = 8.0
    from .conftest import random_concave_curve, random_station

    checked = 0
    while checked < 100:
        cf_old = random_station(rng, capacity)
        cf_new = random_concave_curve(rng, capacity)
        tau = rng.uniform(0.0, 4.0)
        b = rng.uniform(0.0, min(capacity, cf_old.alpha_max))
        in_min = rng.uniform(0.0, 0.8 * capacity)
        cost = rng.uniform(-capacity, in_min)
        out_max = rng.uniform(0.2 * capacity, capacity)
        lab = Label(tau, b, 0, cf_old, (in_min, cost, out_max), 1, None, None, False, 0)
        if min_feasible_trip_time(lab) == INF:
            continue
        bps = lab.breakpoints()
        spawned = [
            Label(t + cf_new.init_time, min(s, cf_new.alpha_max), 1, cf_new,
                  identity_profile(capacity), 1, None, None, True, 0)
            for t, s in bps
            if s <= cf_new.alpha_max + 1e-9
        ]
        theta = rng.uniform(0.0, bps[-1][0] - tau + 2.0)
        t_arr = tau + theta
        soc_arr = soc_function_eval(lab, t_arr)
        if soc_arr == NEG_INF or soc_arr > cf_new.alpha_max:
            checked += 1
            continue
        theta_label = Label(t_arr + cf_new.init_time, soc_arr, 1, cf_new,
                            identity_profile(capacity), 1, None, None, True, 0)
        hi = theta_label.breakpoints()[-1][0] + 1.0
        for i in range(200):
            t = tau + (hi - tau) * i / 199.0
            target = soc_function_eval(theta_label, t)
            if target == NEG_INF:
                continue
            best = soc_function_eval(lab, t)
            for sp in spawned:
                best = max(best, soc_function_eval(sp, t))
            assert best >= target - 1e-9
        checked += 1


def test_cfp_query_fig3(fig3):
    res = cfp_query(fig3, 0, 7, 4.0, check_invariants=True)
    assert res.status == "ok"
    assert res.trip_time == pytest.approx(9.0, abs=1e-9)
    assert res.path == [0, 1, 2, 3, 4, 5, 6, 7]
    assert [s.vertex for s in res.stops] == [2, 5]
    assert res.stops[0].arrival_soc == pytest.approx(1.0, abs=1e-9)
    assert res.stops[0].depart_soc == pytest.approx(3.0, abs=1e-9)
    assert res.stops[1].arrival_soc == pytest.approx(2.0, abs=1e-9)
    assert res.stops[1].depart_soc == pytest.approx(3.0, abs=1e-9)
    assert res.drive_time == pytest.approx(7.0, abs=1e-9)
    assert res.charge_time == pytest.approx(2.0, abs=1e-9)


def test_cfp_query_source_equals_target(fig3):
    res = cfp_query(fig3, 3, 3, 2.0)
    assert res.status == "ok"
    assert res.trip_time == 0.0
    assert res.stops == []


def test_cfp_query_infeasible():
    g = Graph(3, [(0, 1, 1.0, 9.0)], {}, 5.0)
    res = cfp_query(g, 0, 1, 5.0)
    assert res.status == "infeasible"
    res2 = cfp_query(g, 0, 2, 5.0)
    assert res2.status == "infeasible"


def test_verify_itinerary_fig3(fig3):
    res = cfp_query(fig3, 0, 7, 4.0)
    total = verify_itinerary(fig3, 0, res.arc_path, res.stops, 4.0)
    assert total == pytest.approx(9.0, abs=1e-9)
    # dropping either stop breaks feasibility or can only be slower
    for drop in (0, 1):
        kept = [s for i, s in enumerate(res.stops) if i != drop]
        try:
            t = verify_itinerary(fig3, 0, res.arc_path, kept, 4.0)
            assert t >= 9.0 - 1e-9
        except VerificationError:
            pass


def test_verify_itinerary_empty_path(fig3):
    assert verify_itinerary(fig3, 4, [], [], 3.0) == 0.0


def test_returned_trip_time_matches_simulation_random():
    for seed in range(25):
        g = random_instance(seed, n=25, max_stations=3)
        for s, t, b in random_queries(g, seed + 1000, 4):
            res = cfp_query(g, s, t, b, check_invariants=True)
            if res.feasible and s != t:
                sim = verify_itinerary(g, s, res.arc_path, res.stops, b)
                assert sim == pytest.approx(res.trip_time, abs=1e-6)


def test_label_at_own_station_has_identity_profile(fig3):
    res = cfp_query(fig3, 0, 7, 4.0)
    assert res.feasible  # identity-profile invariant is enforced structurally
