"""Partial CH preprocessing: contraction, witnesses, serialization."""

import random

import pytest

from evroute.cfp import cfp_query
from evroute.charge import QueryPlan, charge_query
from evroute.model import Graph, curve_function, link_profiles
from evroute.overlay import CORE_RANK, Overlay, ch_preprocess, ed_dn_cq_priority, witness_search

from .conftest import random_instance, random_queries


def _station(capacity):
    return curve_function(capacity, [(0.0, 0.0), (capacity, capacity)])


def test_all_station_graph_stays_uncontracted():
    capacity = 10.0
    arcs = [(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0), (2, 0, 1.0, -1.0)]
    stations = {v: _station(capacity) for v in range(3)}
    g = Graph(3, arcs, stations, capacity)
    ov = ch_preprocess(g)
    assert ov.core_vertices == [0, 1, 2]
    assert ov.shortcut_count() == 0


def test_degree_two_chain_contraction():
    capacity = 10.0
    arcs = [(0, 1, 2.0, 3.0), (1, 2, 1.5, -1.0)]
    stations = {0: _station(capacity), 2: _station(capacity)}
    g = Graph(3, arcs, stations, capacity)
    ov = ch_preprocess(g, core_degree=100.0)
    # force contraction regardless of the degree threshold
    if ov.rank[1] == CORE_RANK:
        ov = ch_preprocess(g, core_degree=0.1)
    assert ov.rank[1] != CORE_RANK
    shortcuts = [a for i, a in enumerate(ov.arcs) if a[6] >= 0 and not ov.removed[i]]
    assert len(shortcuts) == 1
    sc = shortcuts[0]
    assert (sc[0], sc[1]) == (0, 2)
    assert sc[2] == pytest.approx(3.5)
    linked = link_profiles(g.profile(g.out[0][0]), g.profile(g.out[1][0]))
    assert (sc[3], sc[4], sc[5]) == linked


def test_witness_search_direct_dominating_arc():
    capacity = 10.0
    # candidate 0->2 via 1 (d=4, profile from c=2+2); direct arc 0->2 is better
    arcs = [(0, 1, 2.0, 2.0), (1, 2, 2.0, 2.0), (0, 2, 3.0, 1.0)]
    g = Graph(3, arcs, {0: _station(capacity), 2: _station(capacity)}, capacity)
    cand_profile = link_profiles((2.0, 2.0, 8.0), (2.0, 2.0, 8.0))
    assert witness_search(g, 0, 2, 4.0, cand_profile, skip=1) is False
    # without the direct arc the candidate is needed
    g2 = Graph(3, arcs[:2], {0: _station(capacity), 2: _station(capacity)}, capacity)
    assert witness_search(g2, 0, 2, 4.0, cand_profile, skip=1) is True


def test_priority_terms():
    capacity = 10.0
    arcs = [(0, 1, 2.0, 3.0), (1, 2, 1.5, -1.0)]
    g = Graph(4, arcs, {0: _station(capacity), 2: _station(capacity)}, capacity)
    ed, dn, cq, prio = ed_dn_cq_priority(g, 3)  # isolated vertex
    assert (ed, dn, cq) == (0, 0, 0)
    ed1, dn1, cq1, prio1 = ed_dn_cq_priority(g, 1)  # chain vertex, no witness
    assert ed1 == 1 - 2
    assert prio1 == 64 * ed1


def test_overlay_query_equivalence_random():
    for seed in (0, 1, 2):
        g = random_instance(seed + 300, n=60, max_stations=3, capacity=9.0)
        ov = ch_preprocess(g, core_degree=6.0)
        assert set(g.stations) <= set(ov.core_vertices)
        for s, t, b in random_queries(g, seed, 8):
            plain = cfp_query(g, s, t, b)
            over = charge_query(g, ov, QueryPlan(s, t, b, potential="zero"))
            assert plain.feasible == over.feasible
            if plain.feasible:
                assert over.trip_time == pytest.approx(plain.trip_time, abs=1e-9)


def test_shortcut_profiles_match_unpacked_chain():
    g = random_instance(77, n=50, max_stations=2, capacity=9.0)
    ov = ch_preprocess(g, core_degree=4.0)
    for idx, arc in enumerate(ov.arcs):
        if arc[6] < 0 or ov.removed[idx]:
            continue
        profile = None
        drive = 0.0
        for base in ov.unpack(idx):
            profile = link_profiles(profile, g.profile(base)) if profile else g.profile(base)
            drive += g.arcs[base][2]
        assert profile == (arc[3], arc[4], arc[5])
        assert drive == pytest.approx(arc[2], abs=1e-9)


def test_preprocessing_deterministic():
    g = random_instance(55, n=45, max_stations=3, capacity=9.0)
    a = ch_preprocess(g, core_degree=5.0).to_bytes()
    b = ch_preprocess(g, core_degree=5.0).to_bytes()
    assert a == b


def test_serialization_roundtrip(tmp_path):
    g = random_instance(21, n=40, max_stations=2, capacity=9.0)
    ov = ch_preprocess(g, core_degree=5.0)
    path = tmp_path / "overlay.bin"
    ov.save(str(path))
    loaded = Overlay.load(str(path))
    assert loaded.to_bytes() == ov.to_bytes()
    assert loaded.rank == ov.rank
    assert loaded.arcs == ov.arcs
    assert loaded.text_dump() == ov.text_dump()
    # queries behave identically on the loaded overlay
    for s, t, b in random_queries(g, 4, 5):
        r1 = charge_query(g, ov, QueryPlan(s, t, b, potential="pi"))
        r2 = charge_query(g, loaded, QueryPlan(s, t, b, potential="pi"))
        assert r1.feasible == r2.feasible
        if r1.feasible:
            assert r1.trip_time == pytest.approx(r2.trip_time, abs=1e-12)


def test_smaller_degree_threshold_gives_larger_core():
    g = random_instance(91, n=80, max_stations=3, capacity=9.0)
    small = ch_preprocess(g, core_degree=3.0)
    large = ch_preprocess(g, core_degree=12.0)
    assert len(small.core_vertices) > len(large.core_vertices)


def test_aggressive_overlay_has_no_parallel_arcs_and_fewer_shortcuts():
    g = random_instance(13, n=60, max_stations=3, capacity=9.0)
    regular = ch_preprocess(g, core_degree=5.0)
    aggressive = ch_preprocess(g, core_degree=5.0, aggressive=True)
    assert aggressive.shortcut_count() <= regular.shortcut_count()
    live_pairs = [
        (a[0], a[1])
        for i, a in enumerate(aggressive.arcs)
        if not aggressive.removed[i] and a[6] >= 0
    ]
    assert len(live_pairs) == len(set(live_pairs))
    assert aggressive.aggressive
