"""Command-line front end: generate, preprocess, query, rank, validate.

Exit codes: 0 ok, 1 all queries infeasible, 2 validation failure,
3 usage or IO error. All outputs embed a schema string; every run is
deterministic given its inputs and seed (wall-clock timings are printed
to stderr/stdout only, never written into result files).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import statistics
import sys
import time

from .charge import QueryPlan, charge_query
from .cfp import cfp_query
from .instance_io import (
    ParseError,
    assign_scenario,
    generate_rank_queries,
    generate_synthetic,
    parse_instance,
    parse_queries,
    render_instance,
    render_queries,
    station_function,
)
from .model import ModelError
from .oracle import ValidationReport, report_to_json, validate_instance
from .overlay import DEFAULT_CORE_DEGREE, Overlay, ch_preprocess
from .potentials import OmegaPotential, PiPotential, PiSearch, compute_omega_tables, plain_backward_adjacency

QUERY_SCHEMA = "evroute.query.v1"
RANK_SCHEMA = "evroute.rank.v1"


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _load_instance(path: str):
    return parse_instance(_read(path))


def _plain_potential(graph, target, name: str):
    if name == "zero":
        from .potentials import ZeroPotential

        return ZeroPotential()
    if name == "omega":
        def backward(v):
            for idx in graph.rev[v]:
                tail, _, d, c = graph.arcs[idx]
                yield tail, d, c

        tables = compute_omega_tables(
            graph.n, backward, target, graph.max_charging_slope()
        )
        return OmegaPotential(tables)
    search = PiSearch(graph.n, plain_backward_adjacency(graph), target, graph.stations)
    return PiPotential(search, on_demand=(name == "pi-demand"))


def cmd_generate(args) -> int:
    graph = generate_synthetic(
        n=args.n,
        avg_degree=args.avg_degree,
        station_fraction=args.station_fraction,
        elevation_roughness=args.roughness,
        seed=args.seed,
        capacity=args.capacity,
        scenario=args.scenario,
    )
    text = render_instance(graph)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    if args.query_out:
        ranks = [2 ** k for k in range(args.max_rank_log + 1)]
        queries = generate_rank_queries(graph, args.seed, ranks, per_rank=args.per_rank)
        with open(args.query_out, "w", encoding="utf-8") as fh:
            fh.write(render_queries([(s, t, b) for _, s, t, b in queries]))
    print(
        f"generated n={graph.n} m={len(graph.arcs)} stations={len(graph.stations)}"
        f" -> {args.out}"
    )
    return 0


def cmd_preprocess(args) -> int:
    graph = _load_instance(args.instance)
    started = time.perf_counter()
    overlay = ch_preprocess(graph, core_degree=args.core_degree, aggressive=args.aggressive)
    elapsed = time.perf_counter() - started
    overlay.save(args.out)
    if args.text_dump:
        with open(args.text_dump, "w", encoding="utf-8") as fh:
            fh.write(overlay.text_dump())
    core = len(overlay.core_vertices)
    print(
        f"core {core}/{overlay.n} vertices ({100.0 * core / overlay.n:.2f}%),"
        f" {overlay.shortcut_count()} shortcuts, {elapsed:.2f}s"
    )
    return 0


def cmd_query(args) -> int:
    graph = _load_instance(args.instance)
    queries = parse_queries(_read(args.queries))
    overlay = Overlay.load(args.overlay) if args.overlay else None
    results = []
    for s, t, b in queries:
        if overlay is not None:
            plan = QueryPlan(s, t, b, mode=args.mode, potential=args.potential)
            results.append(charge_query(graph, overlay, plan))
        else:
            if args.mode != "exact":
                raise ValueError("heuristic modes need --overlay")
            potential = _plain_potential(graph, t, args.potential)
            results.append(cfp_query(graph, s, t, b, potential=potential))
    lines = [json.dumps(r.to_json_dict(), sort_keys=True) for r in results]
    out = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    feasible = sum(1 for r in results if r.feasible)
    print(f"{feasible}/{len(results)} feasible", file=sys.stderr)
    return 0 if feasible else 1


def cmd_rank(args) -> int:
    graph = _load_instance(args.instance)
    overlay = Overlay.load(args.overlay) if args.overlay else None
    ranks = [2 ** k for k in range(args.max_rank_log + 1)]
    queries = generate_rank_queries(
        graph, args.seed, ranks, per_rank=args.per_rank,
        init_soc=args.soc if args.soc >= 0 else None,
    )
    rows = []
    by_rank: dict[int, list] = {}
    for rank, s, t, b in queries:
        started = time.perf_counter()
        if overlay is not None:
            plan = QueryPlan(s, t, b, mode=args.mode, potential=args.potential)
            res = charge_query(graph, overlay, plan)
        else:
            res = cfp_query(graph, s, t, b)
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        by_rank.setdefault(rank, []).append((elapsed_ms, res))
    for rank in sorted(by_rank):
        entries = by_rank[rank]
        feasible = [r for _, r in entries if r.feasible]
        rows.append(
            {
                "rank": rank,
                "queries": len(entries),
                "median_runtime_ms": round(statistics.median(e for e, _ in entries), 3),
                "mean_drive_time_s": round(
                    statistics.fmean(r.drive_time for r in feasible), 6
                ) if feasible else "",
                "mean_charge_time_s": round(
                    statistics.fmean(r.charge_time for r in feasible), 6
                ) if feasible else "",
                "median_trip_time_s": round(
                    statistics.median(r.trip_time for r in feasible), 6
                ) if feasible else "",
                "median_labels_settled": statistics.median(
                    r.labels_settled for _, r in entries
                ),
            }
        )
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema: {RANK_SCHEMA}\n")
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rank rows -> {args.out}")
    return 0


def cmd_validate(args) -> int:
    paths = []
    if os.path.isdir(args.instances):
        for name in sorted(os.listdir(args.instances)):
            if name.endswith(".ev"):
                paths.append(os.path.join(args.instances, name))
    else:
        paths = [args.instances]
    if not paths:
        print("no instances found", file=sys.stderr)
        return 3
    report = ValidationReport()
    for path in paths:
        graph = _load_instance(path)
        qpath = path[: -len(".ev")] + ".queries" if path.endswith(".ev") else None
        if qpath and os.path.exists(qpath):
            queries = parse_queries(_read(qpath))
        else:
            queries = [(0, graph.n - 1, graph.capacity)]
        delta = args.delta if args.delta > 0 else graph.capacity / 400.0
        validate_instance(graph, queries, delta, report, instance_label=path)
    out = report_to_json(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out + "\n")
    print(report.summary())
    return 0 if report.ok else 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evroute", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--avg-degree", type=float, default=4.0)
    g.add_argument("--station-fraction", type=float, default=0.01)
    g.add_argument("--roughness", type=float, default=300.0)
    g.add_argument("--capacity", type=float, default=16000.0)
    g.add_argument("--scenario", choices=("bss", "mixed", "realistic"), default="realistic")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--out", required=True)
    g.add_argument("--query-out", default="")
    g.add_argument("--max-rank-log", type=int, default=10)
    g.add_argument("--per-rank", type=int, default=10)
    g.set_defaults(func=cmd_generate)

    pp = sub.add_parser("preprocess", help="build a CH overlay")
    pp.add_argument("--instance", required=True)
    pp.add_argument("--core-degree", type=float, default=DEFAULT_CORE_DEGREE)
    pp.add_argument("--aggressive", action="store_true")
    pp.add_argument("--out", required=True)
    pp.add_argument("--text-dump", default="")
    pp.set_defaults(func=cmd_preprocess)

    q = sub.add_parser("query", help="answer queries from a file")
    q.add_argument("--instance", required=True)
    q.add_argument("--overlay", default="")
    q.add_argument("--queries", required=True)
    q.add_argument("--mode", choices=("exact", "heu-pi", "heu-omega", "heu-omega-aggr"),
                   default="exact")
    q.add_argument("--potential", choices=("zero", "omega", "pi", "pi-demand"),
                   default="pi")
    q.add_argument("--out", default="")
    q.set_defaults(func=cmd_query)

    r = sub.add_parser("rank", help="Dijkstra-rank sweep, CSV output")
    r.add_argument("--instance", required=True)
    r.add_argument("--overlay", default="")
    r.add_argument("--mode", choices=("exact", "heu-pi", "heu-omega", "heu-omega-aggr"),
                   default="exact")
    r.add_argument("--potential", choices=("zero", "omega", "pi", "pi-demand"),
                   default="pi")
    r.add_argument("--seed", type=int, default=1)
    r.add_argument("--max-rank-log", type=int, required=True)
    r.add_argument("--per-rank", type=int, default=100)
    r.add_argument("--soc", type=float, default=-1.0)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_rank)

    v = sub.add_parser("validate", help="cross-check against the grid oracle")
    v.add_argument("--instances", required=True, help="instance file or directory of .ev files")
    v.add_argument("--delta", type=float, default=-1.0)
    v.add_argument("--out", default="")
    v.set_defaults(func=cmd_validate)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ParseError, ModelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
