"""Partial bicriteria contraction hierarchy over (drive time, SoC profile).

Non-station vertices are contracted in priority order (64*ED + DN + CQ,
lazily re-evaluated) until the average core degree exceeds a threshold.
Shortcuts carry drive time and the linked SoC profile of the replaced
path; nondominated parallel shortcuts are kept as multi-arcs, except in
aggressive mode where only the omega-optimal arc per vertex pair survives.

Witness searches are bicriteria with pairwise dominance only, a per-vertex
label cap with closest-pair eviction, and a hop limit. All limits only ever
add shortcuts, never drop needed ones.
"""

from __future__ import annotations

import heapq
import itertools
import struct
from dataclasses import dataclass
from typing import Optional

from .model import EPS, Graph, Profile, link_profiles, profile_dominates

CORE_RANK = 0xFFFFFFFF

# arc tuple layout: (tail, head, drive, in_min, cost, out_max, left, right, base)
# left/right are arc-table indices of the two replaced arcs, -1 for base arcs.

DEFAULT_CORE_DEGREE = 32.0
WITNESS_LABEL_CAP = 10
WITNESS_HOP_LIMIT = 20
WITNESS_POP_CAP = 4000


@dataclass
class Overlay:
    n: int
    capacity: float
    rank: list[int]
    arcs: list[tuple]
    removed: list[bool]
    station_ids: tuple[int, ...]
    aggressive: bool
    core_degree: float
    perm: list[int]

    def __post_init__(self) -> None:
        self._build_adjacency()
        self._unpack_cache: dict[int, tuple[int, ...]] = {}

    def is_core(self, v: int) -> bool:
        return self.rank[v] == CORE_RANK

    @property
    def core_vertices(self) -> list[int]:
        return [v for v in range(self.n) if self.rank[v] == CORE_RANK]

    def _build_adjacency(self) -> None:
        self.out_up: list[list[int]] = [[] for _ in range(self.n)]
        self.in_up: list[list[int]] = [[] for _ in range(self.n)]
        self.core_out: list[list[int]] = [[] for _ in range(self.n)]
        rank = self.rank
        for idx, arc in enumerate(self.arcs):
            if self.removed[idx]:
                continue
            tail, head = arc[0], arc[1]
            rt, rh = rank[tail], rank[head]
            if rt == CORE_RANK and rh == CORE_RANK:
                self.core_out[tail].append(idx)
            elif rt < rh:
                self.out_up[tail].append(idx)
            else:
                self.in_up[head].append(idx)

    def unpack(self, idx: int) -> tuple[int, ...]:
        """Base-arc indices realized by a table arc, in path order."""
        cached = self._unpack_cache.get(idx)
        if cached is not None:
            return cached
        arc = self.arcs[idx]
        if arc[6] < 0:
            result = (arc[8],)
        else:
            result = self.unpack(arc[6]) + self.unpack(arc[7])
        self._unpack_cache[idx] = result
        return result

    def shortcut_count(self) -> int:
        return sum(
            1 for i, a in enumerate(self.arcs) if a[6] >= 0 and not self.removed[i]
        )

    # -- serialization ------------------------------------------------------

    MAGIC = b"EVOV"
    VERSION = 1

    def to_bytes(self) -> bytes:
        out = [self.MAGIC, struct.pack("<IIQdBd", self.VERSION, self.n, len(self.arcs),
                                       self.capacity, 1 if self.aggressive else 0,
                                       self.core_degree)]
        out.append(struct.pack(f"<{self.n}I", *self.rank))
        out.append(struct.pack(f"<{self.n}I", *self.perm))
        out.append(struct.pack("<I", len(self.station_ids)))
        if self.station_ids:
            out.append(struct.pack(f"<{len(self.station_ids)}I", *self.station_ids))
        for idx, (t, h, d, im, co, om, le, ri, ba) in enumerate(self.arcs):
            out.append(
                struct.pack(
                    "<IIddddqqqB", t, h, d, im, co, om, le, ri, ba,
                    1 if self.removed[idx] else 0,
                )
            )
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Overlay":
        if data[:4] != cls.MAGIC:
            raise ValueError("not an overlay file")
        off = 4
        version, n, n_arcs, capacity, aggressive, core_degree = struct.unpack_from(
            "<IIQdBd", data, off
        )
        if version != cls.VERSION:
            raise ValueError(f"unsupported overlay version {version}")
        off += struct.calcsize("<IIQdBd")
        rank = list(struct.unpack_from(f"<{n}I", data, off))
        off += 4 * n
        perm = list(struct.unpack_from(f"<{n}I", data, off))
        off += 4 * n
        (n_st,) = struct.unpack_from("<I", data, off)
        off += 4
        station_ids = struct.unpack_from(f"<{n_st}I", data, off) if n_st else ()
        off += 4 * n_st
        arcs = []
        removed = []
        rec = struct.Struct("<IIddddqqqB")
        for _ in range(n_arcs):
            t, h, d, im, co, om, le, ri, ba, rm = rec.unpack_from(data, off)
            off += rec.size
            arcs.append((t, h, d, im, co, om, le, ri, ba))
            removed.append(bool(rm))
        return cls(
            n=n, capacity=capacity, rank=rank, arcs=arcs, removed=removed,
            station_ids=tuple(station_ids), aggressive=bool(aggressive),
            core_degree=core_degree, perm=perm,
        )

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path: str) -> "Overlay":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def text_dump(self) -> str:
        lines = [
            f"overlay n={self.n} arcs={len(self.arcs)} aggressive={int(self.aggressive)}"
            f" core_degree={self.core_degree:.6f} capacity={self.capacity:.6f}"
        ]
        for v in range(self.n):
            lines.append(f"rank {v} {self.rank[v]}")
        for v in range(self.n):
            lines.append(f"perm {v} {self.perm[v]}")
        for i, (t, h, d, im, co, om, le, ri, ba) in enumerate(self.arcs):
            lines.append(
                f"arc {i} {t} {h} {d:.6f} {im:.6f} {co:.6f} {om:.6f}"
                f" {le} {ri} {ba} {int(self.removed[i])}"
            )
        return "\n".join(lines) + "\n"


class _Contractor:
    def __init__(
        self,
        graph: Graph,
        core_degree: float,
        aggressive: bool,
        label_cap: int,
        hop_limit: int,
    ) -> None:
        self.g = graph
        self.n = graph.n
        self.capacity = graph.capacity
        self.core_degree = core_degree
        self.aggressive = aggressive
        self.label_cap = label_cap
        self.hop_limit = hop_limit
        self.cf_max = graph.max_charging_slope()

        self.arcs: list[tuple] = []
        self.removed: list[bool] = []
        self.out_adj: list[list[int]] = [[] for _ in range(self.n)]
        self.in_adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, (t, h, d, c) in enumerate(graph.arcs):
            im, co, om = graph.profile(i)
            idx = len(self.arcs)
            self.arcs.append((t, h, d, im, co, om, -1, -1, i))
            self.removed.append(False)
            self.out_adj[t].append(idx)
            self.in_adj[h].append(idx)

        self.contracted = [False] * self.n
        self.rank = [CORE_RANK] * self.n
        self.dn = [0] * self.n
        self.cq = [0] * self.n
        self.dirty = [True] * self.n
        self.sim_cache: dict[int, list[tuple]] = {}
        self.m_live = len(self.arcs)
        self.n_live = self.n

    # -- witness search -----------------------------------------------------

    def _witness_finds_dominator(self, u: int, w: int, cand_d: float,
                                 cand_p: Profile, skip: int) -> bool:
        """True iff some u->w path (avoiding skip) dominates the candidate."""
        cap = self.label_cap
        counter = itertools.count()
        start = (0.0, (0.0, 0.0, self.capacity))
        labels: dict[int, list[tuple[float, Profile]]] = {u: [start]}
        heap = [(0.0, 0.0, 0.0, -self.capacity, next(counter), u, start, 0)]
        pops = 0
        while heap:
            d, _, _, _, _, v, lab, hops = heapq.heappop(heap)
            if d > cand_d + EPS:
                return False
            pops += 1
            if pops > WITNESS_POP_CAP:
                return False
            if lab not in labels.get(v, ()):  # evicted
                continue
            if v == w and profile_dominates(lab[1], cand_p):
                return True
            if hops >= self.hop_limit:
                continue
            for idx in self.out_adj[v]:
                if self.removed[idx]:
                    continue
                arc = self.arcs[idx]
                head = arc[1]
                if head == skip or self.contracted[head]:
                    continue
                nd = d + arc[2]
                if nd > cand_d + EPS:
                    continue
                np = link_profiles(lab[1], (arc[3], arc[4], arc[5]))
                if np is None:
                    continue
                new = (nd, np)
                bucket = labels.setdefault(head, [])
                dominated = False
                for (od, op) in bucket:
                    if od <= nd + EPS and profile_dominates(op, np):
                        dominated = True
                        break
                if dominated:
                    continue
                bucket[:] = [
                    (od, op)
                    for (od, op) in bucket
                    if not (nd <= od + EPS and profile_dominates(np, op))
                ]
                bucket.append(new)
                if len(bucket) > cap:
                    self._evict(bucket)
                if new in bucket:
                    heapq.heappush(
                        heap,
                        (nd, np[0], np[1], -np[2], next(counter), head, new, hops + 1),
                    )
        return False

    @staticmethod
    def _evict(bucket: list[tuple[float, Profile]]) -> None:
        """Drop one label: from the closest pair (by drive time), the one
        whose other-side gap is smaller, keeping remaining gaps large."""
        bucket.sort(key=lambda lp: lp[0])
        best_i = 0
        best_gap = float("inf")
        for i in range(len(bucket) - 1):
            gap = bucket[i + 1][0] - bucket[i][0]
            if gap < best_gap - EPS:
                best_gap = gap
                best_i = i
        left_gap = bucket[best_i][0] - bucket[best_i - 1][0] if best_i > 0 else float("inf")
        right_gap = (
            bucket[best_i + 2][0] - bucket[best_i + 1][0]
            if best_i + 2 < len(bucket)
            else float("inf")
        )
        drop = best_i if left_gap < right_gap else best_i + 1
        del bucket[drop]

    # -- contraction --------------------------------------------------------

    def simulate(self, v: int) -> list[tuple]:
        """Surviving shortcut candidates if v were contracted now."""
        ins = [i for i in self.in_adj[v]
               if not self.removed[i]
               and not self.contracted[self.arcs[i][0]] and self.arcs[i][0] != v]
        outs = [i for i in self.out_adj[v]
                if not self.removed[i]
                and not self.contracted[self.arcs[i][1]] and self.arcs[i][1] != v]
        cands: list[tuple] = []
        for ai in ins:
            a = self.arcs[ai]
            for bi in outs:
                b = self.arcs[bi]
                if a[0] == b[1]:
                    continue
                p = link_profiles((a[3], a[4], a[5]), (b[3], b[4], b[5]))
                if p is None:
                    continue
                cands.append((a[0], b[1], a[2] + b[2], p[0], p[1], p[2], ai, bi))
        # pairwise dedupe among parallel candidates (keep the earlier one)
        survivors: list[tuple] = []
        for c in cands:
            dominated = False
            for o in survivors:
                if (o[0], o[1]) == (c[0], c[1]) and o[2] <= c[2] + EPS and \
                        profile_dominates((o[3], o[4], o[5]), (c[3], c[4], c[5])):
                    dominated = True
                    break
            if dominated:
                continue
            survivors = [
                o for o in survivors
                if not ((o[0], o[1]) == (c[0], c[1]) and c[2] <= o[2] + EPS and
                        profile_dominates((c[3], c[4], c[5]), (o[3], o[4], o[5])))
            ]
            survivors.append(c)
        # witness searches
        kept = [
            c for c in survivors
            if not self._witness_finds_dominator(c[0], c[1], c[2], (c[3], c[4], c[5]), v)
        ]
        return kept

    def edge_difference(self, v: int, survivors: list[tuple]) -> int:
        ins = sum(
            1 for i in self.in_adj[v]
            if not self.removed[i] and not self.contracted[self.arcs[i][0]]
        )
        outs = sum(
            1 for i in self.out_adj[v]
            if not self.removed[i] and not self.contracted[self.arcs[i][1]]
        )
        return len(survivors) - (ins + outs)

    def priority(self, v: int) -> tuple[int, list[tuple]]:
        if self.dirty[v] or v not in self.sim_cache:
            self.sim_cache[v] = self.simulate(v)
            self.dirty[v] = False
        survivors = self.sim_cache[v]
        prio = 64 * self.edge_difference(v, survivors) + self.dn[v] + self.cq[v]
        return prio, survivors

    def _omega(self, arc: tuple) -> float:
        scaled = 0.0 if self.cf_max == float("inf") else arc[4] / self.cf_max
        return arc[2] + scaled

    def contract(self, v: int, survivors: list[tuple], order: int) -> None:
        for (u, w, d, im, co, om, left, right) in survivors:
            idx = len(self.arcs)
            self.arcs.append((u, w, d, im, co, om, left, right, -1))
            self.removed.append(False)
            self.out_adj[u].append(idx)
            self.in_adj[w].append(idx)
            self.m_live += 1
            if self.aggressive:
                self._collapse_pair(u, w)
        # drop v's incident arcs from the live graph
        for i in self.in_adj[v]:
            if not self.removed[i] and not self.contracted[self.arcs[i][0]]:
                self.m_live -= 1
        for i in self.out_adj[v]:
            if self.arcs[i][1] == v:
                continue  # self loops already counted once above
            if not self.removed[i] and not self.contracted[self.arcs[i][1]]:
                self.m_live -= 1
        self.contracted[v] = True
        self.rank[v] = order
        self.n_live -= 1
        neighbors = set()
        for i in self.in_adj[v]:
            neighbors.add(self.arcs[i][0])
        for i in self.out_adj[v]:
            neighbors.add(self.arcs[i][1])
        for u in sorted(neighbors):
            if u == v or self.contracted[u]:
                continue
            self.dn[u] += 1
            self.cq[u] = max(self.cq[u], self.cq[v] + 1)
            self.dirty[u] = True

    def _collapse_pair(self, u: int, w: int) -> None:
        """Aggressive mode: keep only the omega-best live u->w arc."""
        live = [
            i for i in self.out_adj[u]
            if self.arcs[i][1] == w and not self.removed[i]
        ]
        if len(live) <= 1:
            return
        best = min(live, key=lambda i: (self._omega(self.arcs[i]), i))
        for i in live:
            if i != best:
                self.removed[i] = True
                self.m_live -= 1

    def run(self) -> Overlay:
        g = self.g
        heap = []
        for v in range(self.n):
            if v in g.stations:
                continue
            prio, _ = self.priority(v)
            heap.append((prio, v))
        heapq.heapify(heap)
        order = 0
        while heap:
            if self.n_live > 0 and self.m_live / self.n_live > self.core_degree:
                break
            prio, v = heapq.heappop(heap)
            if self.contracted[v]:
                continue
            new_prio, survivors = self.priority(v)
            if new_prio != prio:
                heapq.heappush(heap, (new_prio, v))
                continue
            self.contract(v, survivors, order)
            order += 1

        core = [v for v in range(self.n) if not self.contracted[v]]
        perm = [0] * self.n
        new_id = 0
        for v in core:
            perm[new_id] = v
            new_id += 1
        for v in sorted(range(self.n), key=lambda x: self.rank[x]):
            if self.contracted[v]:
                perm[new_id] = v
                new_id += 1
        return Overlay(
            n=self.n,
            capacity=self.capacity,
            rank=self.rank,
            arcs=self.arcs,
            removed=self.removed,
            station_ids=tuple(sorted(g.stations)),
            aggressive=self.aggressive,
            core_degree=self.core_degree,
            perm=perm,
        )


def ch_preprocess(
    graph: Graph,
    core_degree: float = DEFAULT_CORE_DEGREE,
    aggressive: bool = False,
    label_cap: int = WITNESS_LABEL_CAP,
    hop_limit: int = WITNESS_HOP_LIMIT,
) -> Overlay:
    """Contract the graph down to a core of the requested average degree."""
    return _Contractor(graph, core_degree, aggressive, label_cap, hop_limit).run()


def ed_dn_cq_priority(graph: Graph, v: int,
                      core_degree: float = DEFAULT_CORE_DEGREE) -> tuple[int, int, int, int]:
    """ED/DN/CQ terms and the combined priority of v on the fresh graph."""
    c = _Contractor(graph, core_degree, False, WITNESS_LABEL_CAP, WITNESS_HOP_LIMIT)
    survivors = c.simulate(v)
    ed = c.edge_difference(v, survivors)
    return ed, c.dn[v], c.cq[v], 64 * ed + c.dn[v] + c.cq[v]


def witness_search(
    graph_or_contractor,
    u: int,
    w: int,
    cand_drive: float,
    cand_profile: Profile,
    skip: int,
) -> bool:
    """Public wrapper: does the candidate shortcut survive (True = needed)?"""
    if isinstance(graph_or_contractor, Graph):
        c = _Contractor(
            graph_or_contractor, DEFAULT_CORE_DEGREE, False,
            WITNESS_LABEL_CAP, WITNESS_HOP_LIMIT,
        )
    else:
        c = graph_or_contractor
    return not c._witness_finds_dominator(u, w, cand_drive, cand_profile, skip)
