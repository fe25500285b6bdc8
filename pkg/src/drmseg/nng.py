"""Nearest neighbor graph (NNG) over live RAG nodes.

Every node with a candidate edge points at its nearest non-blacklisted
neighbour. Mutual pairs (2-cycles) are the merge candidates. After a merge,
new cycles can only appear within the second-order neighbourhood of the
survivor, so repairs stay local.
"""

from __future__ import annotations

import heapq

from .graphcore import Rag

__all__ = ["Nng", "build_nng", "min_cycle", "update_after_merge", "update_after_blacklist"]


class Nng:
    def __init__(self):
        self.nn: dict[int, tuple[int, float]] = {}
        self.cycles: dict[tuple[int, int], float] = {}
        self._heap: list[tuple[float, int, int]] = []
        self.rescanned = 0
        self.last_rescanned = 0
        self.edges_examined = 0

    def __eq__(self, other):
        if not isinstance(other, Nng):
            return NotImplemented
        return self.nn == other.nn and self.cycles == other.cycles

    def __repr__(self):
        return f"Nng(nodes={len(self.nn)}, cycles={sorted(self.cycles)})"

    def _add_cycle(self, a: int, b: int, w: float) -> None:
        key = (a, b) if a < b else (b, a)
        if self.cycles.get(key) != w:
            self.cycles[key] = w
            heapq.heappush(self._heap, (w, key[0], key[1]))

    def _drop_cycle_of(self, v: int) -> None:
        entry = self.nn.get(v)
        if entry is None:
            return
        u = entry[0]
        key = (v, u) if v < u else (u, v)
        self.cycles.pop(key, None)

    def _rescan(self, rag: Rag, nodes) -> None:
        before = rag.edges_examined
        nn = self.nn
        for v in nodes:
            self._drop_cycle_of(v)
            best = rag.min_neighbor(v)
            if best is None:
                nn.pop(v, None)
            else:
                nn[v] = best
        for v in nodes:
            entry = nn.get(v)
            if entry is None:
                continue
            u, w = entry
            back = nn.get(u)
            if back is not None and back[0] == v:
                self._add_cycle(v, u, w)
        self.last_rescanned = len(nodes)
        self.rescanned += len(nodes)
        self.edges_examined += rag.edges_examined - before


def build_nng(rag: Rag) -> Nng:
    g = Nng()
    g._rescan(rag, sorted(rag.nodes))
    return g


def min_cycle(nng: Nng):
    """Cheapest cycle as ``((a, b), w)``, ties by the smaller pair; ``None`` if empty."""
    heap = nng._heap
    cycles = nng.cycles
    while heap:
        w, a, b = heap[0]
        nng.edges_examined += 1
        if cycles.get((a, b)) == w:
            return (a, b), w
        heapq.heappop(heap)
    return None


def update_after_merge(nng: Nng, rag: Rag, survivor: int, absorbed: int | None = None) -> None:
    """Repair ``nng`` after ``rag`` merged a region into ``survivor``.

    Only edges touching the survivor changed, so only the survivor and its
    neighbours can change nearest neighbour: the survivor is rescanned, a
    neighbour whose old target was one of the merged pair is rescanned, and
    every other neighbour just compares its current target with the new edge
    to the survivor. Cycles are then repaired among the changed nodes and
    their targets, which lie within the survivor's second-order
    neighbourhood. ``absorbed`` names the vanished id; when omitted, dead
    entries are found by scanning the map.
    """
    nn = nng.nn
    dead = [absorbed] if absorbed is not None else [v for v in nn if v not in rag.adj]
    merged = {survivor, *dead}
    for x in dead:
        nng._drop_cycle_of(x)
        nn.pop(x, None)

    before = rag.edges_examined
    black_s = rag._black_of.get(survivor)
    rescan = [survivor]
    changed: dict[int, tuple[int, float] | None] = {}
    for u, w in rag.adj[survivor].items():
        old = nn.get(u)
        if old is None or old[0] in merged:
            rescan.append(u)
            continue
        rag.edges_examined += 1
        if black_s and u in black_s:
            continue
        ow = old[1]
        if w < ow or (w == ow and survivor < old[0]):
            changed[u] = old
            nng._drop_cycle_of(u)
            nn[u] = (survivor, w)
    for v in rescan:
        changed[v] = nn.get(v)
        nng._drop_cycle_of(v)
        best = rag.min_neighbor(v)
        if best is None:
            nn.pop(v, None)
        else:
            nn[v] = best
    for v in changed:
        entry = nn.get(v)
        if entry is None:
            continue
        u, w = entry
        back = nn.get(u)
        if back is not None and back[0] == v:
            nng._add_cycle(v, u, w)
    touched = len(rag.adj[survivor]) + 1
    nng.last_rescanned = touched
    nng.rescanned += touched
    nng.edges_examined += rag.edges_examined - before


def update_after_blacklist(nng: Nng, rag: Rag, a: int, b: int) -> None:
    nng._rescan(rag, sorted((a, b)))
