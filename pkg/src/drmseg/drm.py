"""Dynamic region merging engines, merge trace and post-run audits.

Three engines share one contract, ``run_*(img, init_lm, cfg) -> (LabelMap, MergeTrace)``:

``run_baseline_level``
    Level sweeps: every mutual nearest pair found by a full scan is tested,
    consistent pairs merge together, inconsistent ones are blacklisted.
``run_baseline_globalmin``
    One candidate per iteration, the globally cheapest non-blacklisted edge,
    found by scanning every edge.
``run_accelerated``
    Same schedule as ``run_baseline_globalmin`` but candidates come from the
    cycles of an incrementally maintained nearest neighbor graph.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .graphcore import Rag, build_rag
from .nng import Nng, build_nng, min_cycle, update_after_blacklist, update_after_merge
from .pixelcore import LabelMap, RgbImage
from .sprt import RegionPixels, SprtConfig, TestResult, consistency_test

__all__ = [
    "AuditError",
    "MaxIterationsError",
    "DrmConfig",
    "Event",
    "MergeTrace",
    "merge_predicate",
    "run_baseline_level",
    "run_baseline_globalmin",
    "run_accelerated",
    "run",
    "objective_audit",
    "audit_termination",
    "replay_labels",
]

AUDIT_TOL = 1e-9


class AuditError(AssertionError):
    pass


class MaxIterationsError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class DrmConfig:
    sprt: SprtConfig = field(default_factory=SprtConfig)
    policy: str = "globalMin"
    engine: str = "nngAccelerated"
    seed: int = 0
    max_iterations: int | None = None

    def __post_init__(self):
        if self.policy not in ("level", "globalMin"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.engine not in ("baseline", "nngAccelerated"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.engine == "nngAccelerated" and self.policy != "globalMin":
            raise ValueError("the NNG engine only supports the globalMin policy")


@dataclass(frozen=True)
class Event:
    """One consistency test on a candidate pair and what the engine did with it."""

    iteration: int
    a: int
    b: int
    weight: float
    merged: bool
    delta: float
    trials: int


@dataclass
class MergeTrace:
    """Ordered test/merge events plus the merge tree behind label paths.

    ``initial_rag`` is a snapshot taken before the first event, so the trace
    alone is enough to replay and audit a run.
    """

    initial_rag: Rag
    events: list[Event] = field(default_factory=list)
    counters: list[dict] = field(default_factory=list)
    capped_tests: int = 0
    setup_edges_examined: int = 0
    timings_ms: dict = field(default_factory=dict)
    final_rag: Rag | None = None
    final_nng: Nng | None = None
    # merge tree: leaves are initial regions, internal nodes are merges
    _tree_parent: list[int] = field(default_factory=list, repr=False)
    _tree_label: list[int] = field(default_factory=list, repr=False)
    _tree_cost: list[float] = field(default_factory=list, repr=False)
    _node_of: dict[int, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._tree_parent:
            ids = self.initial_rag.initial_ids
            size = max(ids) + 1 if ids else 0
            self._tree_parent = [-1] * size
            self._tree_label = list(range(size))
            self._tree_cost = [0.0] * size
            self._node_of = {v: v for v in ids}

    @property
    def steps(self) -> list[Event]:
        return [e for e in self.events if e.merged]

    @property
    def boundary_events(self) -> list[Event]:
        return [e for e in self.events if not e.merged]

    @property
    def merge_count(self) -> int:
        return sum(e.merged for e in self.events)

    @property
    def blacklist_count(self) -> int:
        return sum(not e.merged for e in self.events)

    def record(self, iteration: int, a: int, b: int, weight: float, res: TestResult) -> None:
        self.events.append(Event(iteration, a, b, weight, res.consistent, res.delta, res.trials))
        if res.capped:
            self.capped_tests += 1
        if res.consistent:
            node = len(self._tree_parent)
            self._tree_parent.append(-1)
            self._tree_label.append(min(a, b))
            self._tree_cost.append(weight)
            self._tree_parent[self._node_of[a]] = node
            self._tree_parent[self._node_of[b]] = node
            self._node_of[min(a, b)] = node
            del self._node_of[max(a, b)]

    def label_path(self, i: int) -> tuple[list[int], list[float]]:
        """Live ids region ``i`` passed through and the cost of each transition."""
        labels, costs = [i], []
        node = self._tree_parent[i]
        while node >= 0:
            labels.append(self._tree_label[node])
            costs.append(self._tree_cost[node])
            node = self._tree_parent[node]
        return labels, costs

    def path_costs(self) -> dict[int, float]:
        """``F_i``: sum of transition costs along each initial region's path."""
        return _path_costs(self._tree_parent, self._tree_cost, self.initial_rag.initial_ids)


def _path_costs(parent, cost, leaves) -> dict[int, float]:
    acc = [0.0] * len(parent)
    for node in range(len(parent) - 1, -1, -1):
        p = parent[node]
        acc[node] = cost[node] + (acc[p] if p >= 0 else 0.0)
    out = {}
    for i in leaves:
        p = parent[i]
        out[i] = acc[p] if p >= 0 else 0.0
    return out


def merge_predicate(rag: Rag, nng: Nng | None, a: int, b: int, decision: bool) -> bool:
    """Mutual nearest neighbours and a consistent test decision."""
    if b not in rag.adj.get(a, ()):
        raise ValueError(f"regions {a} and {b} are not adjacent")
    if nng is not None:
        na, nb = nng.nn.get(a), nng.nn.get(b)
    else:
        na, nb = rag.min_neighbor(a), rag.min_neighbor(b)
    mutual = na is not None and nb is not None and na[0] == b and nb[0] == a
    return mutual and bool(decision)


# -- engines ---------------------------------------------------------------


class _Job:
    def __init__(self, img: RgbImage, init_lm: LabelMap, cfg: DrmConfig):
        t0 = time.perf_counter()
        init_lm.check()
        self.init_lm = init_lm
        self.cfg = cfg
        self.rag = build_rag(img, init_lm)
        self.pixels = None if cfg.sprt.deterministic else RegionPixels(img.data, init_lm.labels)
        self.rng = np.random.default_rng(cfg.seed)
        self.trace = MergeTrace(self.rag.copy())
        self.trace.counters = []
        n = init_lm.num_regions
        self.max_iterations = cfg.max_iterations if cfg.max_iterations is not None else max(10, 10 * n)
        self.merge_start = time.perf_counter()
        self.trace.timings_ms["rag_build"] = (self.merge_start - t0) * 1e3

    def check_budget(self, iteration: int) -> None:
        if iteration > self.max_iterations:
            raise MaxIterationsError(
                f"no convergence after {self.max_iterations} iterations", self.trace
            )

    def test(self, a: int, b: int) -> TestResult:
        return consistency_test(self.pixels, self.rag, a, b, self.rng, self.cfg.sprt)

    def apply(self, iteration: int, a: int, b: int, w: float, res: TestResult):
        self.trace.record(iteration, a, b, w, res)
        if res.consistent:
            s = self.rag.merge_regions(a, b)
            x = b if s == a else a
            if self.pixels is not None:
                self.pixels.merge(s, x)
            return s, x
        self.rag.mark_boundary(a, b)
        return None

    def finish(self, nng: Nng | None = None):
        self.trace.timings_ms["merge"] = (time.perf_counter() - self.merge_start) * 1e3
        self.trace.final_rag = self.rag
        self.trace.final_nng = nng
        return self.rag.label_map(self.init_lm), self.trace


def run_baseline_level(img: RgbImage, init_lm: LabelMap, cfg: DrmConfig):
    job = _Job(img, init_lm, cfg)
    rag = job.rag
    it = 0
    while True:
        it += 1
        job.check_budget(it)
        before = rag.edges_examined
        nn = {v: rag.min_neighbor(v) for v in sorted(rag.nodes)}
        pairs = []
        for a, entry in nn.items():
            if entry is None:
                continue
            b, w = entry
            back = nn.get(b)
            if a < b and back is not None and back[0] == a:
                pairs.append((a, b, w))
        job.trace.counters.append(
            {
                "iteration": it,
                "live_nodes": rag.num_nodes,
                "rag_edges": rag.num_edges,
                "nng_cycles": len(pairs),
                "rescanned_nodes": rag.num_nodes,
                "edges_examined": rag.edges_examined - before,
            }
        )
        if not pairs:
            break
        # test every pair against the sweep-start state, then apply
        results = [(a, b, w, job.test(a, b)) for a, b, w in pairs]
        for a, b, w, res in results:
            job.apply(it, a, b, w, res)
    return job.finish()


def run_baseline_globalmin(img: RgbImage, init_lm: LabelMap, cfg: DrmConfig):
    job = _Job(img, init_lm, cfg)
    rag = job.rag
    it = 0
    while True:
        before = rag.edges_examined
        cand = rag.global_min_edge()
        if cand is None:
            break
        it += 1
        job.check_budget(it)
        (a, b), w = cand
        job.trace.counters.append(
            {
                "iteration": it,
                "live_nodes": rag.num_nodes,
                "rag_edges": rag.num_edges,
                "nng_cycles": None,
                "rescanned_nodes": 0,
                "edges_examined": rag.edges_examined - before,
            }
        )
        job.apply(it, a, b, w, job.test(a, b))
    return job.finish()


def run_accelerated(img: RgbImage, init_lm: LabelMap, cfg: DrmConfig):
    job = _Job(img, init_lm, cfg)
    rag = job.rag
    nng = build_nng(rag)
    job.trace.setup_edges_examined = nng.edges_examined
    it = 0
    while True:
        before = nng.edges_examined
        cand = min_cycle(nng)
        if cand is None:
            if len(rag.blacklist) < rag.num_edges:
                raise RuntimeError("candidate edges remain but the NNG has no cycle")
            break
        it += 1
        job.check_budget(it)
        (a, b), w = cand
        job.trace.counters.append(
            {
                "iteration": it,
                "live_nodes": rag.num_nodes,
                "rag_edges": rag.num_edges,
                "nng_cycles": len(nng.cycles),
                "rescanned_nodes": 0,
                "edges_examined": 0,
            }
        )
        outcome = job.apply(it, a, b, w, job.test(a, b))
        if outcome is None:
            update_after_blacklist(nng, rag, a, b)
        else:
            update_after_merge(nng, rag, *outcome)
        # candidate search plus the localized repair both count as search work
        job.trace.counters[-1]["rescanned_nodes"] = nng.last_rescanned
        job.trace.counters[-1]["edges_examined"] = nng.edges_examined - before
    return job.finish(nng)


def run(img: RgbImage, init_lm: LabelMap, cfg: DrmConfig):
    """Dispatch on ``cfg.engine`` and ``cfg.policy``."""
    if cfg.engine == "nngAccelerated":
        return run_accelerated(img, init_lm, cfg)
    if cfg.policy == "level":
        return run_baseline_level(img, init_lm, cfg)
    return run_baseline_globalmin(img, init_lm, cfg)


# -- audits ----------------------------------------------------------------


def _replay(trace: MergeTrace):
    """Replay ``trace`` on its initial snapshot, checking each event.

    Events of one iteration are checked against the state at the start of
    that iteration and then applied together. Returns the replayed RAG, the
    replayed cost per merge event, and a list of ``(event index, message)``
    problems.
    """
    rag = trace.initial_rag.copy()
    problems: list[tuple[int, str]] = []
    replayed_costs: list[float] = []
    events = trace.events
    i = 0
    while i < len(events):
        j = i
        while j < len(events) and events[j].iteration == events[i].iteration:
            j += 1
        group = range(i, j)
        for k in group:
            e = events[k]
            if e.a not in rag.adj or e.b not in rag.adj.get(e.a, ()):
                problems.append((k, f"step {k}: regions {e.a} and {e.b} are not adjacent live regions"))
                continue
            if rag.is_blacklisted(e.a, e.b):
                problems.append((k, f"step {k}: pair ({e.a}, {e.b}) was already blacklisted"))
            w = rag.weight(e.a, e.b)
            na, nb = rag.min_neighbor(e.a), rag.min_neighbor(e.b)
            if na is None or nb is None or na[0] != e.b or nb[0] != e.a:
                problems.append((k, f"step {k}: pair ({e.a}, {e.b}) is not a mutual nearest pair"))
            if abs(w - e.weight) > AUDIT_TOL:
                problems.append((k, f"step {k}: recorded weight {e.weight!r} differs from replayed {w!r}"))
            if e.merged and e.delta < 0:
                # every consistent outcome (upper bound or truncation sign) has delta >= 0
                problems.append((k, f"step {k}: merge recorded without a consistent decision"))
        for k in group:
            e = events[k]
            if e.a not in rag.adj or e.b not in rag.adj.get(e.a, ()):
                continue
            if e.merged:
                replayed_costs.append(rag.weight(e.a, e.b))
                if rag.is_blacklisted(e.a, e.b):
                    continue
                rag.merge_regions(e.a, e.b)
            else:
                rag.mark_boundary(e.a, e.b)
        i = j
    return rag, replayed_costs, problems


def objective_audit(trace: MergeTrace):
    """Total and per-region transition costs, verified by replay.

    Raises :class:`AuditError` naming the first event whose recorded cost
    is not the minimal edge of both regions' neighbourhoods at that time.
    """
    f_i = trace.path_costs()
    f_total = sum(f_i.values())
    _, replayed, problems = _replay(trace)
    if problems:
        raise AuditError(problems[0][1])
    merges = trace.steps
    if len(replayed) != len(merges):
        raise AuditError("replay produced a different number of merges")
    parent = list(trace._tree_parent)
    cost = list(trace._tree_cost)
    n_leaves = len(parent) - len(merges)
    for k, w in enumerate(replayed):
        cost[n_leaves + k] = w
    replay_f = _path_costs(parent, cost, trace.initial_rag.initial_ids)
    for i, f in f_i.items():
        if abs(f - replay_f[i]) > AUDIT_TOL:
            raise AuditError(f"region {i}: recorded path cost {f!r} differs from replayed {replay_f[i]!r}")
    if abs(f_total - sum(replay_f.values())) > AUDIT_TOL * max(1, len(f_i)):
        raise AuditError("total transition cost does not match the replayed sum")
    return f_total, f_i


def audit_termination(rag: Rag, nng: Nng | None, trace: MergeTrace) -> dict:
    """Check the not-under-merged and not-over-merged properties of a finished run.

    * not under-merged: no candidate pair survives; every remaining edge
      carries boundary evidence recorded in the trace.
    * not over-merged: every merge in the trace satisfied the predicate
      (mutual nearest pair, consistent decision) when it happened.
    """
    boundary_pairs = {(min(e.a, e.b), max(e.a, e.b)) for e in trace.boundary_events}
    open_edges = []
    for a, b, _ in rag.edges():
        if not rag.is_blacklisted(a, b) or (a, b) not in boundary_pairs:
            open_edges.append((a, b))
    if nng is not None and nng.cycles:
        open_edges.extend(sorted(nng.cycles))
    _, _, problems = _replay(trace)
    merge_problems = [msg for k, msg in problems if trace.events[k].merged]
    return {
        "not_under_merged": not open_edges,
        "not_over_merged": not merge_problems,
        "open_pairs": open_edges[:20],
        "merge_violations": merge_problems[:20],
    }


def replay_labels(init_lm: LabelMap, trace: MergeTrace) -> LabelMap:
    """Apply the trace's merges to ``init_lm`` with a plain union-find."""
    parent = list(range(init_lm.num_regions))

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for e in trace.steps:
        ra, rb = find(e.a), find(e.b)
        lo, hi = min(ra, rb), max(ra, rb)
        parent[hi] = lo
    roots = np.array([find(v) for v in range(init_lm.num_regions)])
    _, dense = np.unique(roots, return_inverse=True)
    return LabelMap(dense[init_lm.labels])
