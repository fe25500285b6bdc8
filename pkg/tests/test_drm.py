import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drmseg.bencheval import gen_quadrants
from drmseg.drm import (
    AuditError,
    DrmConfig,
    MaxIterationsError,
    MergeTrace,
    audit_termination,
    merge_predicate,
    objective_audit,
    replay_labels,
    run,
)
from drmseg.graphcore import Rag, RegionStats, build_rag
from drmseg.initseg import InitSegConfig, grid_init, initial_segmentation
from drmseg.pixelcore import LabelMap, RgbImage, encode_pgm16
from drmseg.sprt import SprtConfig, TestResult

DET = SprtConfig(deterministic=True)
ENGINES = [("level", "baseline"), ("globalMin", "baseline"), ("globalMin", "nngAccelerated")]


def pair_rag(w=5.0):
    return Rag({0: RegionStats.constant((0, 0, 0), 1), 1: RegionStats.constant((w, 0, 0), 1)}, [(0, 1)])


def consistent(delta=0.5):
    return TestResult(True, 1, delta)


def inconsistent(delta=-0.5):
    return TestResult(False, 1, delta)


def quadrant_case(size=64, sigma=8.0, seed=0, block=16):
    img, truth = gen_quadrants(size, noise_sigma=sigma, seed=seed)
    return img, grid_init(size, size, block), truth


# -- predicate -------------------------------------------------------------


def test_merge_predicate_cases():
    rag = Rag(
        {0: RegionStats.constant((0, 0, 0), 1), 1: RegionStats.constant((1, 0, 0), 1),
         2: RegionStats.constant((1.5, 0, 0), 1)},
        [(0, 1), (1, 2)],
    )
    assert merge_predicate(rag, None, 1, 2, True)
    assert not merge_predicate(rag, None, 1, 2, False)
    # nn(0) = 1 but nn(1) = 2
    assert not merge_predicate(rag, None, 0, 1, True)
    with pytest.raises(ValueError):
        merge_predicate(rag, None, 0, 2, True)


# -- objective audit -------------------------------------------------------


def test_objective_no_merges():
    trace = MergeTrace(pair_rag())
    assert objective_audit(trace) == (0.0, {0: 0.0, 1: 0.0})


def test_objective_single_merge():
    trace = MergeTrace(pair_rag(5.0))
    trace.record(1, 0, 1, 5.0, consistent())
    f_total, f_i = objective_audit(trace)
    assert f_i == {0: 5.0, 1: 5.0}
    assert f_total == 10.0
    assert trace.label_path(1) == ([1, 0], [5.0])


def test_objective_detects_inflated_weight():
    trace = MergeTrace(pair_rag(5.0))
    trace.record(1, 0, 1, 6.0, consistent())
    with pytest.raises(AuditError, match="step 0"):
        objective_audit(trace)


def test_objective_on_chain():
    # 0 -1- 1 -2- 2 (means 0, 1, 3): merge (0,1) at weight 1, then (0,2) at |0.5 - 3|
    stats = {i: RegionStats.constant((x, 0, 0), 1) for i, x in enumerate((0.0, 1.0, 3.0))}
    trace = MergeTrace(Rag(stats, [(0, 1), (1, 2)]))
    trace.record(1, 0, 1, 1.0, consistent())
    trace.record(2, 0, 2, 2.5, consistent())
    f_total, f_i = objective_audit(trace)
    assert f_i == {0: 3.5, 1: 3.5, 2: 2.5}
    assert f_total == pytest.approx(9.5)


def test_negative_control_merge_of_blacklisted_pair():
    trace = MergeTrace(pair_rag())
    trace.record(1, 0, 1, 5.0, inconsistent())
    trace.record(2, 0, 1, 5.0, consistent())
    rag = pair_rag()
    rag.merge_regions(0, 1)
    report = audit_termination(rag, None, trace)
    assert report["not_over_merged"] is False
    assert any("blacklisted" in m for m in report["merge_violations"])
    with pytest.raises(AuditError):
        objective_audit(trace)


def test_audit_flags_open_pair():
    trace = MergeTrace(pair_rag())
    report = audit_termination(pair_rag(), None, trace)
    assert report["not_under_merged"] is False and report["not_over_merged"] is True


# -- engines ---------------------------------------------------------------


@pytest.mark.parametrize("policy, engine", ENGINES)
def test_single_region_returns_immediately(policy, engine):
    img = RgbImage(np.zeros((4, 4, 3), np.uint8))
    labels, trace = run(img, LabelMap(np.zeros((4, 4), int)), DrmConfig(DET, policy, engine))
    assert labels.num_regions == 1 and trace.events == []
    report = audit_termination(trace.final_rag, trace.final_nng, trace)
    assert report["not_under_merged"] and report["not_over_merged"]


@pytest.mark.parametrize("policy, engine", ENGINES)
def test_two_identical_regions_merge(policy, engine):
    img = RgbImage(np.full((2, 4, 3), 90, np.uint8))
    lm = LabelMap(np.array([[0, 0, 1, 1], [0, 0, 1, 1]]))
    labels, trace = run(img, lm, DrmConfig(DET, policy, engine))
    assert trace.merge_count == 1 and labels.num_regions == 1


@pytest.mark.parametrize("policy, engine", ENGINES)
def test_quadrants_give_four_regions(policy, engine):
    img, init, truth = quadrant_case(64)
    labels, trace = run(img, init, DrmConfig(DET, policy, engine))
    assert labels == truth
    objective_audit(trace)
    report = audit_termination(trace.final_rag, trace.final_nng, trace)
    assert report["not_under_merged"] and report["not_over_merged"]


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("deterministic", [True, False])
def test_nng_engine_matches_global_min_baseline(seed, deterministic):
    img, init, _ = quadrant_case(48, sigma=4.0 * seed, seed=seed, block=4)
    sprt = SprtConfig(deterministic=deterministic)
    la, ta = run(img, init, DrmConfig(sprt, "globalMin", "baseline", seed=seed))
    lb, tb = run(img, init, DrmConfig(sprt, "globalMin", "nngAccelerated", seed=seed))
    assert encode_pgm16(la) == encode_pgm16(lb)
    assert ta.events == tb.events
    work_a = sum(c["edges_examined"] for c in ta.counters)
    work_b = tb.setup_edges_examined + sum(c["edges_examined"] for c in tb.counters)
    assert work_a >= work_b


def test_two_node_engines_agree():
    img = RgbImage(np.array([[[0, 0, 0], [0, 0, 9]]], np.uint8))
    lm = LabelMap(np.array([[0, 1]]))
    out = [run(img, lm, DrmConfig(DET, p, e))[1].events for p, e in ENGINES]
    assert out[0] == out[1] == out[2]


@pytest.mark.parametrize("policy, engine", ENGINES)
def test_replay_soundness_on_watershed(policy, engine):
    img, _ = gen_quadrants(48, noise_sigma=8, seed=3)
    init = initial_segmentation(img, InitSegConfig("watershed"))
    labels, trace = run(img, init, DrmConfig(SprtConfig(), policy, engine, seed=5))
    assert replay_labels(init, trace) == labels
    assert trace.merge_count == init.num_regions - labels.num_regions
    assert trace.merge_count <= init.num_regions - 1
    assert trace.blacklist_count <= build_rag(img, init).num_edges
    objective_audit(trace)
    report = audit_termination(trace.final_rag, trace.final_nng, trace)
    assert report["not_under_merged"] and report["not_over_merged"]


def _blacklisted_pairs_never_merge(trace):
    """No merge joins a blacklisted pair while both ids are still live."""
    black = set()
    for e in trace.events:
        key = (min(e.a, e.b), max(e.a, e.b))
        if not e.merged:
            black.add(key)
            continue
        if key in black:
            return False
        # the absorbed id dies; the survivor's blacklist entries are cleared
        black = {p for p in black if e.a not in p and e.b not in p}
    return True


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 1000), st.sampled_from(ENGINES), st.sampled_from([0.5, 2.0]))
def test_blacklist_respected_and_level_disjointness(seed, engine, lam):
    img, _ = gen_quadrants(32, noise_sigma=10, seed=seed)
    init = grid_init(32, 32, 4)
    policy, eng = engine
    labels, trace = run(img, init, DrmConfig(SprtConfig(lambda1=lam), policy, eng, seed=seed))
    assert _blacklisted_pairs_never_merge(trace)
    if policy == "level":
        by_iter = {}
        for e in trace.events:
            by_iter.setdefault(e.iteration, []).extend([e.a, e.b])
        for ids in by_iter.values():
            assert len(ids) == len(set(ids))
    else:
        assert all(sum(e.iteration == k for e in trace.events) == 1 for k in {e.iteration for e in trace.events})


def test_all_pairs_blacklisted_means_no_merges():
    img = RgbImage(np.array([[[0, 0, 0], [255, 255, 255]]], np.uint8))
    lm = LabelMap(np.array([[0, 1]]))
    for policy, engine in ENGINES:
        labels, trace = run(img, lm, DrmConfig(SprtConfig(lambda1=0.5, deterministic=True), policy, engine))
        assert trace.merge_count == 0 and trace.blacklist_count == 1
        assert labels.num_regions == 2


def test_max_iterations_carries_partial_trace():
    img, init, _ = quadrant_case(64)
    with pytest.raises(MaxIterationsError) as info:
        run(img, init, DrmConfig(DET, max_iterations=3))
    assert len(info.value.trace.events) == 3


def test_config_rejects_nng_with_level():
    with pytest.raises(ValueError):
        DrmConfig(policy="level", engine="nngAccelerated")


def test_counters_shape():
    img, init, _ = quadrant_case(32, block=8)
    _, trace = run(img, init, DrmConfig(DET))
    assert [c["iteration"] for c in trace.counters] == list(range(1, len(trace.counters) + 1))
    assert all(c["nng_cycles"] >= 1 for c in trace.counters)
    assert trace.counters[0]["live_nodes"] == init.num_regions
    live = [c["live_nodes"] for c in trace.counters]
    assert live == sorted(live, reverse=True)
