import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drmseg.bencheval import BoundaryMap, boundary_of, f_measure, gen_quadrants, gen_random_rag, match_prf
from drmseg.pixelcore import LabelMap


def bmap(rows):
    return BoundaryMap(np.array(rows, dtype=bool))


def test_f_measure_values():
    assert f_measure(1.0, 1.0) == 1.0
    assert f_measure(0.5, 1.0) == pytest.approx(2 / 3)
    assert f_measure(0.0, 0.0) == 0.0
    # alpha_f = 1 reduces to precision
    assert f_measure(0.3, 0.9, alpha_f=1.0) == pytest.approx(0.3)


def test_boundary_of_two_regions():
    b = boundary_of(LabelMap(np.array([[0, 0, 1, 1]])))
    assert b.mask.tolist() == [[False, True, True, False]]
    assert b.on_pixels == {(0, 1), (0, 2)}
    assert len(boundary_of(LabelMap(np.zeros((3, 3), int)))) == 0


def test_identical_maps_score_one():
    b = boundary_of(gen_quadrants(32, noise_sigma=0)[1])
    r = match_prf(b, [b], tolerance=0)
    assert (r.precision, r.recall, r.f_measure) == (1.0, 1.0, 1.0)


def test_shift_within_and_beyond_tolerance():
    truth = np.zeros((10, 10), bool)
    truth[:, 4] = True
    det = np.zeros((10, 10), bool)
    det[:, 6] = True
    assert match_prf(BoundaryMap(det), [BoundaryMap(truth)], tolerance=2).f_measure == 1.0
    assert match_prf(BoundaryMap(det), [BoundaryMap(truth)], tolerance=1).f_measure == 0.0


def test_empty_conventions():
    empty = bmap([[0, 0], [0, 0]])
    full = bmap([[1, 0], [0, 0]])
    r = match_prf(empty, [empty])
    assert (r.precision, r.recall) == (1.0, 1.0)
    r = match_prf(empty, [full])
    assert (r.precision, r.recall, r.f_measure) == (0.0, 0.0, 0.0)
    r = match_prf(full, [empty])
    assert (r.precision, r.recall) == (0.0, 1.0)


def test_half_detected_recall():
    truth = bmap([[1, 1, 1, 1, 1, 1, 1, 1]])
    det = bmap([[1, 1, 0, 0, 0, 0, 0, 0]])
    r = match_prf(det, [truth], tolerance=1)
    assert r.precision == 1.0
    assert r.recall == pytest.approx(3 / 8)


def test_recall_averaged_over_truths():
    det = bmap([[1, 0, 0, 0, 0, 0]])
    near = bmap([[1, 0, 0, 0, 0, 0]])
    far = bmap([[0, 0, 0, 0, 0, 1]])
    r = match_prf(det, [near, far], tolerance=1)
    assert r.recall == pytest.approx(0.5)
    assert r.precision == 1.0


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        match_prf(bmap([[1, 0]]), [bmap([[1], [0]])])
    with pytest.raises(ValueError):
        match_prf(bmap([[1, 0]]), [])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 4))
def test_prf_bounded_and_monotone_in_tolerance(seed, t):
    rng = np.random.default_rng(seed)
    det = BoundaryMap(rng.random((12, 12)) < 0.1)
    truth = BoundaryMap(rng.random((12, 12)) < 0.1)
    lo = match_prf(det, [truth], tolerance=t)
    hi = match_prf(det, [truth], tolerance=t + 1)
    for r in (lo, hi):
        assert 0 <= r.precision <= 1 and 0 <= r.recall <= 1 and 0 <= r.f_measure <= 1
    assert hi.precision >= lo.precision and hi.recall >= lo.recall


def test_gen_quadrants_layout_and_noise():
    img, truth = gen_quadrants(4, noise_sigma=0)
    assert truth.labels.tolist() == [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]]
    assert img.data[0, 3].tolist() == [200, 50, 50]
    noisy, _ = gen_quadrants(64, noise_sigma=8, seed=1)
    again, _ = gen_quadrants(64, noise_sigma=8, seed=1)
    assert noisy == again
    tl = noisy.data[:32, :32].reshape(-1, 3).astype(float)
    assert abs(tl.mean() - 50) < 1.5 and 6 < tl.std() < 10
    with pytest.raises(ValueError):
        gen_quadrants(5)


@pytest.mark.parametrize("nodes", [2, 5, 50])
def test_gen_random_rag_is_connected_with_distinct_weights(nodes):
    rag = gen_random_rag(nodes, 4, seed=nodes)
    weights = [w for _, _, w in rag.edges()]
    assert len(set(weights)) == len(weights)
    seen, stack = {0}, [0]
    while stack:
        for u in rag.adj[stack.pop()]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    assert len(seen) == nodes
