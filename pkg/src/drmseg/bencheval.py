"""Boundary-based evaluation and synthetic fixtures.

Precision is measured against the union of all ground-truth boundaries;
recall is computed per ground truth and averaged. Matching is tolerant: a
pixel counts as matched when the Euclidean distance to the nearest pixel of
the other boundary set is at most ``tolerance``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .graphcore import Rag, RegionStats
from .pixelcore import LabelMap, RgbImage

__all__ = [
    "BoundaryMap",
    "PrfResult",
    "boundary_of",
    "f_measure",
    "match_prf",
    "gen_quadrants",
    "gen_random_rag",
    "QUADRANT_COLORS",
]

QUADRANT_COLORS = ((50, 50, 50), (200, 50, 50), (50, 200, 50), (50, 50, 200))


@dataclass(frozen=True, eq=False)
class BoundaryMap:
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise ValueError("boundary mask must be 2-D")
        mask = np.ascontiguousarray(mask)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def on_pixels(self) -> set[tuple[int, int]]:
        """Boundary pixels as ``(row, col)`` pairs."""
        return {(int(r), int(c)) for r, c in zip(*np.nonzero(self.mask))}

    def __len__(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class PrfResult:
    precision: float
    recall: float
    f_measure: float
    tolerance: float
    alpha_f: float

    def as_dict(self) -> dict:
        return asdict(self)


def boundary_of(lm: LabelMap) -> BoundaryMap:
    """Pixels with a 4-neighbour of another label, on both sides of each edge."""
    lab = lm.labels
    mask = np.zeros(lab.shape, dtype=bool)
    dh = lab[:, 1:] != lab[:, :-1]
    mask[:, 1:] |= dh
    mask[:, :-1] |= dh
    dv = lab[1:, :] != lab[:-1, :]
    mask[1:, :] |= dv
    mask[:-1, :] |= dv
    return BoundaryMap(mask)


def f_measure(p: float, r: float, alpha_f: float = 0.5) -> float:
    denom = alpha_f * r + (1 - alpha_f) * p
    if p + r <= 0 or denom <= 0:
        return 0.0
    return p * r / denom


def _distance_to(mask: np.ndarray) -> np.ndarray:
    """Euclidean distance from every pixel to the nearest set pixel of ``mask``."""
    if not mask.any():
        return np.full(mask.shape, np.inf)
    return ndimage.distance_transform_edt(~mask)


def match_prf(detected: BoundaryMap, truths, tolerance: float = 2.0, alpha_f: float = 0.5) -> PrfResult:
    truths = list(truths)
    if not truths:
        raise ValueError("at least one ground-truth boundary map is required")
    for t in truths:
        if t.mask.shape != detected.mask.shape:
            raise ValueError(
                f"dimension mismatch: detected {detected.mask.shape[::-1]}, truth {t.mask.shape[::-1]}"
            )
    det = detected.mask
    union = np.logical_or.reduce([t.mask for t in truths])

    n_det = int(det.sum())
    if n_det == 0:
        precision = 1.0 if not union.any() else 0.0
    else:
        precision = float((_distance_to(union)[det] <= tolerance).sum()) / n_det

    to_det = _distance_to(det)
    recalls = []
    for t in truths:
        n_t = int(t.mask.sum())
        if n_t == 0:
            recalls.append(1.0)
        else:
            recalls.append(float((to_det[t.mask] <= tolerance).sum()) / n_t)
    recall = float(np.mean(recalls))
    return PrfResult(precision, recall, f_measure(precision, recall, alpha_f), float(tolerance), float(alpha_f))


def gen_quadrants(size: int, colors=QUADRANT_COLORS, noise_sigma: float = 8.0, seed: int = 0):
    """Four flat quadrants plus clamped Gaussian noise, and the 4-region truth.

    Quadrant order is top-left, top-right, bottom-left, bottom-right.
    """
    if size < 2 or size % 2:
        raise ValueError("size must be an even number >= 2")
    half = size // 2
    truth = np.zeros((size, size), dtype=np.int64)
    truth[:half, half:] = 1
    truth[half:, :half] = 2
    truth[half:, half:] = 3
    base = np.asarray(colors, dtype=np.float64)[truth]
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        base = base + rng.normal(0.0, noise_sigma, size=base.shape)
    data = np.clip(np.rint(base), 0, 255).astype(np.uint8)
    return RgbImage(data), LabelMap(truth)


def gen_random_rag(nodes: int, degree: int = 4, seed: int = 0) -> Rag:
    """Connected random RAG with synthesized region stats and distinct weights.

    A random spanning tree guarantees connectivity; extra random edges bring
    the mean degree close to ``degree``. Mean colors are continuous random
    draws, re-drawn for a node whenever a duplicate weight appears.
    """
    if nodes < 2:
        raise ValueError("need at least 2 nodes")
    rng = np.random.default_rng(seed)
    edges = set()
    order = rng.permutation(nodes)
    for k in range(1, nodes):
        a = int(order[k])
        b = int(order[rng.integers(0, k)])
        edges.add((min(a, b), max(a, b)))
    target = max(nodes - 1, min(nodes * (nodes - 1) // 2, nodes * degree // 2))
    while len(edges) < target:
        a, b = (int(x) for x in rng.integers(0, nodes, size=2))
        if a != b:
            edges.add((min(a, b), max(a, b)))
    edges = sorted(edges)

    means = rng.uniform(0, 255, size=(nodes, 3))
    counts = rng.integers(1, 50, size=nodes)
    for _ in range(100):
        d = np.linalg.norm(means[[a for a, _ in edges]] - means[[b for _, b in edges]], axis=1)
        if len(np.unique(d)) == len(d):
            break
        means += rng.uniform(-1e-3, 1e-3, size=means.shape)
    stats = {}
    for v in range(nodes):
        n = int(counts[v])
        m = means[v]
        # a single repeated color keeps the stats exact for the synthesized mean
        stats[v] = RegionStats(n, tuple((m * n).tolist()), tuple((m * m * n).tolist()))
    return Rag(stats, edges)
