"""Region statistics and the region adjacency graph (RAG).

Edge weights are Euclidean distances between region mean colors. All
orderings use the strict edge order ``(weight, smaller id, larger id)`` so
that nearest-neighbor choices are unique even with duplicate weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .pixelcore import LabelMap, RgbImage

__all__ = ["RegionStats", "Rag", "build_rag", "color_distance", "region_dissimilarity", "adjacent_pairs"]


@dataclass(frozen=True)
class RegionStats:
    count: int
    sum: tuple[float, float, float]
    sumsq: tuple[float, float, float]

    @classmethod
    def of_pixels(cls, pixels) -> "RegionStats":
        px = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
        if len(px) == 0:
            raise ValueError("a region needs at least one pixel")
        return cls(len(px), tuple(px.sum(axis=0).tolist()), tuple((px * px).sum(axis=0).tolist()))

    @classmethod
    def constant(cls, color, count: int) -> "RegionStats":
        return cls(count, tuple(float(c) * count for c in color), tuple(float(c) ** 2 * count for c in color))

    @property
    def mean(self) -> tuple[float, float, float]:
        n = self.count
        return (self.sum[0] / n, self.sum[1] / n, self.sum[2] / n)

    @property
    def variance(self) -> tuple[float, float, float]:
        n = self.count
        return tuple(max(0.0, self.sumsq[c] / n - (self.sum[c] / n) ** 2) for c in range(3))

    def merge(self, other: "RegionStats") -> "RegionStats":
        s, o = self.sum, other.sum
        q, p = self.sumsq, other.sumsq
        return RegionStats(
            self.count + other.count,
            (s[0] + o[0], s[1] + o[1], s[2] + o[2]),
            (q[0] + p[0], q[1] + p[1], q[2] + p[2]),
        )


def color_distance(m1, m2) -> float:
    d0 = m1[0] - m2[0]
    d1 = m1[1] - m2[1]
    d2 = m1[2] - m2[2]
    return math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)


class Rag:
    """Undirected weighted region adjacency graph with merge and blacklist.

    Parameters
    ----------
    stats : mapping of region id to :class:`RegionStats`
        One entry per initial region. Ids must be non-negative integers.
    edges : iterable of (a, b) pairs
        Adjacent region pairs; duplicates and orientation are ignored.
    """

    def __init__(self, stats: Mapping[int, RegionStats], edges: Iterable[tuple[int, int]]):
        self.stats: dict[int, RegionStats] = dict(stats)
        self._mean = {v: s.mean for v, s in self.stats.items()}
        self.adj: dict[int, dict[int, float]] = {v: {} for v in self.stats}
        self.blacklist: set[tuple[int, int]] = set()
        self._black_of: dict[int, set[int]] = {}
        self._parent = {v: v for v in self.stats}
        self.initial_ids = tuple(sorted(self.stats))
        self.merge_log: list[tuple[int, int, int, float]] = []
        self.num_edges = 0
        self.edges_examined = 0
        for a, b in edges:
            if a == b:
                continue
            if a not in self.adj or b not in self.adj:
                raise KeyError(f"edge ({a}, {b}) references an unknown region")
            if b in self.adj[a]:
                continue
            w = color_distance(self._mean[a], self._mean[b])
            self.adj[a][b] = w
            self.adj[b][a] = w
            self.num_edges += 1

    # -- queries -----------------------------------------------------------

    @property
    def nodes(self):
        return self.adj.keys()

    @property
    def num_nodes(self) -> int:
        return len(self.adj)

    def mean(self, v: int):
        return self._mean[v]

    def edges(self):
        """Yield each live edge once as ``(a, b, w)`` with ``a < b``."""
        for a, nbrs in self.adj.items():
            for b, w in nbrs.items():
                if a < b:
                    yield a, b, w

    def is_blacklisted(self, a: int, b: int) -> bool:
        return (a, b) in self.blacklist if a < b else (b, a) in self.blacklist

    def weight(self, a: int, b: int) -> float:
        try:
            return self.adj[a][b]
        except KeyError:
            raise ValueError(f"regions {a} and {b} are not adjacent") from None

    def min_neighbor(self, a: int):
        """Nearest non-blacklisted neighbour of ``a`` as ``(id, weight)``.

        Ties go to the smaller neighbour id. Returns ``None`` when ``a`` has no
        candidate edge.
        """
        nbrs = self.adj[a]
        self.edges_examined += len(nbrs)
        black = self._black_of.get(a)
        best = None
        best_w = 0.0
        for b, w in nbrs.items():
            if black and b in black:
                continue
            if best is None or w < best_w or (w == best_w and b < best):
                best, best_w = b, w
        if best is None:
            return None
        return best, best_w

    def global_min_edge(self):
        """Full scan for the minimal non-blacklisted edge under the strict order."""
        best = None
        black = self.blacklist
        for a, b, w in self.edges():
            if black and (a, b) in black:
                continue
            key = (w, a, b)
            if best is None or key < best:
                best = key
        self.edges_examined += self.num_edges
        if best is None:
            return None
        return (best[1], best[2]), best[0]

    def find(self, initial_id: int) -> int:
        """Live region currently holding an initial region."""
        parent = self._parent
        root = initial_id
        while parent[root] != root:
            root = parent[root]
        while parent[initial_id] != root:
            parent[initial_id], initial_id = root, parent[initial_id]
        return root

    def degree_histogram(self) -> dict[int, int]:
        hist: dict[int, int] = {}
        for nbrs in self.adj.values():
            d = len(nbrs)
            hist[d] = hist.get(d, 0) + 1
        return dict(sorted(hist.items()))

    # -- mutation ----------------------------------------------------------

    def mark_boundary(self, a: int, b: int) -> None:
        if b not in self.adj.get(a, ()):
            raise ValueError(f"regions {a} and {b} are not adjacent")
        lo, hi = (a, b) if a < b else (b, a)
        self.blacklist.add((lo, hi))
        self._black_of.setdefault(a, set()).add(b)
        self._black_of.setdefault(b, set()).add(a)

    def _clear_blacklist(self, v: int) -> None:
        for u in self._black_of.pop(v, ()):
            self.blacklist.discard((v, u) if v < u else (u, v))
            partners = self._black_of.get(u)
            if partners is not None:
                partners.discard(v)
                if not partners:
                    del self._black_of[u]

    def merge_regions(self, a: int, b: int) -> int:
        """Contract edge ``(a, b)``; the survivor keeps ``min(a, b)``."""
        if b not in self.adj.get(a, ()):
            raise ValueError(f"regions {a} and {b} are not adjacent")
        if self.is_blacklisted(a, b):
            raise ValueError(f"regions {a} and {b} carry boundary evidence")
        w_ab = self.adj[a][b]
        s, x = (a, b) if a < b else (b, a)
        self._clear_blacklist(s)
        self._clear_blacklist(x)

        stats = self.stats[s].merge(self.stats.pop(x))
        self.stats[s] = stats
        del self._mean[x]
        mean = stats.mean
        self._mean[s] = mean

        adj = self.adj
        s_nbrs = adj[s]
        x_nbrs = adj.pop(x)
        del s_nbrs[x]
        self.num_edges -= 1
        for u in x_nbrs:
            if u == s:
                continue
            del adj[u][x]
            if u in s_nbrs:
                self.num_edges -= 1
            else:
                s_nbrs[u] = 0.0
        for u in s_nbrs:
            w = color_distance(mean, self._mean[u])
            s_nbrs[u] = w
            adj[u][s] = w

        self._parent[x] = s
        self.merge_log.append((len(self.merge_log) + 1, s, x, w_ab))
        return s

    # -- export / audit ----------------------------------------------------

    def label_map(self, initial: LabelMap) -> LabelMap:
        """Final partition of ``initial`` with live ids renumbered densely."""
        live = sorted(self.adj)
        dense = {v: i for i, v in enumerate(live)}
        lut = np.array([dense[self.find(i)] for i in range(initial.num_regions)], dtype=np.int64)
        return LabelMap(lut[initial.labels])

    def merge_log_text(self) -> str:
        return "".join(f"{k} {s} {x} {w!r}\n" for k, s, x, w in self.merge_log)

    def max_weight_error(self) -> float:
        """Largest deviation between stored weights and weights recomputed from stats."""
        worst = 0.0
        for a, b, w in self.edges():
            ma, mb = self.stats[a].mean, self.stats[b].mean
            worst = max(worst, abs(w - color_distance(ma, mb)))
        return worst

    def copy(self) -> "Rag":
        dup = Rag.__new__(Rag)
        dup.stats = dict(self.stats)
        dup._mean = dict(self._mean)
        dup.adj = {v: dict(n) for v, n in self.adj.items()}
        dup.blacklist = set(self.blacklist)
        dup._black_of = {v: set(p) for v, p in self._black_of.items()}
        dup._parent = dict(self._parent)
        dup.initial_ids = self.initial_ids
        dup.merge_log = list(self.merge_log)
        dup.num_edges = self.num_edges
        dup.edges_examined = 0
        return dup


def adjacent_pairs(labels: np.ndarray) -> np.ndarray:
    """Unique 4-adjacent label pairs ``(a < b)`` of a label array."""
    horiz = np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], axis=1)
    vert = np.stack([labels[:-1, :].ravel(), labels[1:, :].ravel()], axis=1)
    pairs = np.concatenate([horiz, vert])
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    pairs.sort(axis=1)
    if len(pairs) == 0:
        return pairs.reshape(0, 2)
    return np.unique(pairs, axis=0)


def build_rag(img: RgbImage, lm: LabelMap) -> Rag:
    if lm.labels.shape != (img.height, img.width):
        raise ValueError(
            f"dimension mismatch: image {img.width}x{img.height}, labels {lm.width}x{lm.height}"
        )
    labels = lm.labels.ravel()
    n = lm.num_regions
    px = img.data.reshape(-1, 3).astype(np.float64)
    counts = np.bincount(labels, minlength=n)
    sums = [np.bincount(labels, weights=px[:, c], minlength=n) for c in range(3)]
    sumsq = [np.bincount(labels, weights=px[:, c] ** 2, minlength=n) for c in range(3)]
    stats = {}
    for v in range(n):
        if counts[v] == 0:
            raise ValueError(f"label {v} has no pixels")
        stats[v] = RegionStats(
            int(counts[v]),
            (float(sums[0][v]), float(sums[1][v]), float(sums[2][v])),
            (float(sumsq[0][v]), float(sumsq[1][v]), float(sumsq[2][v])),
        )
    edges = adjacent_pairs(lm.labels).tolist()
    return Rag(stats, edges)


def region_dissimilarity(rag: Rag, a: int, b: int) -> float:
    """Dissimilarity of two adjacent live regions.

    Whole regions are graph elements here, so exactly one edge joins an
    adjacent pair and the minimum over connecting edges is that edge's weight.
    """
    return rag.weight(a, b)
