"""Initial over-segmentation: immersion watershed, grid tiling, external maps."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .pixelcore import GrayImage, LabelMap, RgbImage, luminance, median_filter, sobel_magnitude

__all__ = [
    "InitSegConfig",
    "quantize",
    "watershed",
    "grid_init",
    "validate_external",
    "initial_segmentation",
]

_MASK = -2
_WSHED = -3
_INIT = -1


@dataclass(frozen=True)
class InitSegConfig:
    mode: str = "watershed"
    median_radius: int = 1
    grid_block: int = 16
    quant_levels: int = 256

    def __post_init__(self):
        if self.mode not in ("watershed", "grid", "external"):
            raise ValueError(f"unknown init mode {self.mode!r}")
        if self.grid_block < 1:
            raise ValueError("grid_block must be >= 1")
        if self.quant_levels < 2:
            raise ValueError("quant_levels must be >= 2")
        if self.median_radius < 0:
            raise ValueError("median_radius must be >= 0")


def quantize(grad: GrayImage, levels: int = 256) -> np.ndarray:
    """Map gradient values onto ``levels`` equal-width bins over [min, max]."""
    g = grad.data
    lo, hi = float(g.min()), float(g.max())
    if hi <= lo:
        return np.zeros(g.shape, dtype=np.int64)
    q = np.floor((g - lo) / (hi - lo) * levels).astype(np.int64)
    return np.minimum(q, levels - 1)


def watershed(grad: GrayImage, quant_levels: int = 256) -> LabelMap:
    """Vincent-Soille immersion with 4-connectivity.

    Watershed-line pixels are absorbed afterwards into the adjacent basin with
    the lowest running mean gradient (ties to the smaller basin id), so every
    pixel ends up in a basin.
    """
    h, w = grad.height, grad.width
    n = h * w
    levels = quantize(grad, quant_levels).ravel()
    order = np.argsort(levels, kind="stable")
    sorted_levels = levels[order]
    # start index of each distinct level within ``order``
    bounds = np.flatnonzero(np.diff(sorted_levels)) + 1
    starts = [0, *bounds.tolist(), n]

    def neighbours(p):
        r, c = divmod(p, w)
        if c > 0:
            yield p - 1
        if c < w - 1:
            yield p + 1
        if r > 0:
            yield p - w
        if r < h - 1:
            yield p + w

    lab = [_INIT] * n
    dist = [0] * n
    order_list = order.tolist()
    current = -1
    fifo: deque = deque()

    for li in range(len(starts) - 1):
        level_pixels = order_list[starts[li] : starts[li + 1]]
        for p in level_pixels:
            lab[p] = _MASK
            for q in neighbours(p):
                if lab[q] >= 0 or lab[q] == _WSHED:
                    dist[p] = 1
                    fifo.append(p)
                    break
        cur_dist = 1
        fifo.append(None)
        while True:
            p = fifo.popleft()
            if p is None:
                if not fifo:
                    break
                fifo.append(None)
                cur_dist += 1
                p = fifo.popleft()
            for q in neighbours(p):
                lq = lab[q]
                if dist[q] < cur_dist and (lq >= 0 or lq == _WSHED):
                    if lq >= 0:
                        if lab[p] == _MASK or lab[p] == _WSHED:
                            lab[p] = lq
                        elif lab[p] != lq:
                            lab[p] = _WSHED
                    elif lab[p] == _MASK:
                        lab[p] = _WSHED
                elif lq == _MASK and dist[q] == 0:
                    dist[q] = cur_dist + 1
                    fifo.append(q)
        # pixels still masked at this level seed new minima
        for p in level_pixels:
            dist[p] = 0
            if lab[p] == _MASK:
                current += 1
                lab[p] = current
                fifo.append(p)
                while fifo:
                    s = fifo.popleft()
                    for q in neighbours(s):
                        if lab[q] == _MASK:
                            lab[q] = current
                            fifo.append(q)

    labels = np.asarray(lab, dtype=np.int64)
    ridge = np.flatnonzero(labels == _WSHED)
    if ridge.size:
        labels = _absorb_ridges(labels, grad.data.ravel(), ridge.tolist(), current + 1, neighbours)
    return LabelMap(labels.reshape(h, w))


def _absorb_ridges(labels, gvals, ridge, nbasins, neighbours):
    basin = labels >= 0
    sums = np.bincount(labels[basin], weights=gvals[basin], minlength=nbasins).tolist()
    counts = np.bincount(labels[basin], minlength=nbasins).tolist()
    lab = labels.tolist()
    pending = ridge
    while pending:
        left = []
        for p in pending:
            best = None
            best_mean = 0.0
            for q in neighbours(p):
                b = lab[q]
                if b < 0:
                    continue
                m = sums[b] / counts[b]
                if best is None or m < best_mean or (m == best_mean and b < best):
                    best, best_mean = b, m
            if best is None:
                left.append(p)
                continue
            lab[p] = best
            sums[best] += gvals[p]
            counts[best] += 1
        if len(left) == len(pending):
            raise RuntimeError("ridge pixels without any basin neighbour")
        pending = left
    return np.asarray(lab, dtype=np.int64)


def grid_init(width: int, height: int, block: int) -> LabelMap:
    """Tile the plane with ``block`` x ``block`` squares in row-major order."""
    if block < 1:
        raise ValueError("block must be >= 1")
    tiles_x = -(-width // block)
    rows = np.arange(height)[:, None] // block
    cols = np.arange(width)[None, :] // block
    return LabelMap(rows * tiles_x + cols)


def validate_external(lm: LabelMap) -> LabelMap:
    """Densify ids and split labels that are not 4-connected.

    Output ids follow the row-major order of each component's first pixel.
    """
    from skimage.measure import label as cc_label

    if lm.labels.size == 0:
        raise ValueError("empty label map")
    comps = cc_label(lm.labels, background=-1, connectivity=1).ravel()
    # skimage numbers components from 1 in raster order of first appearance
    _, first = np.unique(comps, return_index=True)
    ranks = np.empty(len(first), dtype=np.int64)
    ranks[np.argsort(first, kind="stable")] = np.arange(len(first))
    dense = ranks[np.searchsorted(np.unique(comps), comps)]
    return LabelMap(dense.reshape(lm.labels.shape))


def initial_segmentation(img: RgbImage, cfg: InitSegConfig, external: LabelMap | None = None) -> LabelMap:
    """Run the configured initializer on ``img``."""
    if cfg.mode == "grid":
        return grid_init(img.width, img.height, cfg.grid_block)
    if cfg.mode == "external":
        if external is None:
            raise ValueError("external mode requires a label map")
        if external.labels.shape != (img.height, img.width):
            raise ValueError("external label map does not match image dimensions")
        return validate_external(external)
    grad = median_filter(sobel_magnitude(luminance(img)), cfg.median_radius)
    return watershed(grad, cfg.quant_levels)
