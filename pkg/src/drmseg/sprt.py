"""Truncated sequential probability ratio test on region color cues.

The two cue likelihoods compare a pair of regions through sampled mean
colors ``I_a``, ``I_b`` and the pooled mean ``I_ab``::

    p0 = 1 - lambda1 * exp(-(I_b - I_a)' S^-1 (I_b - I_a))     (inconsistent)
    p1 = 1 - lambda2 * exp(-(I_b - I_ab)' S^-1 (I_b - I_ab))   (consistent)

with ``S`` the regularized diagonal covariance of the pooled sample. Both are
clamped into ``[eps, 1 - eps]`` before taking logs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .graphcore import Rag

__all__ = [
    "ConfigError",
    "SprtConfig",
    "CueSample",
    "TestResult",
    "wald_bounds",
    "cue_probabilities",
    "likelihood_increment",
    "cue_from_stats",
    "draw_cue_sample",
    "sequential_decision",
    "consistency_test",
    "expected_tests",
    "RegionPixels",
]

log = logging.getLogger(__name__)

CONSISTENT = True
INCONSISTENT = False


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SprtConfig:
    lambda1: float = 2.0
    lambda2: float = 1.0
    alpha: float = 0.05
    beta: float = 0.05
    n0: int = 10
    prob_floor: float = 1e-6
    covar_regularizer: float = 1.0
    max_samples: int = 4096
    deterministic: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 1 or not 0 < self.beta < 1:
            raise ConfigError("alpha and beta must lie in (0, 1)")
        if self.n0 < 1:
            raise ConfigError("n0 must be >= 1")
        if not 0 < self.prob_floor < 0.5:
            raise ConfigError("prob_floor must lie in (0, 0.5)")
        if self.covar_regularizer <= 0:
            raise ConfigError("covar_regularizer must be positive")
        if self.max_samples < 1:
            raise ConfigError("max_samples must be >= 1")
        if not 0.5 <= self.lambda1 <= 5:
            log.warning("lambda1=%g is outside the usual range [0.5, 5]", self.lambda1)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CueSample:
    mean_a: tuple[float, float, float]
    mean_b: tuple[float, float, float]
    mean_union: tuple[float, float, float]
    covar_diag: tuple[float, float, float]


@dataclass(frozen=True)
class TestResult:
    consistent: bool
    trials: int
    delta: float
    capped: bool = False

    __test__ = False  # not a pytest class


def wald_bounds(alpha: float, beta: float) -> tuple[float, float]:
    """Wald's approximate stopping bounds ``(A, B)`` in natural-log units."""
    if not 0 < alpha < 1 or not 0 < beta < 1:
        raise ConfigError("alpha and beta must lie in (0, 1)")
    upper = math.log((1 - beta) / alpha)
    lower = math.log(beta / (1 - alpha))
    if not lower < 0 < upper:
        raise ConfigError(f"degenerate bounds A={upper:g}, B={lower:g}; need B < 0 < A")
    return upper, lower


def _mahalanobis(d1, d2, cov) -> float:
    return sum((x - y) ** 2 / c for x, y, c in zip(d1, d2, cov))


def cue_probabilities(s: CueSample, cfg: SprtConfig) -> tuple[float, float]:
    lo, hi = cfg.prob_floor, 1.0 - cfg.prob_floor
    q0 = _mahalanobis(s.mean_b, s.mean_a, s.covar_diag)
    q1 = _mahalanobis(s.mean_b, s.mean_union, s.covar_diag)
    p0 = 1.0 - cfg.lambda1 * math.exp(-q0)
    p1 = 1.0 - cfg.lambda2 * math.exp(-q1)
    return min(max(p0, lo), hi), min(max(p1, lo), hi)


def likelihood_increment(s: CueSample, cfg: SprtConfig) -> float:
    """Error-adjusted log-likelihood ratio of one trial."""
    p0, p1 = cue_probabilities(s, cfg)
    return math.log(p1 * (1 - cfg.beta)) - math.log(p0 * (1 - cfg.alpha))


def cue_from_stats(stats_a, stats_b, regularizer: float) -> CueSample:
    """Cue sample using every pixel of both regions (deterministic mode)."""
    n = stats_a.count + stats_b.count
    mu = tuple((stats_a.sum[c] + stats_b.sum[c]) / n for c in range(3))
    var = tuple(
        max(0.0, (stats_a.sumsq[c] + stats_b.sumsq[c]) / n - mu[c] ** 2) + regularizer for c in range(3)
    )
    return CueSample(stats_a.mean, stats_b.mean, mu, var)


def cue_from_pixels(px_a: np.ndarray, px_b: np.ndarray, regularizer: float) -> CueSample:
    pooled = np.concatenate([px_a, px_b])
    ma = px_a.mean(axis=0)
    mb = px_b.mean(axis=0)
    mu = pooled.mean(axis=0)
    var = pooled.var(axis=0) + regularizer
    return CueSample(tuple(ma.tolist()), tuple(mb.tolist()), tuple(mu.tolist()), tuple(var.tolist()))


class RegionPixels:
    """Pixel colors grouped by live region, for random cue sampling."""

    def __init__(self, colors: np.ndarray, labels: np.ndarray):
        self.colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
        flat = np.asarray(labels).ravel()
        order = np.argsort(flat, kind="stable")
        bounds = np.flatnonzero(np.diff(flat[order])) + 1
        groups = np.split(order, bounds)
        ids = flat[order][np.concatenate([[0], bounds])] if len(flat) else []
        self._members: dict[int, list[np.ndarray]] = {int(v): [g] for v, g in zip(ids, groups)}

    def merge(self, survivor: int, absorbed: int) -> None:
        self._members[survivor].extend(self._members.pop(absorbed))

    def pixels(self, v: int) -> np.ndarray:
        parts = self._members[v]
        if len(parts) > 1:
            parts[:] = [np.concatenate(parts)]
        return parts[0]

    def sample(self, v: int, rng: np.random.Generator, cap: int):
        idx = self.pixels(v)
        m = min(max(1, len(idx) // 2), cap)
        chosen = rng.choice(len(idx), size=m, replace=False)
        return self.colors[idx[chosen]], m < max(1, len(idx) // 2)


def draw_cue_sample(pixels: RegionPixels, rag: Rag, a: int, b: int, rng, cfg: SprtConfig):
    """Draw one cue sample for the pair; returns ``(CueSample, capped)``.

    Half of each region is sampled without replacement (capped at
    ``cfg.max_samples``). Deterministic mode uses every pixel through the
    region statistics and consumes no randomness.
    """
    if a not in rag.adj or b not in rag.adj:
        raise ValueError(f"regions {a} and {b} must both be live")
    if cfg.deterministic:
        return cue_from_stats(rag.stats[a], rag.stats[b], cfg.covar_regularizer), False
    px_a, cap_a = pixels.sample(a, rng, cfg.max_samples)
    px_b, cap_b = pixels.sample(b, rng, cfg.max_samples)
    return cue_from_pixels(px_a, px_b, cfg.covar_regularizer), cap_a or cap_b


def sequential_decision(increments, cfg: SprtConfig) -> TestResult:
    """Run the truncated test over an iterator of per-trial increments.

    Stops at the first crossing of ``A`` or ``B``; after ``n0`` trials without
    a crossing the sign of the accumulated evidence decides.
    """
    upper, lower = wald_bounds(cfg.alpha, cfg.beta)
    delta = 0.0
    n = 0
    for inc in increments:
        n += 1
        delta += inc
        if delta >= upper:
            return TestResult(CONSISTENT, n, delta)
        if delta <= lower:
            return TestResult(INCONSISTENT, n, delta)
        if n >= cfg.n0:
            break
    return TestResult(delta >= 0, n, delta)


def consistency_test(pixels: RegionPixels | None, rag: Rag, a: int, b: int, rng, cfg: SprtConfig) -> TestResult:
    """Decide whether adjacent regions ``a`` and ``b`` are consistent.

    Callers pass the pair in canonical order (``a < b``) because the cue
    model is asymmetric in the two regions.
    """
    if b not in rag.adj.get(a, ()):
        raise ValueError(f"regions {a} and {b} are not adjacent")
    if cfg.deterministic:
        s = cue_from_stats(rag.stats[a], rag.stats[b], cfg.covar_regularizer)
        delta = likelihood_increment(s, cfg)
        return TestResult(delta >= 0, 1, delta)

    capped = False

    def trials():
        nonlocal capped
        while True:
            s, cap = draw_cue_sample(pixels, rag, a, b, rng, cfg)
            capped = capped or cap
            yield likelihood_increment(s, cfg)

    res = sequential_decision(trials(), cfg)
    return TestResult(res.consistent, res.trials, res.delta, capped)


def expected_tests(upper: float, lower: float, alpha: float, beta: float, eta0: float, eta1: float):
    """Wald's expected trial counts ``(E[n | H0], E[n | H1])`` from per-trial drifts."""
    if not eta0 < 0 < eta1:
        raise ValueError("need eta0 < 0 < eta1")
    e0 = (upper * alpha + lower * (1 - alpha)) / eta0
    e1 = (upper * (1 - beta) + lower * beta) / eta1
    return e0, e1
