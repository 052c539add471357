"""
Ranking metrics: normalized entropy (log loss over the entropy of the
average label rate), NE gain, window NE over a training stream, Kendall
tau-b rank correlation, and Pareto-front extraction.
"""

from __future__ import annotations

import math

import numpy as np


class MetricError(ValueError):
    """A metric is undefined for the given inputs."""


def base_rate_entropy(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise MetricError(f"base rate {p} has no entropy normalizer")
    return -(p * math.log(p) + (1.0 - p) * math.log(1.0 - p))


def normalized_entropy(logloss_mean: float, base_rate: float) -> float:
    """NE = mean log loss / entropy of a constant predictor at base_rate."""
    return logloss_mean / base_rate_entropy(base_rate)


def ne_gain(ne_model: float, ne_baseline: float) -> float:
    """Absolute NE difference; negative means the model improved."""
    if ne_baseline <= 0:
        raise MetricError("baseline NE must be positive")
    return ne_model - ne_baseline


def batch_ne(loss_mean: float, labels, fallback_rate: float | None = None) -> float:
    """NE of one mini-batch, normalized by the batch label rate.

    Degenerate all-0/all-1 batches fall back to `fallback_rate` when given
    (rewards must stay defined on small batches), else raise.
    """
    labels = np.asarray(labels)
    p = float(labels.mean())
    if (p <= 0.0 or p >= 1.0):
        if fallback_rate is None:
            raise MetricError(f"degenerate batch label rate {p}")
        p = fallback_rate
    return normalized_entropy(loss_mean, p)


class NeAccumulator:
    """Per-batch (log-loss sum, count, positives) stream with window NE."""

    def __init__(self):
        self.batches: list[tuple[float, int, int]] = []

    def add(self, loss_mean: float, labels) -> None:
        labels = np.asarray(labels)
        n = int(labels.size)
        self.batches.append((float(loss_mean) * n, n, int(labels.sum())))

    def add_sums(self, loss_sum: float, count: int, positives: int) -> None:
        self.batches.append((float(loss_sum), int(count), int(positives)))

    @property
    def n_examples(self) -> int:
        return sum(n for _, n, _ in self.batches)

    def _ne_of(self, batches) -> float:
        loss = sum(b[0] for b in batches)
        n = sum(b[1] for b in batches)
        pos = sum(b[2] for b in batches)
        if n == 0:
            raise MetricError("empty accumulator")
        return normalized_entropy(loss / n, pos / n)

    def full_ne(self) -> float:
        return self._ne_of(self.batches)

    def window_ne(self, window_fraction: float = 0.25) -> float:
        """NE over the minimal tail holding >= window_fraction of examples;
        the normalizing label rate comes from the same window."""
        if not 0.0 < window_fraction <= 1.0:
            raise MetricError("window_fraction must be in (0, 1]")
        if not self.batches:
            raise MetricError("empty accumulator")
        target = window_fraction * self.n_examples
        tail, got = [], 0
        for b in reversed(self.batches):
            tail.append(b)
            got += b[1]
            if got >= target:
                break
        return self._ne_of(tail)


def kendall_tau(xs, ys) -> float:
    """Kendall tau-b: (concordant - discordant) pairs with tie correction."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("kendall_tau needs two equal-length 1D score lists")
    n = len(xs)
    if n < 2:
        raise ValueError("kendall_tau needs at least two points")
    dx = np.sign(xs[:, None] - xs[None, :])
    dy = np.sign(ys[:, None] - ys[None, :])
    iu = np.triu_indices(n, k=1)
    prod = dx[iu] * dy[iu]
    concordant = int((prod > 0).sum())
    discordant = int((prod < 0).sum())
    ties_x = int((dx[iu] == 0).sum())
    ties_y = int((dy[iu] == 0).sum())
    n0 = n * (n - 1) // 2
    denom = math.sqrt((n0 - ties_x) * (n0 - ties_y))
    if denom == 0:
        raise MetricError("kendall_tau undefined: one input is all ties")
    return (concordant - discordant) / denom


def pareto_front_indices(points) -> list[int]:
    """Indices of points not dominated in (ne, flops); both minimized.

    A point is dominated if another has <= in both coordinates and < in at
    least one. Input order is preserved among front members.
    """
    pts = [(float(a), float(b)) for a, b in points]
    if not pts:
        raise ValueError("pareto_front of an empty list")
    keep = []
    for i, (ai, bi) in enumerate(pts):
        dominated = False
        for j, (aj, bj) in enumerate(pts):
            if j == i:
                continue
            if aj <= ai and bj <= bi and (aj < ai or bj < bi):
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return keep


def pareto_front(points) -> list:
    return [points[i] for i in pareto_front_indices(points)]
