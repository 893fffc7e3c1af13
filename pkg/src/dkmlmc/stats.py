"""Streaming moment accumulation and small fitting utilities.

Single-pass updates keep the level statistics of the multilevel driver
numerically stable; the pairwise merge makes aggregation across workers
associative, so a fixed merge order yields bit-stable results within a build.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class MomentAccumulator:
    """Count/mean and centered power sums up to order four."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    m3: float = 0.0
    m4: float = 0.0

    def push(self, x: float) -> "MomentAccumulator":
        self._combine(1, float(x), 0.0, 0.0, 0.0)
        return self

    def extend(self, values) -> "MomentAccumulator":
        """Absorb a batch in one merge (exact two-pass moments on the batch)."""
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0:
            return self
        mean = float(np.mean(v))
        c = v - mean
        self._combine(v.size, mean, float(np.sum(c**2)), float(np.sum(c**3)), float(np.sum(c**4)))
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        out = MomentAccumulator(self.count, self.mean, self.m2, self.m3, self.m4)
        out._combine(other.count, other.mean, other.m2, other.m3, other.m4)
        return out

    def _combine(self, nb: int, mean_b: float, m2_b: float, m3_b: float, m4_b: float) -> None:
        na = self.count
        if nb == 0:
            return
        if na == 0:
            self.count, self.mean, self.m2, self.m3, self.m4 = nb, mean_b, m2_b, m3_b, m4_b
            return
        n = na + nb
        delta = mean_b - self.mean
        d_n = delta / n
        m4 = (
            self.m4
            + m4_b
            + delta * d_n**3 * na * nb * (na * na - na * nb + nb * nb)
            + 6.0 * d_n**2 * (na * na * m2_b + nb * nb * self.m2)
            + 4.0 * d_n * (na * m3_b - nb * self.m3)
        )
        m3 = (
            self.m3
            + m3_b
            + delta * d_n**2 * na * nb * (na - nb)
            + 3.0 * d_n * (na * m2_b - nb * self.m2)
        )
        m2 = self.m2 + m2_b + delta * d_n * na * nb
        self.count, self.mean, self.m2, self.m3, self.m4 = n, self.mean + d_n * nb, m2, m3, m4

    @property
    def variance(self) -> float:
        if self.count < 2:
            raise ValueError(f"variance needs at least 2 samples, have {self.count}")
        return max(self.m2, 0.0) / (self.count - 1)

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.count)

    @property
    def kurtosis(self) -> float:
        if self.count < 2 or self.m2 <= 0.0:
            raise ValueError("kurtosis needs at least 2 samples with spread")
        return self.count * self.m4 / self.m2**2


def merge(a: MomentAccumulator, b: MomentAccumulator) -> MomentAccumulator:
    return a.merge(b)


def fit_decay_slope(levels, values) -> float:
    """Least-squares slope of log2(values) against the level index."""
    lv = np.asarray(levels, dtype=float)
    va = np.asarray(values, dtype=float)
    if lv.size < 3:
        raise ValueError("slope fit needs at least 3 points")
    if np.any(va <= 0.0):
        raise ValueError("slope fit needs positive values")
    return float(np.polyfit(lv, np.log2(va), 1)[0])
