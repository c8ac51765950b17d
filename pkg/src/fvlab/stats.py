"""Monte Carlo summaries and the replicate seeding discipline.

Every random stream is a child of the master seed keyed by
``(stream tag, replicate index, ...)``.  Replicate values are stored by index
and reduced in index order, so a summary does not depend on how replicates
were scheduled across worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

#: two-sided 99% normal quantile
Z99 = 2.576

# stream tags
STREAM_ENV = 0
STREAM_INIT = 1
STREAM_FORWARD = 2
STREAM_DUAL = 3
STREAM_INSTANCE = 4

#: replicate slot used for the single shared path of a quenched experiment
SHARED = 2**31 - 1


@dataclass(frozen=True)
class Estimate:
    """Sample mean, unbiased sample variance and replicate count."""

    mean: float
    variance: float
    count: int

    @property
    def se(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count else math.inf

    @property
    def ci99(self) -> float:
        return Z99 * self.se

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "Estimate":
        v = np.asarray(values, dtype=np.float64).ravel()
        n = v.size
        if n == 0:
            raise ValueError("no replicate values")
        if np.all(v == v[0]):
            # exact for deterministic replicates
            return cls(float(v[0]), 0.0, n)
        mean = math.fsum(v) / n
        var = math.fsum((v - mean) ** 2) / (n - 1) if n > 1 else 0.0
        return cls(mean, var, n)

    def merge(self, other: "Estimate") -> "Estimate":
        """Pairwise (Chan et al.) combination of two disjoint samples."""
        n = self.count + other.count
        d = other.mean - self.mean
        mean = self.mean + d * other.count / n
        m2 = (
            self.variance * (self.count - 1)
            + other.variance * (other.count - 1)
            + d * d * self.count * other.count / n
        )
        return Estimate(mean, m2 / (n - 1) if n > 1 else 0.0, n)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "variance": self.variance,
            "count": self.count,
            "se": self.se,
            "ci99": self.ci99,
        }


def pooled_se(a: Estimate, b: Estimate) -> float:
    return math.sqrt(a.variance / a.count + b.variance / b.count)


def seed_sequence(master: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))


def stream(master: int, *key: int) -> np.random.Generator:
    """Generator for the stream ``key`` below ``master``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master, *key)))


def run_replicates(fn: Callable[[int], float], replicates: int, workers: int = 1) -> np.ndarray:
    """Evaluate ``fn(rep)`` for ``rep = 0..replicates-1``; results by index.

    With ``workers > 1`` contiguous blocks go to a thread pool.  ``fn`` must
    derive all randomness from ``rep`` for the output to be schedule-free.
    """
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    out = np.empty(replicates, dtype=np.float64)
    if workers <= 1:
        for r in range(replicates):
            out[r] = fn(r)
        return out

    def block(bounds):
        lo, hi = bounds
        for r in range(lo, hi):
            out[r] = fn(r)

    n_blocks = min(replicates, 4 * workers)
    edges = np.linspace(0, replicates, n_blocks + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(block, zip(edges[:-1], edges[1:])))
    return out
