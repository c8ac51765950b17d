"""Finite allele space, mutation kernels, model parameters and moment functionals.

The allele set is ``{0, ..., K-1}``.  Probability measures and fitness
functions on it are plain length-K float arrays; the helpers below validate
them.  Two moment functionals pair measures with :class:`DualFunction`:

* :func:`product_moment` -- ``<m^{(x)n}, f>``, sampling with replacement;
* :func:`moment_without_replacement` -- ``<m^{(N)}, f>`` for an empirical
  measure of N individuals, sampling n of them without replacement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegreeExceedsPopulation, DimensionMismatch
from .polynomial import DualFunction

PROB_ATOL = 1e-12


def as_prob_vector(p, K: Optional[int] = None) -> np.ndarray:
    p = np.array(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("probability vector must be one-dimensional")
    if K is not None and p.shape[0] != K:
        raise DimensionMismatch(f"probability vector has length {p.shape[0]}, expected {K}")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("probability vector entries must lie in [0, 1]")
    if abs(math.fsum(p) - 1.0) > PROB_ATOL:
        raise ValueError(f"probability vector sums to {math.fsum(p)!r}, not 1")
    p.setflags(write=False)
    return p


def as_fitness_vector(w, K: Optional[int] = None) -> np.ndarray:
    w = np.array(w, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError("fitness vector must be one-dimensional")
    if K is not None and w.shape[0] != K:
        raise DimensionMismatch(f"fitness vector has length {w.shape[0]}, expected {K}")
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise ValueError("fitness values must lie in [0, 1]")
    w.setflags(write=False)
    return w


def as_stochastic_matrix(Q, K: Optional[int] = None) -> np.ndarray:
    Q = np.array(Q, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError("mutation matrix must be square")
    if K is not None and Q.shape[0] != K:
        raise DimensionMismatch(f"mutation matrix is {Q.shape}, expected ({K}, {K})")
    if np.any(Q < 0.0):
        raise ValueError("mutation matrix has negative entries")
    sums = np.array([math.fsum(row) for row in Q])
    if np.any(np.abs(sums - 1.0) > PROB_ATOL):
        raise ValueError("mutation matrix rows must sum to 1")
    Q.setflags(write=False)
    return Q


@dataclass(frozen=True, eq=False)
class MutationKernel:
    """``beta q(x, dy) = beta' q'(dy) + beta'' q''(x, dy)``.

    ``q_double_prime`` defaults to the identity (a parent-dependent event that
    never changes the type), which is harmless when ``beta_double_prime == 0``.
    """

    beta_prime: float
    q_prime: np.ndarray
    beta_double_prime: float = 0.0
    q_double_prime: Optional[np.ndarray] = None

    def __post_init__(self):
        qp = as_prob_vector(self.q_prime)
        K = qp.shape[0]
        if K < 2:
            raise ValueError("the allele space needs at least two alleles")
        object.__setattr__(self, "q_prime", qp)
        Q = np.eye(K) if self.q_double_prime is None else self.q_double_prime
        object.__setattr__(self, "q_double_prime", as_stochastic_matrix(Q, K))
        if self.beta_prime < 0 or self.beta_double_prime < 0:
            raise ValueError("mutation rates must be nonnegative")
        if self.beta_prime + self.beta_double_prime <= 0:
            raise ValueError("total mutation rate must be positive")

    @property
    def K(self) -> int:
        return self.q_prime.shape[0]

    @property
    def beta(self) -> float:
        return self.beta_prime + self.beta_double_prime

    def generator(self) -> np.ndarray:
        """Rate matrix of a single lineage's type under mutation alone."""
        K = self.K
        return (
            self.beta_prime * (np.tile(self.q_prime, (K, 1)) - np.eye(K))
            + self.beta_double_prime * (self.q_double_prime - np.eye(K))
        )

    def stationary_law(self) -> np.ndarray:
        """Stationary distribution of the one-lineage mutation chain (linear solve)."""
        G = self.generator()
        K = self.K
        A = np.vstack([G.T, np.ones(K)])
        b = np.zeros(K + 1)
        b[-1] = 1.0
        pi, *_ = np.linalg.lstsq(A, b, rcond=None)
        return pi


@dataclass(frozen=True)
class ModelParams:
    """Rates ``gamma/2`` (resampling per ordered pair), ``beta`` (mutation) and
    ``alpha/N`` (selection per ordered pair); ``N`` only matters for Moran."""

    gamma: float
    alpha: float
    kernel: MutationKernel
    N: Optional[int] = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.N is not None and int(self.N) < 2:
            raise ValueError("population size N must be at least 2")

    @property
    def K(self) -> int:
        return self.kernel.K

    @property
    def beta_prime(self) -> float:
        return self.kernel.beta_prime

    @property
    def beta_double_prime(self) -> float:
        return self.kernel.beta_double_prime

    @property
    def beta(self) -> float:
        return self.kernel.beta

    def with_N(self, N: int) -> "ModelParams":
        return ModelParams(self.gamma, self.alpha, self.kernel, N)


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Allele counts of N individuals; ``m(a) = counts[a] / N``."""

    counts: np.ndarray = field()

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        if c.ndim != 1 or np.any(c < 0):
            raise ValueError("counts must be a vector of nonnegative integers")
        if c.sum() < 1:
            raise ValueError("empty population")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def N(self) -> int:
        return int(self.counts.sum())

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    def frequencies(self) -> np.ndarray:
        return self.counts / self.N

    @classmethod
    def from_alleles(cls, alleles, K: int) -> "EmpiricalMeasure":
        return cls(np.bincount(np.asarray(alleles), minlength=K))


def _check_dims(m: np.ndarray, f: DualFunction):
    if m.shape[0] != f.K:
        raise DimensionMismatch(f"measure has {m.shape[0]} alleles, function has K={f.K}")


def product_moment(m, f: DualFunction) -> float:
    """``<m^{(x)n}, f>``: full contraction of ``f`` against ``m`` on every index."""
    m = np.asarray(m, dtype=np.float64)
    _check_dims(m, f)
    t = f.tensor
    if t.ndim == 0:
        return float(t)
    w = m
    for _ in range(t.ndim - 1):
        w = np.multiply.outer(w, m)
    return math.fsum((w * t).ravel())


def _mwr(t: np.ndarray, counts: np.ndarray, total: int) -> float:
    if t.ndim == 1:
        return math.fsum(counts * t) / total
    acc = []
    for a in np.flatnonzero(counts):
        c = counts.copy()
        c[a] -= 1
        acc.append(counts[a] / total * _mwr(t[a], c, total - 1))
    return math.fsum(acc)


def moment_without_replacement(m: EmpiricalMeasure, f: DualFunction) -> float:
    """``<m^{(N)}, f>``: average of ``f`` over ordered draws of ``f.degree``
    distinct individuals, by recursion over the remaining allele counts."""
    _check_dims(m.counts, f)
    n = f.degree
    if n > m.N:
        raise DegreeExceedsPopulation(f"degree {n} exceeds population size {m.N}")
    if n == 0:
        return f.value
    return _mwr(f.tensor, m.counts.astype(np.float64), m.N)


def extension_gap(m: EmpiricalMeasure, f: DualFunction) -> float:
    """``|<m^{(N)}, f> - <(m/N)^{(x)n}, f>|``."""
    return abs(moment_without_replacement(m, f) - product_moment(m.frequencies(), f))
