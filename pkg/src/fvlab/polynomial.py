"""Test functions on allele tuples stored as dense tensors.

A degree-n function f(x_1, ..., x_n) over K alleles is an array of shape
``(K,) * n``; axis ``i`` is variable ``x_{i+1}``.  Degree 0 is a scalar.
Functions are the states of the dual process and the data of polynomials
``m -> <m^{(x)n}, f>``.
"""
from __future__ import annotations

import itertools
from typing import Callable

import numpy as np
from numba import njit

from .errors import DimensionMismatch

#: relative tolerance below which two slices of a tensor count as equal
CANONICAL_RTOL = 1e-12


class DualFunction:
    """Immutable dense tensor of a function on ``{0..K-1}^n``.

    Instances built through :meth:`canonical` (and everything the jump maps
    return) carry no dummy variables, so ``degree`` is the number of variables
    the function actually depends on.
    """

    __slots__ = ("_t", "_K")

    def __init__(self, tensor, K: int):
        t = np.array(tensor, dtype=np.float64)
        if K < 1:
            raise ValueError("K must be positive")
        if any(s != K for s in t.shape):
            raise DimensionMismatch(f"tensor shape {t.shape} is not (K,)*n with K={K}")
        t.setflags(write=False)
        self._t = t
        self._K = int(K)

    @property
    def tensor(self) -> np.ndarray:
        return self._t

    @property
    def K(self) -> int:
        return self._K

    @property
    def degree(self) -> int:
        return self._t.ndim

    @property
    def is_constant(self) -> bool:
        return self._t.ndim == 0

    @property
    def value(self) -> float:
        """Scalar value of a degree-0 function."""
        if self._t.ndim:
            raise ValueError("function is not constant")
        return float(self._t)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self._t))) if self._t.size else 0.0

    def __call__(self, *x: int) -> float:
        if len(x) != self.degree:
            raise DimensionMismatch(f"expected {self.degree} arguments, got {len(x)}")
        return float(self._t[tuple(x)])

    def __repr__(self) -> str:
        return f"DualFunction(K={self._K}, degree={self.degree})"

    def allclose(self, other: "DualFunction", atol: float = 1e-12) -> bool:
        return (
            self._K == other._K
            and self._t.shape == other._t.shape
            and bool(np.allclose(self._t, other._t, rtol=0.0, atol=atol))
        )

    # -- constructors -----------------------------------------------------

    @classmethod
    def constant(cls, c: float, K: int) -> "DualFunction":
        return cls(np.float64(c), K)

    @classmethod
    def indicator(cls, allele: int, K: int) -> "DualFunction":
        """Degree-1 indicator ``1{x_1 = allele}``."""
        if not 0 <= allele < K:
            raise ValueError(f"allele {allele} outside 0..{K - 1}")
        t = np.zeros(K)
        t[allele] = 1.0
        return cls(t, K)

    @classmethod
    def from_callable(cls, fn: Callable[..., float], K: int, n: int) -> "DualFunction":
        t = np.empty((K,) * n)
        for x in itertools.product(range(K), repeat=n):
            t[x] = fn(*x)
        return cls(t, K)

    @classmethod
    def product(cls, *factors) -> "DualFunction":
        """``f(x_1..x_n) = a_1(x_1) * ... * a_n(x_n)`` from length-K vectors."""
        vecs = [np.asarray(a, dtype=np.float64) for a in factors]
        K = vecs[0].shape[0]
        t = np.float64(1.0)
        for v in vecs:
            t = np.multiply.outer(t, v)
        return cls(t, K)

    # -- canonical form ---------------------------------------------------

    def canonical(self) -> "DualFunction":
        t = canonicalize_tensor(self._t)
        if t is self._t:
            return self
        return DualFunction(t, self._K)


def dummy_axes(t: np.ndarray, rtol: float = CANONICAL_RTOL) -> list[int]:
    """Axes along which all K slices agree within ``rtol * sup|t|``."""
    if t.ndim == 0:
        return []
    tol = rtol * float(np.max(np.abs(t)))
    out = []
    for ax in range(t.ndim):
        first = np.take(t, [0], axis=ax)
        if float(np.max(np.abs(t - first))) <= tol:
            out.append(ax)
    return out


@njit(cache=True, nogil=True)
def _first_dummy_axis(flat, n, K, tol):
    size = flat.shape[0]
    pre = 1
    for ax in range(n):
        post = size // (pre * K)
        dummy = True
        for a in range(pre):
            base = a * K * post
            for k in range(1, K):
                off = base + k * post
                for b in range(post):
                    if abs(flat[off + b] - flat[base + b]) > tol:
                        dummy = False
                        break
                if not dummy:
                    break
            if not dummy:
                break
        if dummy:
            return ax
        pre *= K
    return -1


def canonicalize_tensor(t: np.ndarray, rtol: float = CANONICAL_RTOL) -> np.ndarray:
    """Drop dummy axes until none is left.

    The kept representative of a dummy axis is its slice 0, which is a
    restriction of the original function, so the sup-norm cannot grow.
    """
    if t.ndim == 0:
        return t
    changed = False
    t = np.ascontiguousarray(t, dtype=np.float64)
    while t.ndim:
        shape = t.shape
        flat = t.reshape(-1)
        tol = rtol * float(np.abs(flat).max())
        ax = _first_dummy_axis(flat, t.ndim, shape[0], tol)
        if ax < 0:
            break
        # np.take copies; ascontiguousarray would promote 0-d to shape (1,)
        t = np.take(t, 0, axis=ax)
        changed = True
    if changed:
        return np.array(t, dtype=np.float64)
    return t
