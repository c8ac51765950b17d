"""Exact generator actions on polynomial test functions.

Three generators act on ``Phi(m) = <m^{(x)n}, f>``:

* the Fleming-Viot generator, with every bracket built from its own degree-n
  (or n+1) tensor by index arithmetic;
* the dual generator, assembled from the dual jump maps;
* the Moran generator on empirical measures, with the N^2 pair sums collapsed
  by exchangeability to O(n^2) distinct brackets.

The first two are computed along independent routes so that their agreement
is a real check.  Every sum goes through ``math.fsum``.
"""
from __future__ import annotations

import math

import numpy as np

from .dual import (
    apply_parent_dep_mutation,
    apply_parent_indep_mutation,
    apply_resampling,
    apply_selection,
)
from .errors import DegreeExceedsPopulation, DimensionMismatch
from .polynomial import DualFunction
from .typespace import (
    EmpiricalMeasure,
    ModelParams,
    as_fitness_vector,
    as_prob_vector,
    moment_without_replacement,
    product_moment,
)

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def _check(params: ModelParams, w_hat, f: DualFunction) -> np.ndarray:
    if f.K != params.K:
        raise DimensionMismatch(f"function has K={f.K}, model has K={params.K}")
    return as_fitness_vector(w_hat, params.K)


def _fn(t: np.ndarray, K: int) -> DualFunction:
    return DualFunction(t, K)


def substitute(t: np.ndarray, j: int, src: int) -> np.ndarray:
    """Tensor of ``x -> f(x with x_j replaced by x_src)``.

    ``src`` may equal ``t.ndim``, meaning a fresh variable appended at the
    end; the result then has one more axis.
    """
    n = t.ndim
    K = t.shape[0] if n else 1
    ndim = max(n, src + 1)
    idx = list(np.indices((K,) * ndim, sparse=True))
    sel = idx[:n]
    sel[j] = idx[src]
    return t[tuple(sel)] * np.ones((K,) * ndim)


def scale_axis(t: np.ndarray, w: np.ndarray, axis: int) -> np.ndarray:
    """``w[x_axis] * f(x)``; ``axis == t.ndim`` lifts to one more variable."""
    n = t.ndim
    if axis == n:
        return np.multiply.outer(t, w)
    shape = [1] * n
    shape[axis] = w.shape[0]
    return t * w.reshape(shape)


def _bprime(t: np.ndarray, q: np.ndarray, i: int) -> np.ndarray:
    """``B'_i f``: integrate x_i against q, kept as a degree-n tensor."""
    n = t.ndim
    s = _LETTERS[:n]
    g = np.einsum(f"{s},{s[i]}->{s[:i] + s[i + 1:]}", t, q)
    return np.broadcast_to(np.expand_dims(g, i), t.shape)


def _bsecond(t: np.ndarray, Q: np.ndarray, i: int) -> np.ndarray:
    """``B''_i f``: ``sum_u Q[x_i, u] f(.., u, ..)``."""
    n = t.ndim
    s = _LETTERS[:n]
    out = s[:i] + "z" + s[i + 1:]
    return np.einsum(f"{s},z{s[i]}->{out}", t, Q)


def fv_generator(params: ModelParams, w_hat, f: DualFunction, m) -> float:
    """Fleming-Viot generator applied to ``Phi^f`` at ``m``.

    Parameters
    ----------
    params : ModelParams
    w_hat : array_like
        Fitness vector at the current time.
    f : DualFunction
    m : array_like
        Probability vector.

    Returns
    -------
    float
        ``gamma/2 sum_{i != j} <f o sigma_ij - f> + beta' sum_i <B'_i f - f>
        + beta'' sum_i <B''_i f - f> + alpha sum_i <w_i f - w_{n+1} f>``.
    """
    w = _check(params, w_hat, f)
    m = as_prob_vector(m, params.K)
    n, K, t = f.degree, f.K, f.tensor
    if n == 0:
        return 0.0
    base = product_moment(m, f)

    def mom(x):
        return product_moment(m, _fn(x, K))

    terms = []
    g2 = 0.5 * params.gamma
    for i in range(n):
        for j in range(n):
            if i != j:
                terms.append(g2 * (mom(substitute(t, j, i)) - base))
    kern = params.kernel
    lifted = mom(scale_axis(t, w, n))
    for i in range(n):
        if kern.beta_prime:
            terms.append(kern.beta_prime * (mom(_bprime(t, kern.q_prime, i)) - base))
        if kern.beta_double_prime:
            terms.append(kern.beta_double_prime * (mom(_bsecond(t, kern.q_double_prime, i)) - base))
        if params.alpha:
            terms.append(params.alpha * (mom(scale_axis(t, w, i)) - lifted))
    return math.fsum(terms)


def dual_generator(params: ModelParams, w_hat, f: DualFunction, m) -> float:
    """Dual generator, as rate times moment change summed over every jump.

    ``w_hat`` plays the part of the left-limit fitness seen by the dual.
    """
    w = _check(params, w_hat, f)
    m = as_prob_vector(m, params.K)
    n = f.degree
    if n == 0:
        return 0.0
    base = product_moment(m, f)
    terms = []
    g2 = 0.5 * params.gamma
    kern = params.kernel
    for i in range(n):
        for j in range(n):
            if i != j:
                terms.append(g2 * (product_moment(m, apply_resampling(f, i, j)) - base))
    for i in range(n):
        if kern.beta_prime:
            g = apply_parent_indep_mutation(f, i, kern.q_prime)
            terms.append(kern.beta_prime * (product_moment(m, g) - base))
        if kern.beta_double_prime:
            g = apply_parent_dep_mutation(f, i, kern.q_double_prime)
            terms.append(kern.beta_double_prime * (product_moment(m, g) - base))
        if params.alpha:
            terms.append(params.alpha * (product_moment(m, apply_selection(f, i, w)) - base))
    return math.fsum(terms)


def generator_duality_gap(params: ModelParams, w_hat, f: DualFunction, m) -> float:
    return abs(fv_generator(params, w_hat, f, m) - dual_generator(params, w_hat, f, m))


def moran_generator(params: ModelParams, w_hat, f: DualFunction, m: EmpiricalMeasure) -> float:
    """Moran generator applied to ``m -> <m^{(N)}, f>`` at an empirical measure.

    ``f`` is read as a function of N variables that ignores all but the first
    n.  A pair ``(i, j)`` only matters when ``j <= n``; pairs with ``i > n``
    all give the same bracket, a degree-(n+1) moment counted ``N - n`` times.
    """
    w = _check(params, w_hat, f)
    if not isinstance(m, EmpiricalMeasure):
        m = EmpiricalMeasure(m)
    if m.K != params.K:
        raise DimensionMismatch(f"measure has K={m.K}, model has K={params.K}")
    N, n, K, t = m.N, f.degree, f.K, f.tensor
    if n > N:
        raise DegreeExceedsPopulation(f"degree {n} exceeds population size {N}")
    if n == 0:
        return 0.0

    def mom(x):
        return moment_without_replacement(m, _fn(x, K))

    base = moment_without_replacement(m, f)
    outside = N - n
    g2 = 0.5 * params.gamma
    sel = params.alpha / N
    res_terms, sel_terms = [], []
    for j in range(n):
        for i in range(n):
            if i == j:
                continue
            g = substitute(t, j, i)
            res_terms.append(mom(g) - base)
            if sel:
                sel_terms.append(mom(scale_axis(g - t, w, i)))
        if outside:
            h = substitute(t, j, n)
            fl = np.broadcast_to(t[..., None], h.shape)
            res_terms.append(outside * (mom(h) - base))
            if sel:
                sel_terms.append(outside * mom(scale_axis(h - fl, w, n)))
    kern = params.kernel
    mut_terms = []
    for i in range(n):
        if kern.beta_prime:
            mut_terms.append(kern.beta_prime * (mom(_bprime(t, kern.q_prime, i)) - base))
        if kern.beta_double_prime:
            mut_terms.append(kern.beta_double_prime * (mom(_bsecond(t, kern.q_double_prime, i)) - base))
    return math.fsum([g2 * math.fsum(res_terms), math.fsum(mut_terms), sel * math.fsum(sel_terms)])


def generator_bound(params: ModelParams, f: DualFunction, convention: str = "ordered") -> float:
    """Uniform bound on ``|fv_generator(params, w, f, m)|`` over ``w`` and ``m``.

    ``convention="ordered"`` counts the ``n(n-1)`` ordered resampling pairs at
    ``gamma/2`` each, giving ``(gamma n(n-1) + 4 beta n + 2 alpha n) ||f||``.
    ``convention="unordered"`` uses ``gamma * C(n, 2)`` for the resampling part,
    which is half as large and can be exceeded.
    """
    n = f.degree
    norm = f.sup_norm()
    if convention == "ordered":
        res = params.gamma * n * (n - 1)
    elif convention == "unordered":
        res = params.gamma * n * (n - 1) / 2
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return (res + 4 * params.beta * n + 2 * n * params.alpha) * norm
