"""Forward simulation of the N-particle Moran model in a fitness environment.

Two engines share the same law for the empirical measure:

* the particle engine tracks every individual and runs one Poisson clock per
  event kind (resampling, parent-independent mutation, parent-dependent
  mutation, candidate selection), each driven by its own random stream;
* the count engine runs the induced Markov chain on allele counts, which is
  what the moment estimators use since it costs one draw per effective event
  regardless of N.

Rates: ``gamma/2`` per ordered pair for resampling, ``beta'`` and ``beta''``
per individual for mutation, ``alpha/N`` per ordered pair for a candidate
selection ``(i, j)``, accepted with probability ``w(t)[allele_i]``.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from numba import njit

from .environment import EnvironmentPath, sample_path
from .errors import DegreeExceedsPopulation, DimensionMismatch, EnvironmentRangeError
from .polynomial import DualFunction
from .stats import SHARED, STREAM_ENV, STREAM_FORWARD, STREAM_INIT, Estimate, run_replicates, stream
from .typespace import (
    EmpiricalMeasure,
    ModelParams,
    as_prob_vector,
    moment_without_replacement,
    product_moment,
)

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]


@dataclass(frozen=True, eq=False)
class ParticleState:
    """Types of N individuals at time ``t``."""

    alleles: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        a = np.array(self.alleles, dtype=np.int64)
        if a.ndim != 1 or a.size < 2:
            raise ValueError("need a vector of at least two allele indices")
        if np.any(a < 0):
            raise ValueError("allele indices must be nonnegative")
        a.setflags(write=False)
        object.__setattr__(self, "alleles", a)

    @property
    def N(self) -> int:
        return self.alleles.size

    def measure(self, K: int) -> EmpiricalMeasure:
        return EmpiricalMeasure.from_alleles(self.alleles, K)

    @classmethod
    def from_counts(cls, counts) -> "ParticleState":
        counts = np.asarray(counts, dtype=np.int64)
        return cls(np.repeat(np.arange(counts.size), counts))

    @classmethod
    def iid(cls, p, N: int, rng: np.random.Generator) -> "ParticleState":
        p = as_prob_vector(p)
        return cls(rng.choice(p.size, size=N, p=p))


class MoranTrajectory:
    """Allele counts at the requested sample times."""

    def __init__(self, sample_times, counts, final_alleles=None):
        self.sample_times = np.asarray(sample_times, dtype=np.float64)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.final_alleles = final_alleles

    @property
    def measures(self) -> list[EmpiricalMeasure]:
        return [EmpiricalMeasure(c) for c in self.counts]

    def frequencies(self) -> np.ndarray:
        return self.counts / self.counts.sum(axis=1, keepdims=True)

    def to_text(self, delimiter: str = ",") -> str:
        K = self.counts.shape[1]
        buf = io.StringIO()
        buf.write(delimiter.join(["time"] + [f"n{a}" for a in range(K)]) + "\n")
        for t, c in zip(self.sample_times, self.counts):
            buf.write(delimiter.join([repr(float(t))] + [str(int(x)) for x in c]) + "\n")
        return buf.getvalue()

    def save(self, path, delimiter: str = ",") -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text(delimiter))


# -- kernels -------------------------------------------------------------


@njit(cache=True, nogil=True)
def _draw_cdf(cdf, u):
    k = 0
    while k < cdf.shape[0] - 1 and u >= cdf[k]:
        k += 1
    return k


@njit(cache=True, nogil=True)
def _next_time(t, rate, rng):
    if rate <= 0.0:
        return np.inf
    return t + rng.exponential(1.0 / rate)


@njit(cache=True, nogil=True)
def _particle_kernel(
    alleles, K, gamma, alpha, bp, bpp, qp_cdf, qdp_cdf,
    seg_times, seg_values, horizon, sample_times, out,
    rng_res, rng_mp, rng_mpp, rng_sel,
):
    N = alleles.shape[0]
    counts = np.zeros(K, np.int64)
    for i in range(N):
        counts[alleles[i]] += 1
    r_res = 0.5 * gamma * N * (N - 1)
    r_mp = bp * N
    r_mpp = bpp * N
    r_sel = alpha * (N - 1)
    t_res = _next_time(0.0, r_res, rng_res)
    t_mp = _next_time(0.0, r_mp, rng_mp)
    t_mpp = _next_time(0.0, r_mpp, rng_mpp)
    t_sel = _next_time(0.0, r_sel, rng_sel)
    n_samp = sample_times.shape[0]
    p = 0
    seg = 0
    n_seg = seg_times.shape[0]
    n_events = 0
    while True:
        t = min(t_res, t_mp, t_mpp, t_sel)
        if t > horizon:
            break
        while p < n_samp and sample_times[p] < t:
            out[p, :] = counts
            p += 1
        if t == t_res:
            i = rng_res.integers(0, N)
            j = rng_res.integers(0, N - 1)
            if j >= i:
                j += 1
            counts[alleles[j]] -= 1
            alleles[j] = alleles[i]
            counts[alleles[j]] += 1
            t_res = _next_time(t, r_res, rng_res)
        elif t == t_mp:
            i = rng_mp.integers(0, N)
            counts[alleles[i]] -= 1
            alleles[i] = _draw_cdf(qp_cdf, rng_mp.random())
            counts[alleles[i]] += 1
            t_mp = _next_time(t, r_mp, rng_mp)
        elif t == t_mpp:
            i = rng_mpp.integers(0, N)
            counts[alleles[i]] -= 1
            alleles[i] = _draw_cdf(qdp_cdf[alleles[i]], rng_mpp.random())
            counts[alleles[i]] += 1
            t_mpp = _next_time(t, r_mpp, rng_mpp)
        else:
            i = rng_sel.integers(0, N)
            j = rng_sel.integers(0, N - 1)
            if j >= i:
                j += 1
            u = rng_sel.random()
            while seg + 1 < n_seg and seg_times[seg + 1] <= t:
                seg += 1
            if u < seg_values[seg, alleles[i]]:
                counts[alleles[j]] -= 1
                alleles[j] = alleles[i]
                counts[alleles[j]] += 1
            t_sel = _next_time(t, r_sel, rng_sel)
        n_events += 1
    while p < n_samp:
        out[p, :] = counts
        p += 1
    return n_events


@njit(cache=True, nogil=True)
def _count_kernel(
    counts, gamma, alpha, bp, bpp, q_prime, q_dp,
    seg_times, seg_values, horizon, sample_times, out, rng,
):
    K = counts.shape[0]
    N = 0
    for a in range(K):
        N += counts[a]
    rates = np.zeros((K, K))
    n_samp = sample_times.shape[0]
    n_seg = seg_times.shape[0]
    p = 0
    n_events = 0
    t = 0.0
    for seg in range(n_seg):
        seg_end = seg_times[seg + 1] if seg + 1 < n_seg else horizon
        if seg_end > horizon:
            seg_end = horizon
        w = seg_values[seg]
        while True:
            # rates[b, a]: one individual of type b becomes type a
            total = 0.0
            for b in range(K):
                cb = counts[b]
                for a in range(K):
                    if a == b or cb == 0:
                        rates[b, a] = 0.0
                        continue
                    r = (0.5 * gamma + alpha * w[a] / N) * counts[a] * cb
                    r += cb * (bp * q_prime[a] + bpp * q_dp[b, a])
                    rates[b, a] = r
                    total += r
            if total <= 0.0:
                t_next = np.inf
            else:
                t_next = t + rng.exponential(1.0 / total)
            if t_next > seg_end:
                t = seg_end
                break
            while p < n_samp and sample_times[p] < t_next:
                out[p, :] = counts
                p += 1
            t = t_next
            u = rng.random() * total
            acc = 0.0
            b_hit = -1
            a_hit = -1
            for b in range(K):
                for a in range(K):
                    acc += rates[b, a]
                    if a_hit < 0 and u < acc and rates[b, a] > 0.0:
                        b_hit = b
                        a_hit = a
            if a_hit < 0:
                # u landed past the last positive rate by rounding
                for b in range(K):
                    for a in range(K):
                        if rates[b, a] > 0.0:
                            b_hit = b
                            a_hit = a
            counts[b_hit] -= 1
            counts[a_hit] += 1
            n_events += 1
        if seg_end >= horizon:
            break
    while p < n_samp:
        out[p, :] = counts
        p += 1
    return n_events


# -- drivers -------------------------------------------------------------


def _seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(2**63)))
    return np.random.SeedSequence(int(seed))


def kind_streams(seed: SeedLike) -> list[np.random.Generator]:
    """One generator per event kind, children of ``seed`` keyed 0..3."""
    ss = _seed_sequence(seed)
    return [
        np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (k,))
        ))
        for k in range(4)
    ]


def _check_times(horizon: float, sample_times, env: EnvironmentPath) -> np.ndarray:
    if horizon > env.horizon:
        raise EnvironmentRangeError(f"horizon {horizon} exceeds environment horizon {env.horizon}")
    ts = np.asarray(sample_times, dtype=np.float64)
    if ts.ndim != 1 or np.any(np.diff(ts) < 0) or np.any(ts < 0) or np.any(ts > horizon):
        raise ValueError("sample times must be sorted and lie in [0, horizon]")
    return ts


def simulate_moran(
    params: ModelParams,
    env: EnvironmentPath,
    init,
    horizon: float,
    sample_times: Sequence[float],
    seed: SeedLike,
) -> MoranTrajectory:
    """Particle-level simulation.

    Parameters
    ----------
    params : ModelParams
        ``params.N`` is checked against the initial state when set.
    env : EnvironmentPath
        Quenched fitness path covering ``[0, horizon]``.
    init : ParticleState or array of allele indices
    horizon : float
    sample_times : sequence of float
        Sorted times in ``[0, horizon]`` at which counts are recorded.
    seed : int, SeedSequence or Generator
        Root of the four per-kind event streams.  Equal seeds give the same
        resampling and mutation events whatever ``alpha`` or ``env`` are, which
        is what the coupling tests rely on.

    Returns
    -------
    MoranTrajectory
    """
    state = init if isinstance(init, ParticleState) else ParticleState(init)
    K = params.K
    if env.K != K:
        raise DimensionMismatch(f"environment has K={env.K}, model has K={K}")
    if np.any(state.alleles >= K):
        raise ValueError("allele index out of range")
    if params.N is not None and params.N != state.N:
        raise ValueError(f"initial state has {state.N} individuals, params.N = {params.N}")
    ts = _check_times(horizon, sample_times, env)
    kern = params.kernel
    alleles = np.array(state.alleles, dtype=np.int64)
    out = np.zeros((ts.size, K), dtype=np.int64)
    _particle_kernel(
        alleles, K, float(params.gamma), float(params.alpha),
        float(kern.beta_prime), float(kern.beta_double_prime),
        np.cumsum(kern.q_prime), np.cumsum(kern.q_double_prime, axis=1),
        np.asarray(env.jump_times), np.asarray(env.values), float(horizon), ts, out,
        *kind_streams(seed),
    )
    return MoranTrajectory(ts, out, alleles)


def simulate_counts(
    params: ModelParams,
    env: EnvironmentPath,
    counts,
    horizon: float,
    sample_times: Sequence[float],
    rng: np.random.Generator,
) -> MoranTrajectory:
    """Count-level simulation; same law for the empirical measure."""
    K = params.K
    c = np.array(counts, dtype=np.int64)
    if c.shape != (K,):
        raise DimensionMismatch(f"counts must have length {K}")
    if env.K != K:
        raise DimensionMismatch(f"environment has K={env.K}, model has K={K}")
    ts = _check_times(horizon, sample_times, env)
    kern = params.kernel
    out = np.zeros((ts.size, K), dtype=np.int64)
    _count_kernel(
        c, float(params.gamma), float(params.alpha),
        float(kern.beta_prime), float(kern.beta_double_prime),
        np.asarray(kern.q_prime), np.asarray(kern.q_double_prime),
        np.asarray(env.jump_times), np.asarray(env.values), float(horizon), ts, out, rng,
    )
    return MoranTrajectory(ts, out)


def _initial_counts(init, N: int, K: int, rng_factory) -> np.ndarray:
    if isinstance(init, EmpiricalMeasure):
        if init.N != N or init.K != K:
            raise ValueError("initial measure does not match N or K")
        return np.array(init.counts)
    p = as_prob_vector(init, K)
    return rng_factory().multinomial(N, p)


def estimate_moran_moment(
    params: ModelParams,
    env_proc,
    init,
    f: DualFunction,
    t: float,
    replicates: int,
    seed: int,
    quenched: bool = True,
    env_path: Optional[EnvironmentPath] = None,
    engine: str = "counts",
    without_replacement: bool = False,
    workers: int = 1,
) -> Estimate:
    """Monte Carlo estimate of ``E <mu_N(t)^{(x)n}, f>``.

    Parameters
    ----------
    params : ModelParams
        Must carry ``N``.
    env_proc : environment process
        Quenched runs share one path (``env_path`` if given, else the shared
        environment stream of ``seed``); annealed runs draw one per replicate.
    init : EmpiricalMeasure or probability vector
        A measure is used as is; a probability vector means iid initial types.
    f : DualFunction
    t : float
    replicates : int
    seed : int
        Master seed; replicate ``r`` uses streams keyed by ``r``.
    engine : {"counts", "particles"}
    without_replacement : bool
        Use ``<m^{(N)}, f>`` instead of the product moment.
    workers : int
        Thread count; the result does not depend on it.
    """
    if params.N is None:
        raise ValueError("params.N must be set for the Moran model")
    if engine not in ("counts", "particles"):
        raise ValueError(f"unknown engine {engine!r}")
    N, K = int(params.N), params.K
    if f.K != K:
        raise DimensionMismatch(f"function has K={f.K}, model has K={K}")
    if without_replacement and f.degree > N:
        raise DegreeExceedsPopulation(f"degree {f.degree} exceeds N={N}")
    if f.is_constant:
        return Estimate(f.value, 0.0, replicates)
    if quenched and env_path is None and t > 0:
        env_path = sample_path(env_proc, t, stream(seed, STREAM_ENV, SHARED))

    def moment(counts) -> float:
        if without_replacement:
            return moment_without_replacement(EmpiricalMeasure(counts), f)
        return product_moment(counts / N, f)

    ts = np.array([t], dtype=np.float64)

    def one(rep: int) -> float:
        c0 = _initial_counts(init, N, K, lambda: stream(seed, STREAM_INIT, rep))
        if t == 0:
            return moment(c0)
        path = env_path if quenched else sample_path(env_proc, t, stream(seed, STREAM_ENV, rep))
        if engine == "counts":
            tr = simulate_counts(params, path, c0, t, ts, stream(seed, STREAM_FORWARD, rep))
        else:
            ss = np.random.SeedSequence(int(seed), spawn_key=(STREAM_FORWARD, rep))
            tr = simulate_moran(params, path, ParticleState.from_counts(c0), t, ts, ss)
        return moment(tr.counts[-1])

    return Estimate.from_values(run_replicates(one, replicates, workers))
