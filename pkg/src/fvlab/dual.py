"""The function-valued dual process.

Going backwards from a horizon ``t``, a degree-n test function jumps:

=========  =====================  ===========================================
kind       rate                   effect
=========  =====================  ===========================================
resample   gamma/2 per (i, j)     tie x_j to x_i, delete slot j
mutP       beta' per i            integrate x_i against q'
mutPP      beta'' per i           apply q'' along x_i
select     alpha per i            ``w[x_i] f + (1 - w[x_i]) f(.. x_i removed ..)``
=========  =====================  ===========================================

where ``w`` is the left limit of the environment at forward time ``t - s``.
Every jump is followed by canonicalization, so the degree counts variables
the function really depends on and constants are absorbing.  All variable
indices are 0-based.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .environment import (
    ConstantEnvironment,
    EnvironmentPath,
    MarkovEnvironment,
    MarkovPathSampler,
    sample_path,
)
from .errors import DegreeCapExceeded, DimensionMismatch, MonotonicityViolation, ReducibleChain
from .polynomial import CANONICAL_RTOL, DualFunction, canonicalize_tensor
from .stats import SHARED, STREAM_DUAL, STREAM_ENV, Estimate, run_replicates, stream
from .typespace import ModelParams, as_fitness_vector, as_prob_vector, as_stochastic_matrix, product_moment

KINDS = ("resample", "mutP", "mutPP", "select")
DEFAULT_DEGREE_CAP = 32


# -- raw tensor maps (no validation, no canonicalization) ----------------


def _tie(t: np.ndarray, i: int, j: int) -> np.ndarray:
    d = np.diagonal(t, axis1=i, axis2=j)
    pos = i if i < j else i - 1
    return np.moveaxis(d, -1, pos)


def _contract(t: np.ndarray, i: int, q: np.ndarray) -> np.ndarray:
    return np.tensordot(t, q, axes=([i], [0]))


def _matrix_apply(t: np.ndarray, i: int, Q: np.ndarray) -> np.ndarray:
    return np.moveaxis(np.tensordot(t, Q, axes=([i], [1])), -1, i)


def _axis_vector(w: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = w.shape[0]
    return w.reshape(shape)


def _select(t: np.ndarray, i: int, w: np.ndarray) -> np.ndarray:
    n = t.ndim
    wv = _axis_vector(w, i, n + 1)
    return wv * t[..., None] + (1.0 - wv) * np.expand_dims(t, i)


# -- public jump maps ----------------------------------------------------


def _check_index(f: DualFunction, *idx: int) -> None:
    for i in idx:
        if not 0 <= i < f.degree:
            raise IndexError(f"variable index {i} out of range for degree {f.degree}")


def apply_resampling(f: DualFunction, i: int, j: int) -> DualFunction:
    """Identify variable ``j`` with variable ``i`` and drop slot ``j``.

    Parameters
    ----------
    f : DualFunction
        Degree ``n >= 2``.
    i, j : int
        Distinct 0-based variable indices.

    Returns
    -------
    DualFunction
        Canonical form of ``g(y) = f(y with y_i inserted at slot j)``, raw
        degree ``n - 1``.
    """
    _check_index(f, i, j)
    if i == j:
        raise ValueError("resampling needs two distinct variables")
    return DualFunction(canonicalize_tensor(_tie(f.tensor, i, j)), f.K)


def apply_parent_indep_mutation(f: DualFunction, i: int, q_prime) -> DualFunction:
    """Integrate variable ``i`` against ``q_prime``; raw degree ``n - 1``."""
    _check_index(f, i)
    q = as_prob_vector(q_prime, f.K)
    return DualFunction(canonicalize_tensor(_contract(f.tensor, i, q)), f.K)


def apply_parent_dep_mutation(f: DualFunction, i: int, q_double_prime) -> DualFunction:
    """``g(.., x_i, ..) = sum_u Q[x_i, u] f(.., u, ..)``; raw degree ``n``."""
    _check_index(f, i)
    Q = as_stochastic_matrix(q_double_prime, f.K)
    return DualFunction(canonicalize_tensor(_matrix_apply(f.tensor, i, Q)), f.K)


def apply_selection(f: DualFunction, i: int, w_hat) -> DualFunction:
    """Selective branching on variable ``i``; raw degree ``n + 1``.

    ``g(x_1..x_{n+1}) = w[x_i] f(x_1..x_n) + (1 - w[x_i]) f(x_1..x_{i-1}, x_{i+1}..x_{n+1})``
    """
    _check_index(f, i)
    w = as_fitness_vector(w_hat, f.K)
    return DualFunction(canonicalize_tensor(_select(f.tensor, i, w)), f.K)


# -- dual paths ------------------------------------------------------------


@dataclass(frozen=True)
class JumpRecord:
    time: float
    kind: str
    indices: tuple
    degree_before: int
    raw_degree: int
    degree_after: int
    sup_norm_after: float


@dataclass(frozen=True, eq=False)
class DualState:
    """End state of one dual run, with its full jump log."""

    f: DualFunction
    horizon: float
    elapsed: float
    jump_log: tuple = field(default_factory=tuple)

    @property
    def absorbed(self) -> bool:
        return self.f.degree == 0

    @property
    def absorption_time(self) -> Optional[float]:
        """First time the function became constant, or ``None``."""
        if not self.absorbed:
            return None
        return self.jump_log[-1].time if self.jump_log else 0.0

    @property
    def selection_count(self) -> int:
        return sum(1 for r in self.jump_log if r.kind == "select")

    def degree_path(self, initial_degree: Optional[int] = None) -> list[int]:
        if initial_degree is None:
            initial_degree = self.jump_log[0].degree_before if self.jump_log else self.f.degree
        return [initial_degree] + [r.degree_after for r in self.jump_log]

    def jump_log_text(self, delimiter: str = ",") -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        wr.writerow(["time", "kind", "indices", "degree_before", "raw_degree", "degree_after", "sup_norm_after"])
        for r in self.jump_log:
            wr.writerow([
                repr(r.time), r.kind, ";".join(str(k) for k in r.indices),
                r.degree_before, r.raw_degree, r.degree_after, repr(r.sup_norm_after),
            ])
        return buf.getvalue()


def run_dual(
    params: ModelParams,
    fitness_at: Callable[[float], np.ndarray],
    horizon: float,
    init: DualFunction,
    rng: np.random.Generator,
    degree_cap: int = DEFAULT_DEGREE_CAP,
    check_monotone: bool = True,
    stop_on_degree_change: bool = False,
) -> DualState:
    """Jump engine behind :func:`simulate_dual`.

    ``fitness_at(s)`` gives the fitness vector seen by a selection jump at dual
    time ``s``.  ``horizon`` may be ``math.inf``, in which case the run stops
    only at absorption (requires ``beta' > 0`` to terminate).
    ``stop_on_degree_change`` ends the run right after the first jump that
    changes the degree; ``elapsed`` is then that jump's time.
    """
    if init.K != params.K:
        raise DimensionMismatch(f"function has K={init.K}, model has K={params.K}")
    if init.degree > degree_cap:
        raise DegreeCapExceeded(f"initial degree {init.degree} exceeds cap {degree_cap}")
    g2 = 0.5 * params.gamma
    bp, bpp, a = params.beta_prime, params.beta_double_prime, params.alpha
    q_prime = params.kernel.q_prime
    q_dp = params.kernel.q_double_prime
    K = params.K
    t = canonicalize_tensor(np.array(init.tensor))
    norm = float(np.max(np.abs(t))) if t.ndim else abs(float(t))
    s = 0.0
    log: list[JumpRecord] = []
    while t.ndim:
        n = t.ndim
        r_res = n * (n - 1) * g2
        r_mp = n * bp
        r_mpp = n * bpp
        total = r_res + r_mp + r_mpp + n * a
        # one batch of uniforms per jump: wait, kind, first and second index
        u0, u1, u2, u3 = rng.random(4)
        s_next = s - math.log1p(-u0) / total
        if s_next >= horizon:
            s = horizon
            break
        s = s_next
        u = u1 * total
        i = min(int(u2 * n), n - 1)
        if u < r_res:
            j = min(int(u3 * (n - 1)), n - 2)
            j += j >= i
            kind, idx = "resample", (i, j)
            raw = _tie(t, i, j)
        elif u < r_res + r_mp:
            kind, idx = "mutP", (i,)
            raw = _contract(t, i, q_prime)
        elif u < r_res + r_mp + r_mpp:
            kind, idx = "mutPP", (i,)
            raw = _matrix_apply(t, i, q_dp)
        else:
            if n + 1 > degree_cap:
                raise DegreeCapExceeded(f"selection at s={s} would raise degree to {n + 1} > {degree_cap}")
            kind, idx = "select", (i,)
            raw = _select(t, i, np.asarray(fitness_at(s), dtype=np.float64))
        t = canonicalize_tensor(raw)
        new_norm = float(np.abs(t).max())
        if check_monotone and new_norm > norm * (1.0 + CANONICAL_RTOL):
            raise MonotonicityViolation(
                f"{kind} jump at s={s} raised sup-norm from {norm!r} to {new_norm!r}"
            )
        norm = new_norm
        log.append(JumpRecord(s, kind, idx, n, raw.ndim, t.ndim, new_norm))
        if stop_on_degree_change and t.ndim != n:
            break
    return DualState(DualFunction(t, K), horizon, s, tuple(log))


def simulate_dual(
    params: ModelParams,
    env: EnvironmentPath,
    horizon: float,
    init: DualFunction,
    rng: np.random.Generator,
    degree_cap: int = DEFAULT_DEGREE_CAP,
    check_monotone: bool = True,
) -> DualState:
    """Run the dual for dual time ``horizon`` against ``env`` read backwards.

    A selection jump at dual time ``s`` uses the left limit of ``env`` at
    forward time ``horizon - s``.

    Parameters
    ----------
    params : ModelParams
    env : EnvironmentPath
        Forward environment path, covering ``[0, horizon]``.
    horizon : float
        Forward time ``t`` at which the population moment is wanted.
    init : DualFunction
        Initial test function.
    rng : numpy.random.Generator
        Event stream.  The environment enters only through selection values,
        so two runs with the same stream see the same jump times and kinds
        whenever canonicalization does not depend on the fitness values.
    degree_cap : int
        Hard limit on the degree; exceeding it raises ``DegreeCapExceeded``.
    check_monotone : bool
        Assert after every jump that the sup-norm has not grown.

    Returns
    -------
    DualState
    """
    if env.K != params.K:
        raise DimensionMismatch(f"environment has K={env.K}, model has K={params.K}")
    if not horizon >= 0:
        raise ValueError("horizon must be nonnegative")
    if horizon > env.horizon:
        raise ValueError(f"horizon {horizon} exceeds environment path horizon {env.horizon}")
    return run_dual(
        params, lambda s: env.evaluate_left(horizon - s), horizon, init, rng, degree_cap, check_monotone
    )


def dual_moment(m0, state: DualState) -> float:
    """``<m0^{(x)n}, psi>`` for a finished dual run."""
    if not (state.absorbed or state.elapsed >= state.horizon):
        raise ValueError("dual run has not reached its horizon")
    return product_moment(as_prob_vector(m0), state.f)


def estimate_dual_moment(
    params: ModelParams,
    env_proc,
    init: DualFunction,
    m0,
    t: float,
    replicates: int,
    seed: int,
    quenched: bool = True,
    env_path: Optional[EnvironmentPath] = None,
    degree_cap: int = DEFAULT_DEGREE_CAP,
    workers: int = 1,
) -> Estimate:
    """Monte Carlo estimate of ``E <m0^{(x)n}, psi_t>`` from independent dual runs.

    In quenched mode all replicates share one environment path: ``env_path``
    if given, else the path drawn from the shared environment stream of
    ``seed`` (the same one the forward estimator draws).  In annealed mode each
    replicate draws its own path from its own environment stream.
    """
    m0 = as_prob_vector(m0, params.K)
    if t == 0:
        return Estimate(product_moment(m0, init), 0.0, replicates)
    if quenched and env_path is None:
        env_path = sample_path(env_proc, t, stream(seed, STREAM_ENV, SHARED))

    def one(rep: int) -> float:
        path = env_path if quenched else sample_path(env_proc, t, stream(seed, STREAM_ENV, rep))
        st = simulate_dual(params, path, t, init, stream(seed, STREAM_DUAL, rep), degree_cap)
        return product_moment(m0, st.f)

    return Estimate.from_values(run_replicates(one, replicates, workers))


def _stationary_reader(env_proc, rng: np.random.Generator) -> Callable[[float], np.ndarray]:
    if isinstance(env_proc, ConstantEnvironment):
        w = env_proc.fitness
        return lambda s: w
    sampler = MarkovPathSampler(env_proc, rng)
    return sampler.value_at


def estimate_dual_limit(
    params: ModelParams,
    env_proc,
    init: DualFunction,
    replicates: int,
    seed: int,
    degree_cap: int = DEFAULT_DEGREE_CAP,
    workers: int = 1,
    return_states: bool = False,
    stream_key: tuple = (),
):
    """Long-time limit of ``E <mu_t^{(x)n}, f>`` under a stationary environment.

    Reading a stationary forward path backwards from a far-away horizon is
    the same as reading a stationary path of the time-reversed chain forwards
    from 0, so each replicate samples the reversed chain lazily and runs the
    dual with no horizon until it absorbs.  The absorbed constant does not
    involve any initial population measure.

    ``stream_key`` is inserted into every stream key, so several limits can
    be estimated from one master seed with independent streams.

    Returns
    -------
    Estimate, or ``(Estimate, list[DualState])`` when ``return_states``.
    """
    if params.beta_prime <= 0:
        raise ValueError("the limit needs beta' > 0 so that the dual absorbs")
    if isinstance(env_proc, MarkovEnvironment):
        if not env_proc.is_irreducible():
            raise ReducibleChain("ergodic limit needs an irreducible environment chain")
        reversed_proc = env_proc.time_reversed()
    elif isinstance(env_proc, ConstantEnvironment):
        reversed_proc = env_proc
    else:
        raise TypeError("ergodic limit needs a Markov or constant environment")
    if init.K != params.K:
        raise DimensionMismatch(f"function has K={init.K}, model has K={params.K}")
    states: list = [None] * replicates

    def one(rep: int) -> float:
        read = _stationary_reader(reversed_proc, stream(seed, STREAM_ENV, *stream_key, rep))
        st = run_dual(params, read, math.inf, init, stream(seed, STREAM_DUAL, *stream_key, rep), degree_cap)
        if return_states:
            states[rep] = st
        return st.f.value

    est = Estimate.from_values(run_replicates(one, replicates, workers))
    return (est, states) if return_states else est


def degree_sequence(states: Sequence[DualState]) -> list[list[int]]:
    return [s.degree_path() for s in states]
