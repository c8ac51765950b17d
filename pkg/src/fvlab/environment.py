"""Fitness environments: piecewise-constant cadlag paths and the processes
that generate them.

Three process flavours are supported:

* :class:`ConstantEnvironment` -- one fitness vector forever;
* :class:`ScheduleEnvironment` -- a fixed, user-supplied path;
* :class:`MarkovEnvironment` -- a finite-state continuous-time Markov chain
  over fitness vectors.  Irreducible chains are weakly ergodic, which is the
  setting of the ergodic experiments.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import EnvironmentRangeError, InvalidRateMatrix, ReducibleChain
from .typespace import PROB_ATOL, as_fitness_vector, as_prob_vector


class EnvironmentPath:
    """Right-continuous step function ``t -> w(t)`` on ``[0, horizon]``.

    ``values[i]`` holds on ``[jump_times[i], jump_times[i+1])``.  ``states``
    optionally records which state of a Markov environment each segment came
    from.
    """

    def __init__(self, jump_times, values, horizon: float, states=None):
        times = np.array(jump_times, dtype=np.float64)
        vals = np.array(values, dtype=np.float64)
        if times.ndim != 1 or times.size == 0 or times[0] != 0.0:
            raise ValueError("jump times must be a nonempty list starting at 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("jump times must be strictly increasing")
        if vals.ndim != 2 or vals.shape[0] != times.size:
            raise ValueError("need one fitness vector per segment")
        for w in vals:
            as_fitness_vector(w)
        if not horizon > 0 or horizon < times[-1]:
            raise ValueError("horizon must be positive and cover every jump time")
        times.setflags(write=False)
        vals.setflags(write=False)
        self.jump_times = times
        self.values = vals
        self.horizon = float(horizon)
        if states is not None:
            states = np.array(states, dtype=np.int64)
            states.setflags(write=False)
        self.states = states

    @property
    def K(self) -> int:
        return self.values.shape[1]

    @property
    def n_jumps(self) -> int:
        return self.jump_times.size - 1

    def segment(self, t: float) -> int:
        if not 0.0 <= t <= self.horizon:
            raise EnvironmentRangeError(f"t={t} outside [0, {self.horizon}]")
        return int(np.searchsorted(self.jump_times, t, side="right")) - 1

    def segment_left(self, t: float) -> int:
        if not 0.0 < t <= self.horizon:
            raise EnvironmentRangeError(f"left limit undefined at t={t}")
        return int(np.searchsorted(self.jump_times, t, side="left")) - 1

    def evaluate(self, t: float) -> np.ndarray:
        return self.values[self.segment(t)]

    def evaluate_left(self, t: float) -> np.ndarray:
        return self.values[self.segment_left(t)]

    def truncated(self, horizon: float) -> "EnvironmentPath":
        if not 0 < horizon:
            raise ValueError("horizon must be positive")
        if horizon > self.horizon:
            raise EnvironmentRangeError(f"path ends at {self.horizon}, asked for {horizon}")
        keep = self.jump_times <= horizon
        states = None if self.states is None else self.states[keep]
        return EnvironmentPath(self.jump_times[keep], self.values[keep], horizon, states)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EnvironmentPath):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and np.array_equal(self.jump_times, other.jump_times)
            and np.array_equal(self.values, other.values)
        )

    # -- text table I/O ---------------------------------------------------

    def to_text(self) -> str:
        """One row per segment: start time, then K fitness values.  The header
        line carries the horizon."""
        buf = io.StringIO()
        buf.write(f"# horizon {self.horizon!r}\n")
        buf.write("# time " + " ".join(f"w{a}" for a in range(self.K)) + "\n")
        for t, w in zip(self.jump_times, self.values):
            buf.write(" ".join(repr(float(x)) for x in (t, *w)) + "\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "EnvironmentPath":
        horizon = None
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "horizon":
                    horizon = float(parts[1])
                continue
            rows.append([float(x) for x in line.replace(",", " ").split()])
        if not rows:
            raise ValueError("no segments in environment table")
        arr = np.array(rows)
        if horizon is None:
            raise ValueError("environment table lacks a '# horizon' line")
        return cls(arr[:, 0], arr[:, 1:], horizon)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "EnvironmentPath":
        with open(path) as fh:
            return cls.from_text(fh.read())


@dataclass(frozen=True, eq=False)
class ConstantEnvironment:
    fitness: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "fitness", as_fitness_vector(self.fitness))

    @property
    def K(self) -> int:
        return self.fitness.shape[0]


@dataclass(frozen=True, eq=False)
class ScheduleEnvironment:
    path: EnvironmentPath

    @property
    def K(self) -> int:
        return self.path.K


@dataclass(frozen=True, eq=False)
class MarkovEnvironment:
    """Continuous-time Markov chain over ``states`` (one fitness vector per row).

    ``initial=None`` starts the chain from its stationary distribution.
    """

    states: np.ndarray
    rate_matrix: np.ndarray
    initial: Optional[np.ndarray] = None

    def __post_init__(self):
        S = np.array(self.states, dtype=np.float64)
        if S.ndim != 2:
            raise ValueError("states must be a (n_states, K) array")
        for w in S:
            as_fitness_vector(w)
        S.setflags(write=False)
        Q = np.array(self.rate_matrix, dtype=np.float64)
        n = S.shape[0]
        if Q.shape != (n, n):
            raise InvalidRateMatrix(f"rate matrix must be {n}x{n}")
        off = Q - np.diag(np.diag(Q))
        if np.any(off < 0):
            raise InvalidRateMatrix("off-diagonal rates must be nonnegative")
        if np.any(np.abs(Q.sum(axis=1)) > PROB_ATOL * max(1.0, float(np.abs(Q).max()))):
            raise InvalidRateMatrix("rows of the rate matrix must sum to 0")
        Q.setflags(write=False)
        object.__setattr__(self, "states", S)
        object.__setattr__(self, "rate_matrix", Q)
        if self.initial is not None:
            object.__setattr__(self, "initial", as_prob_vector(self.initial, n))

    @property
    def K(self) -> int:
        return self.states.shape[1]

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    def is_irreducible(self) -> bool:
        if self.n_states == 1:
            return True
        adj = (self.rate_matrix - np.diag(np.diag(self.rate_matrix))) > 0
        n_comp, _ = connected_components(adj, directed=True, connection="strong")
        return n_comp == 1

    def initial_law(self) -> np.ndarray:
        if self.initial is None:
            return stationary_distribution(self)
        return self.initial

    def stationary(self) -> "MarkovEnvironment":
        return MarkovEnvironment(self.states, self.rate_matrix, stationary_distribution(self))

    def time_reversed(self) -> "MarkovEnvironment":
        """Stationary chain whose paths are time-reversals of stationary paths
        of this one: ``Q^_{ij} = pi_j Q_{ji} / pi_i``."""
        pi = stationary_distribution(self)
        Qr = (self.rate_matrix.T * pi[None, :]) / pi[:, None]
        np.fill_diagonal(Qr, 0.0)
        np.fill_diagonal(Qr, -Qr.sum(axis=1))
        return MarkovEnvironment(self.states, Qr, pi)


EnvironmentProcess = Union[ConstantEnvironment, ScheduleEnvironment, MarkovEnvironment]


def stationary_distribution(proc: MarkovEnvironment) -> np.ndarray:
    """Unique ``pi`` with ``pi Q = 0`` and ``sum(pi) = 1``."""
    if not proc.is_irreducible():
        raise ReducibleChain("rate matrix is reducible; stationary law is not unique")
    n = proc.n_states
    if n == 1:
        return np.ones(1)
    Q = proc.rate_matrix
    A = np.vstack([Q.T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    resid = float(np.max(np.abs(pi @ Q)))
    if resid > 1e-10 * max(1.0, float(np.abs(Q).max())):
        raise ReducibleChain(f"stationary solve residual {resid:.3g} too large")
    return pi


class MarkovPathSampler:
    """Draws a Markov environment path segment by segment, so a caller can
    extend it on demand without fixing the horizon up front."""

    def __init__(self, proc: MarkovEnvironment, rng: np.random.Generator, start_state=None):
        self.proc = proc
        self.rng = rng
        Q = proc.rate_matrix
        self._exit = -np.diag(Q)
        with np.errstate(invalid="ignore", divide="ignore"):
            jump = (Q - np.diag(np.diag(Q))) / self._exit[:, None]
        self._jump = np.nan_to_num(jump)
        if start_state is None:
            start_state = int(rng.choice(proc.n_states, p=proc.initial_law()))
        self.times = [0.0]
        self.state_ids = [int(start_state)]
        self._next_jump = self._hold(self.state_ids[-1])

    def _hold(self, s: int) -> float:
        rate = self._exit[s]
        return self.times[-1] + (self.rng.exponential(1.0 / rate) if rate > 0 else math.inf)

    def extend_to(self, t: float) -> None:
        while self._next_jump <= t:
            s = self.state_ids[-1]
            nxt = int(self.rng.choice(self.proc.n_states, p=self._jump[s]))
            self.times.append(self._next_jump)
            self.state_ids.append(nxt)
            self._next_jump = self._hold(nxt)

    def state_at(self, t: float) -> int:
        """Right-continuous state at ``t``."""
        self.extend_to(t)
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.state_ids[i]

    def value_at(self, t: float) -> np.ndarray:
        return self.proc.states[self.state_at(t)]

    def path(self, horizon: float) -> EnvironmentPath:
        self.extend_to(horizon)
        k = int(np.searchsorted(self.times, horizon, side="right"))
        ids = self.state_ids[:k]
        return EnvironmentPath(self.times[:k], self.proc.states[ids], horizon, ids)


def sample_path(proc: EnvironmentProcess, horizon: float, rng: np.random.Generator) -> EnvironmentPath:
    """Realise one trajectory of ``proc`` on ``[0, horizon]``.

    ``rng`` should be a stream reserved for the environment so that paths are
    independent of the event clocks of the population or the dual.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if isinstance(proc, ConstantEnvironment):
        return EnvironmentPath([0.0], [proc.fitness], horizon)
    if isinstance(proc, ScheduleEnvironment):
        return proc.path.truncated(horizon)
    if isinstance(proc, MarkovEnvironment):
        return MarkovPathSampler(proc, rng).path(horizon)
    raise TypeError(f"unknown environment process {type(proc).__name__}")


def occupation_fractions(path: EnvironmentPath, n_states: int, start: float = 0.0) -> np.ndarray:
    """Fraction of ``[start, horizon]`` spent in each Markov state."""
    ends = np.append(path.jump_times[1:], path.horizon)
    starts = np.maximum(path.jump_times, start)
    dur = np.clip(ends - starts, 0.0, None)
    occ = np.bincount(path.states, weights=dur, minlength=n_states)
    return occ / (path.horizon - start)
