"""Named experiments, verdicts and reports.

Each ``run_*`` function takes a validated config mapping (see
:mod:`fvlab.config`) and returns a :class:`Report`.  Reports are determined
by the config and its seed; the wall time is the only field that is not,
and it is left out of :meth:`Report.to_json` with ``include_timing=False``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from . import config as C
from .dual import (
    DEFAULT_DEGREE_CAP,
    estimate_dual_limit,
    estimate_dual_moment,
    run_dual,
    simulate_dual,
)
from .environment import ConstantEnvironment, MarkovEnvironment, sample_path
from .errors import ConfigError, MonotonicityViolation
from .generators import dual_generator, fv_generator, generator_bound, moran_generator
from .moran import estimate_moran_moment, simulate_counts, simulate_moran, ParticleState
from .polynomial import DualFunction
from .stats import (
    SHARED,
    STREAM_DUAL,
    STREAM_ENV,
    STREAM_FORWARD,
    STREAM_INIT,
    STREAM_INSTANCE,
    Estimate,
    pooled_se,
    run_replicates,
    stream,
)
from .typespace import EmpiricalMeasure, ModelParams, MutationKernel, extension_gap, product_moment


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "value": self.value,
            "threshold": self.threshold,
            "detail": self.detail,
        }


def _clean(x: Any) -> Any:
    if isinstance(x, Estimate):
        return x.to_dict()
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    return x


class Report:
    """Config echo, metrics, verdicts, optional tables, wall time."""

    def __init__(self, experiment: str, cfg: dict):
        self.experiment = experiment
        self.config = C.echo(cfg)
        self.metrics: dict = {}
        self.verdicts: list[Verdict] = []
        self.tables: dict = {}
        self.wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def check(self, name: str, value: float, threshold: float, passed: Optional[bool] = None, detail: str = "") -> Verdict:
        """Record ``value <= threshold`` (or an explicit outcome)."""
        ok = bool(value <= threshold) if passed is None else bool(passed)
        v = Verdict(name, ok, float(value), float(threshold), detail)
        self.verdicts.append(v)
        return v

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "experiment": self.experiment,
            "config": self.config,
            "metrics": self.metrics,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "passed": self.passed,
        }
        if self.tables:
            d["tables"] = {k: {"header": h, "rows": rows} for k, (h, rows) in self.tables.items()}
        if include_timing:
            d["wall_time"] = self.wall_time
        return _clean(d)

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2) + "\n"

    def to_csv(self, include_timing: bool = True) -> str:
        """Long-form table ``section,name,field,value``; tables follow as
        ``table:<name>`` sections with one row per table row."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["section", "name", "field", "value"])
        d = self.to_dict(include_timing)

        def flat(prefix, obj):
            if isinstance(obj, dict):
                for k, v in obj.items():
                    yield from flat(f"{prefix}.{k}" if prefix else k, v)
            elif isinstance(obj, list) and obj and isinstance(obj[0], (dict, list)):
                for i, v in enumerate(obj):
                    yield from flat(f"{prefix}[{i}]", v)
            else:
                yield prefix, obj

        for name, val in flat("", d["metrics"]):
            head, _, field = name.rpartition(".")
            wr.writerow(["metric", head or field, field if head else "value", json.dumps(val)])
        for v in d["verdicts"]:
            for k in ("passed", "value", "threshold", "detail"):
                wr.writerow(["verdict", v["name"], k, json.dumps(v[k])])
        wr.writerow(["summary", self.experiment, "passed", json.dumps(d["passed"])])
        if include_timing:
            wr.writerow(["summary", self.experiment, "wall_time", json.dumps(d["wall_time"])])
        for tname, tab in d.get("tables", {}).items():
            wr.writerow([f"table:{tname}"] + list(tab["header"]))
            for row in tab["rows"]:
                wr.writerow([f"table:{tname}"] + [json.dumps(x) for x in row])
        return buf.getvalue()

    def render(self, fmt: str = "json", include_timing: bool = True) -> str:
        if fmt == "json":
            return self.to_json(include_timing)
        if fmt == "csv":
            return self.to_csv(include_timing)
        raise ValueError(f"unknown format {fmt!r}")

    def summary_lines(self) -> list[str]:
        return [
            f"{'PASS' if v.passed else 'FAIL'}  {v.name}: {v.value:.6g} (threshold {v.threshold:.6g}) {v.detail}".rstrip()
            for v in self.verdicts
        ]


# -- shared helpers --------------------------------------------------------


def _seed(cfg: dict) -> int:
    s = cfg.get("seed")
    if s is None:
        raise ConfigError("a master seed is required")
    s = int(s)
    if s < 0:
        raise ConfigError("seed must be nonnegative")
    return s


def _workers(cfg: dict) -> int:
    return max(1, int(cfg.get("workers", 1)))


def _sigma(cfg: dict) -> float:
    return float(cfg.get("sigma", 3.0))


def _model(cfg: dict) -> ModelParams:
    return C.build_params(C.require(cfg, "model"))


def _environment(cfg: dict):
    return C.build_environment(C.require(cfg, "environment"), cfg.get("_base_dir", "."))


def _timed(fn):
    def wrapper(cfg: dict) -> Report:
        C.validate({k: v for k, v in cfg.items() if k != "_base_dir"})
        t0 = time.perf_counter()
        rep = fn(cfg)
        rep.wall_time = time.perf_counter() - t0
        return rep

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# -- experiments -------------------------------------------------------------


@_timed
def run_duality_check(cfg: dict) -> Report:
    """Forward Moran moment against the dual moment at one time ``t``.

    Verdict: ``|forward - backward| <= sigma * pooled SE + bias_c / N``.
    """
    rep = Report("duality-check", cfg)
    seed, workers, sigma = _seed(cfg), _workers(cfg), _sigma(cfg)
    params = _model(cfg)
    if params.N is None:
        raise ConfigError("model.N is required for the forward side")
    env = _environment(cfg)
    K, N = params.K, params.N
    f = C.build_function(C.require(cfg, "function"), K)
    init = C.build_initial(C.require(cfg, "initial"), N, K)
    m0 = C.mean_measure(init)
    t = float(C.require(cfg, "time"))
    n_fwd = int(C.require(cfg, "replicates"))
    n_bwd = int(cfg.get("dual_replicates", n_fwd))
    quenched = cfg.get("mode", "quenched") == "quenched"
    bias_c = float(cfg.get("bias_c", 0.5))
    cap = int(cfg.get("degree_cap", DEFAULT_DEGREE_CAP))
    path = None
    if quenched and t > 0:
        path = sample_path(env, t, stream(seed, STREAM_ENV, SHARED))
        rep.metrics["environment_path"] = {"n_jumps": path.n_jumps, "horizon": path.horizon}
    fwd = estimate_moran_moment(params, env, init, f, t, n_fwd, seed, quenched, path,
                                engine=cfg.get("engine", "counts"), workers=workers)
    bwd = estimate_dual_moment(params, env, f, m0, t, n_bwd, seed, quenched, path,
                               degree_cap=cap, workers=workers)
    diff = abs(fwd.mean - bwd.mean)
    se = pooled_se(fwd, bwd)
    allowance = bias_c / N
    rep.metrics.update({
        "mode": "quenched" if quenched else "annealed",
        "forward": fwd,
        "backward": bwd,
        "abs_difference": diff,
        "pooled_se": se,
        "bias_allowance": allowance,
    })
    rep.check("duality", diff, sigma * se + allowance,
              detail=f"|fwd-bwd| <= {sigma}*pooled_se + {bias_c}/N")
    return rep


def _random_instance(rng: np.random.Generator, max_K: int, max_degree: int):
    K = int(rng.integers(2, max_K + 1))
    n = int(rng.integers(0, max_degree + 1))
    kern = MutationKernel(
        float(rng.uniform(0.0, 2.0)),
        rng.dirichlet(np.ones(K)),
        float(rng.uniform(0.0, 2.0)),
        rng.dirichlet(np.ones(K), size=K),
    )
    params = ModelParams(float(rng.uniform(0.1, 3.0)), float(rng.uniform(0.0, 3.0)), kern)
    f = DualFunction(rng.uniform(-1.0, 1.0, size=(K,) * n), K)
    return params, f, rng.dirichlet(np.ones(K)), rng.uniform(0.0, 1.0, size=K)


def _loglog_slope(N_values, gaps) -> float:
    return float(np.polyfit(np.log(np.asarray(N_values, float)), np.log(np.asarray(gaps, float)), 1)[0])


@_timed
def run_generator_check(cfg: dict) -> Report:
    """Exact generator identities and the Moran-to-FV convergence rate."""
    rep = Report("generator-check", cfg)
    seed = _seed(cfg)
    n_inst = int(cfg.get("instances", 200))
    max_K = int(cfg.get("max_K", 4))
    max_deg = int(cfg.get("max_degree", 4))
    tol = float(cfg.get("tolerance", 1e-10))
    rng = stream(seed, STREAM_INSTANCE, 0)
    gaps, ratios = [], []
    for _ in range(n_inst):
        params, f, m, w = _random_instance(rng, max_K, max_deg)
        a = fv_generator(params, w, f, m)
        b = dual_generator(params, w, f, m)
        gaps.append(abs(a - b))
        bound = generator_bound(params, f)
        ratios.append(abs(a) / bound if bound > 0 else 0.0)
    max_gap = max(gaps) if gaps else 0.0
    rep.metrics["duality_identity"] = {"instances": n_inst, "max_gap": max_gap, "mean_gap": float(np.mean(gaps))}
    rep.check("generator_duality_gap", max_gap, tol)
    rep.metrics["generator_bound"] = {"max_ratio": max(ratios) if ratios else 0.0}
    rep.check("generator_bound", max(ratios) if ratios else 0.0, 1.0, detail="|G f| / bound")

    # N sweep at fixed frequencies
    rng = stream(seed, STREAM_INSTANCE, 1)
    if "model" in cfg:
        params = _model(cfg)
    else:
        params = ModelParams(1.0, 2.0, MutationKernel(1.0, [0.4, 0.6], 0.5, [[0.9, 0.1], [0.2, 0.8]]))
    K = params.K
    f = C.build_function(cfg["function"], K) if "function" in cfg else DualFunction(rng.uniform(-1, 1, (K, K)), K)
    w = np.asarray(cfg.get("fitness", np.linspace(0.9, 0.2, K)), float)
    freqs = np.asarray(cfg.get("frequencies", [0.3] + [0.7 / (K - 1)] * (K - 1)), float)
    N_values = [int(x) for x in cfg.get("N_values", [10, 100, 1000, 10000])]
    lo, hi = cfg.get("slope_range", [-1.3, -0.7])
    gen_gaps, ext_gaps = [], []
    for N in N_values:
        counts = np.rint(freqs * N).astype(np.int64)
        if counts.sum() != N or np.any(np.abs(counts - freqs * N) > 1e-9):
            raise ConfigError(f"frequencies {freqs.tolist()} are not multiples of 1/{N}")
        m = EmpiricalMeasure(counts)
        gen_gaps.append(abs(moran_generator(params, w, f, m) - fv_generator(params, w, f, m.frequencies())))
        ext_gaps.append(extension_gap(m, f))
    s_gen = _loglog_slope(N_values, gen_gaps)
    s_ext = _loglog_slope(N_values, ext_gaps)
    rep.metrics["moran_sweep"] = {
        "N": N_values,
        "generator_gap": gen_gaps,
        "N_times_generator_gap": [N * g for N, g in zip(N_values, gen_gaps)],
        "extension_gap": ext_gaps,
        "generator_slope": s_gen,
        "extension_slope": s_ext,
        "degree": f.degree,
    }
    rep.tables["moran_sweep"] = (["N", "generator_gap", "extension_gap"],
                                 [[N, g, e] for N, g, e in zip(N_values, gen_gaps, ext_gaps)])
    rep.check("moran_generator_slope", s_gen, hi, passed=lo <= s_gen <= hi, detail=f"slope in [{lo}, {hi}]")
    rep.check("extension_gap_slope", s_ext, hi, passed=lo <= s_ext <= hi, detail=f"slope in [{lo}, {hi}]")
    return rep


def run_with_extension(params, fitness_at, init, rng, initial_horizon, max_extensions, degree_cap):
    """Run the dual on ``[0, H]``, then keep extending by ``H`` until it absorbs.

    Continuing a run is legitimate because the event clocks are memoryless.
    Returns ``(log, final_f, elapsed, absorbed)``.
    """
    log = []
    f = init
    start = 0.0
    for _ in range(max_extensions + 1):
        st = run_dual(params, lambda s, o=start: fitness_at(o + s), initial_horizon, f, rng, degree_cap)
        log.extend((start + r.time, r) for r in st.jump_log)
        f = st.f
        start += st.elapsed if st.absorbed else initial_horizon
        if st.absorbed:
            return log, f, start, True
    return log, f, start, False


def _tau_summary(taus: np.ndarray) -> dict:
    if taus.size == 0:
        return {}
    q = np.quantile(taus, [0.1, 0.5, 0.9, 0.99])
    return {
        "mean": math.fsum(taus) / taus.size,
        "q10": q[0], "median": q[1], "q90": q[2], "q99": q[3],
        "max": float(taus.max()),
    }


@_timed
def run_degree_chain(cfg: dict) -> Report:
    """Degree chain of the dual: first move out of degree 1, and absorption.

    Each case runs the dual from a degree-1 function until its degree first
    changes and compares the death fraction with ``beta' / (beta' + alpha)``.
    The ``absorption`` block runs the base model from random degree-``degree``
    functions under the horizon-extension policy and summarises the
    absorption times.
    """
    rep = Report("degree-chain", cfg)
    seed, sigma = _seed(cfg), _sigma(cfg)
    base = _model(cfg)
    K = base.K
    reps = int(cfg.get("replicates", 10_000))
    cap = int(cfg.get("degree_cap", DEFAULT_DEGREE_CAP))
    H = float(cfg.get("initial_horizon", 10.0))
    max_ext = int(cfg.get("max_extensions", 20))
    w = np.asarray(cfg.get("fitness", np.linspace(0.8, 0.3, K)), float)
    f1 = C.build_function(cfg["function"], K) if "function" in cfg else DualFunction.indicator(0, K)
    if f1.degree != 1:
        raise ConfigError("degree-chain needs a degree-1 starting function")
    cases = cfg.get("cases") or [{"beta_prime": 1.0, "alpha": 1.0}, {"beta_prime": 3.0, "alpha": 1.0},
                                 {"beta_prime": 1.0, "alpha": 3.0}]
    fitness_at = lambda s: w  # noqa: E731
    rep.metrics["cases"] = []
    bad_steps = 0
    violations = 0
    for c, case in enumerate(cases):
        bp, a = float(case["beta_prime"]), float(case["alpha"])
        kern = MutationKernel(bp, base.kernel.q_prime, base.kernel.beta_double_prime, base.kernel.q_double_prime)
        params = ModelParams(base.gamma, a, kern)
        deaths = births = 0
        for r in range(reps):
            rng = stream(seed, STREAM_DUAL, c, r)
            try:
                st = run_dual(params, fitness_at, H * (max_ext + 1), f1, rng, cap, stop_on_degree_change=True)
            except MonotonicityViolation:
                violations += 1
                continue
            bad_steps += sum(1 for rec in st.jump_log if not _valid_step(rec))
            first = next((rec for rec in st.jump_log if rec.degree_after != rec.degree_before), None)
            if first is not None:
                if first.degree_after < first.degree_before:
                    deaths += 1
                else:
                    births += 1
        moved = deaths + births
        p = bp / (bp + a)
        frac = deaths / moved if moved else float("nan")
        sd = math.sqrt(p * (1 - p) / moved) if moved else float("nan")
        rep.metrics["cases"].append({
            "beta_prime": bp, "alpha": a, "replicates": reps,
            "first_move_deaths": deaths, "first_move_births": births,
            "death_fraction": frac, "predicted": p, "binomial_sd": sd,
        })
        rep.check(f"first_move_death[beta'={bp:g},alpha={a:g}]", abs(frac - p), sigma * sd,
                  passed=moved > 0 and abs(frac - p) <= sigma * sd,
                  detail=f"fraction {frac:.4f} vs {p:.4f}")

    absorption = cfg.get("absorption", {"replicates": 0})
    n_abs = int(absorption.get("replicates", 0))
    if n_abs:
        deg = int(absorption.get("degree", 4))
        taus = []
        absorbed = 0
        for r in range(n_abs):
            rng = stream(seed, STREAM_DUAL, len(cases), r)
            f = DualFunction(rng.uniform(-1, 1, (K,) * deg), K)
            try:
                log, g, el, ok = run_with_extension(base, fitness_at, f, rng, H, max_ext, cap)
            except MonotonicityViolation:
                violations += 1
                continue
            bad_steps += sum(1 for _, rec in log if not _valid_step(rec))
            if ok:
                absorbed += 1
                taus.append(el)
        taus = np.asarray(taus)
        rep.metrics["absorption"] = {"replicates": n_abs, "initial_degree": deg,
                                     "absorbed_fraction": absorbed / n_abs,
                                     "tau": _tau_summary(taus)}
        rep.check("absorption_from_high_degree", 1.0 - absorbed / n_abs, 0.0)
        if taus.size:
            hist, edges = np.histogram(taus, bins=20)
            rep.tables["tau_histogram"] = (["lo", "hi", "count"],
                                           [[edges[i], edges[i + 1], int(hist[i])] for i in range(hist.size)])
    rep.metrics["invalid_degree_steps"] = bad_steps
    rep.metrics["monotonicity_violations"] = violations
    rep.check("degree_steps_birth_death", bad_steps, 0)
    rep.check("sup_norm_monotone", violations, 0)
    return rep


def _valid_step(rec) -> bool:
    expected = {"resample": -1, "mutP": -1, "mutPP": 0, "select": 1}[rec.kind]
    return rec.raw_degree - rec.degree_before == expected and rec.degree_after <= rec.raw_degree


@_timed
def run_ergodic_limit(cfg: dict) -> Report:
    """Long-time limit from the dual, checked against forward runs.

    The dual side estimates the limit of ``E <mu_t, 1_a>`` for every allele
    ``a`` under a stationary environment.  Verdicts: the limits sum to one;
    with ``alpha = 0`` they equal the stationary law of the mutation chain;
    forward runs from two point masses agree with them at time ``t`` up to
    ``sigma`` pooled SE plus ``bias_c / N``; the joint moments
    ``E[<mu_t, 1_0> 1{e_t = state}]`` agree at ``t`` and at
    ``stabilization_time``.
    """
    rep = Report("ergodic-limit", cfg)
    seed, workers, sigma = _seed(cfg), _workers(cfg), _sigma(cfg)
    params = _model(cfg)
    env = _environment(cfg)
    if isinstance(env, MarkovEnvironment):
        if not env.is_irreducible():
            raise ConfigError("ergodic-limit needs an irreducible environment chain")
    elif not isinstance(env, ConstantEnvironment):
        raise ConfigError("ergodic-limit needs a markov or constant environment")
    K = params.K
    n_dual = int(cfg.get("dual_replicates", cfg.get("replicates", 10_000)))
    cap = int(cfg.get("degree_cap", DEFAULT_DEGREE_CAP))
    limits = [
        estimate_dual_limit(params, env, DualFunction.indicator(a, K), n_dual, seed,
                            degree_cap=cap, workers=workers, stream_key=(a,))
        for a in range(K)
    ]
    rep.metrics["dual_limit"] = {f"allele_{a}": e for a, e in enumerate(limits)}
    total = math.fsum(e.mean for e in limits)
    total_se = math.sqrt(math.fsum(e.variance / e.count for e in limits))
    rep.metrics["dual_limit_sum"] = {"value": total, "se": total_se}
    rep.check("limits_sum_to_one", abs(total - 1.0), sigma * total_se + 1e-12)
    if "function" in cfg:
        f = C.build_function(cfg["function"], K)
        rep.metrics["dual_limit_function"] = estimate_dual_limit(
            params, env, f, n_dual, seed, degree_cap=cap, workers=workers, stream_key=(K,))
    if params.alpha == 0:
        pi = params.kernel.stationary_law()
        rep.metrics["mutation_stationary_law"] = pi
        for a in range(K):
            e = limits[a]
            rep.check(f"neutral_limit[{a}]", abs(e.mean - pi[a]), sigma * e.se + 1e-12,
                      detail=f"dual {e.mean:.5f} vs stationary law {pi[a]:.5f}")

    n_fwd = int(cfg.get("forward_replicates", 0))
    if n_fwd:
        if params.N is None:
            raise ConfigError("model.N is required for forward runs")
        N = params.N
        t = float(C.require(cfg, "time"))
        t_mid = float(cfg.get("stabilization_time", t / 2))
        allowance = float(cfg.get("bias_c", 1.0)) / N
        rep.metrics["forward"] = {"time": t, "N": N, "bias_allowance": allowance}
        n_states = env.n_states if isinstance(env, MarkovEnvironment) else 1
        sample_times = np.array([t_mid, t])
        for k, start in enumerate(sorted({0, K - 1})):
            c0 = np.zeros(K, np.int64)
            c0[start] = N
            freq = np.empty((n_fwd, 2, K))
            state = np.zeros((n_fwd, 2), np.int64)

            def one(r, k=k, c0=c0):
                path = sample_path(env, t, stream(seed, STREAM_ENV, K + 1 + k, r))
                tr = simulate_counts(params, path, c0, t, sample_times, stream(seed, STREAM_FORWARD, k, r))
                freq[r] = tr.frequencies()
                if path.states is not None:
                    state[r] = [path.states[path.segment(s)] for s in sample_times]
                return 0.0

            run_replicates(one, n_fwd, workers)
            entry = {}
            for a in range(K):
                fe = Estimate.from_values(freq[:, 1, a])
                entry[f"allele_{a}"] = fe
                se = pooled_se(fe, limits[a])
                rep.check(f"forward_vs_dual[start={start},allele={a}]", abs(fe.mean - limits[a].mean),
                          sigma * se + allowance,
                          detail=f"forward {fe.mean:.5f} vs dual {limits[a].mean:.5f}")
            joint = {}
            for s in range(n_states):
                late = freq[:, 1, 0] * (state[:, 1] == s)
                early = freq[:, 0, 0] * (state[:, 0] == s)
                d = Estimate.from_values(late - early)
                joint[f"state_{s}"] = {"t": Estimate.from_values(late), "stabilization_time": Estimate.from_values(early),
                                       "paired_difference": d}
                rep.check(f"joint_moment_stable[start={start},state={s}]", abs(d.mean), sigma * d.se + 1e-12)
            entry["joint_moment"] = joint
            rep.metrics["forward"][f"start_{start}"] = entry
    return rep


@_timed
def run_moran_sim(cfg: dict) -> Report:
    """One forward trajectory, exported as a table of allele counts."""
    rep = Report("moran-sim", cfg)
    seed = _seed(cfg)
    params = _model(cfg)
    if params.N is None:
        raise ConfigError("model.N is required")
    env = _environment(cfg)
    K, N = params.K, params.N
    t = float(C.require(cfg, "time"))
    init = C.build_initial(C.require(cfg, "initial"), N, K)
    if isinstance(init, EmpiricalMeasure):
        counts = np.array(init.counts)
    else:
        counts = stream(seed, STREAM_INIT, 0).multinomial(N, init)
    ts = cfg.get("sample_times")
    ts = np.linspace(0.0, t, 11) if ts is None else np.asarray(ts, float)
    path = sample_path(env, t, stream(seed, STREAM_ENV, SHARED))
    engine = cfg.get("engine", "particles")
    if engine == "particles":
        tr = simulate_moran(params, path, ParticleState.from_counts(counts), t, ts,
                            np.random.SeedSequence(seed, spawn_key=(STREAM_FORWARD, 0)))
    elif engine == "counts":
        tr = simulate_counts(params, path, counts, t, ts, stream(seed, STREAM_FORWARD, 0))
    else:
        raise ConfigError(f"unknown engine {engine!r}")
    rep.metrics["final_counts"] = tr.counts[-1]
    rep.metrics["environment_path"] = {"n_jumps": path.n_jumps}
    rep.tables["trajectory"] = (["time"] + [f"n{a}" for a in range(K)],
                                [[float(s)] + [int(x) for x in c] for s, c in zip(tr.sample_times, tr.counts)])
    rep.check("population_conserved", int(np.max(np.abs(tr.counts.sum(axis=1) - N))), 0)
    return rep


@_timed
def run_dual_sim(cfg: dict) -> Report:
    """Dual runs against one environment path, with their jump logs."""
    rep = Report("dual-sim", cfg)
    seed = _seed(cfg)
    params = _model(cfg)
    env = _environment(cfg)
    K = params.K
    f = C.build_function(C.require(cfg, "function"), K)
    t = float(C.require(cfg, "time"))
    reps = int(cfg.get("replicates", 1))
    cap = int(cfg.get("degree_cap", DEFAULT_DEGREE_CAP))
    path = sample_path(env, t, stream(seed, STREAM_ENV, SHARED))
    rows = []
    values = []
    absorbed = 0
    m0 = cfg.get("m0")
    for r in range(reps):
        st = simulate_dual(params, path, t, f, stream(seed, STREAM_DUAL, r), cap)
        absorbed += st.absorbed
        for rec in st.jump_log:
            rows.append([r, rec.time, rec.kind, ";".join(map(str, rec.indices)),
                         rec.degree_before, rec.raw_degree, rec.degree_after, rec.sup_norm_after])
        if m0 is not None:
            values.append(product_moment(np.asarray(m0, float), st.f))
    rep.tables["jump_log"] = (["replicate", "time", "kind", "indices", "degree_before", "raw_degree",
                               "degree_after", "sup_norm_after"], rows)
    rep.metrics["absorbed_fraction"] = absorbed / reps
    rep.metrics["jumps"] = len(rows)
    if values:
        rep.metrics["dual_moment"] = Estimate.from_values(values)
    return rep


EXPERIMENT_RUNNERS = {
    "duality-check": run_duality_check,
    "generator-check": run_generator_check,
    "degree-chain": run_degree_chain,
    "ergodic-limit": run_ergodic_limit,
    "moran-sim": run_moran_sim,
    "dual-sim": run_dual_sim,
}


def run_experiment(cfg: dict) -> Report:
    return EXPERIMENT_RUNNERS[cfg["experiment"]](cfg)
