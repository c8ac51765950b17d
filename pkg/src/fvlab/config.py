"""Experiment configuration files.

A config is a YAML mapping.  Shared sections::

    experiment: duality-check     # or generator-check, degree-chain, ...
    seed: 12345                   # mandatory (here or on the command line)
    replicates: 100000
    time: 1.0
    model:
      gamma: 1.0
      alpha: 1.0
      N: 200
      mutation:
        beta_prime: 1.0
        q_prime: [0.5, 0.5]
        beta_double_prime: 0.0          # optional
        q_double_prime: [[1, 0], [0, 1]]  # optional
    environment:
      kind: constant                # constant | schedule | markov
      fitness: [1.0, 0.0]           # constant
      # schedule: either  path: <text table>  or  times / values / horizon
      # markov:   states: [[...], ...]  rates: [[...], ...]  initial: [...]
    initial:
      counts: [100, 100]            # or  frequencies: [0.5, 0.5]  (iid types)
    function:
      indicator: 0                  # or  tensor: nested list
                                    # or  product: [[...], [...]]

Experiment-specific keys are listed in ``EXPERIMENT_KEYS``.  Unknown keys
anywhere raise :class:`ConfigError`.
"""
from __future__ import annotations

import os

import numpy as np
import yaml

from .environment import ConstantEnvironment, EnvironmentPath, MarkovEnvironment, ScheduleEnvironment
from .errors import ConfigError
from .polynomial import DualFunction
from .typespace import EmpiricalMeasure, ModelParams, MutationKernel, as_prob_vector

EXPERIMENTS = (
    "duality-check",
    "generator-check",
    "degree-chain",
    "ergodic-limit",
    "moran-sim",
    "dual-sim",
)

COMMON_KEYS = {"experiment", "seed", "replicates", "model", "environment", "function", "workers", "sigma"}

EXPERIMENT_KEYS = {
    "duality-check": {"initial", "time", "mode", "dual_replicates", "engine", "bias_c", "degree_cap"},
    "generator-check": {
        "instances", "max_K", "max_degree", "tolerance", "N_values", "frequencies",
        "slope_range", "fitness",
    },
    "degree-chain": {"cases", "fitness", "initial_horizon", "max_extensions", "absorption", "degree_cap"},
    "ergodic-limit": {
        "time", "forward_replicates", "dual_replicates", "bias_c", "stabilization_time",
        "engine", "degree_cap",
    },
    "moran-sim": {"initial", "time", "sample_times", "engine"},
    "dual-sim": {"time", "m0", "degree_cap"},
}

MODEL_KEYS = {"gamma", "alpha", "N", "mutation"}
MUTATION_KEYS = {"beta_prime", "q_prime", "beta_double_prime", "q_double_prime"}
ENV_KEYS = {
    "constant": {"kind", "fitness"},
    "schedule": {"kind", "path", "times", "values", "horizon"},
    "markov": {"kind", "states", "rates", "initial"},
}
INITIAL_KEYS = {"counts", "frequencies"}
FUNCTION_KEYS = {"indicator", "tensor", "product", "constant"}
ABSORPTION_KEYS = {"replicates", "degree"}
CASE_KEYS = {"beta_prime", "alpha"}


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def validate(cfg: dict) -> dict:
    """Check the key layout of a parsed config; returns it unchanged."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}; got {exp!r}")
    _reject_unknown(cfg, COMMON_KEYS | EXPERIMENT_KEYS[exp], "config")
    if "model" in cfg:
        _reject_unknown(cfg["model"], MODEL_KEYS, "model")
        if "mutation" in cfg["model"]:
            _reject_unknown(cfg["model"]["mutation"], MUTATION_KEYS, "model.mutation")
    if "environment" in cfg:
        env = cfg["environment"]
        kind = env.get("kind") if isinstance(env, dict) else None
        if kind not in ENV_KEYS:
            raise ConfigError(f"environment.kind must be one of {', '.join(ENV_KEYS)}")
        _reject_unknown(env, ENV_KEYS[kind], "environment")
    if "initial" in cfg:
        _reject_unknown(cfg["initial"], INITIAL_KEYS, "initial")
    if "function" in cfg:
        _reject_unknown(cfg["function"], FUNCTION_KEYS, "function")
    if "absorption" in cfg:
        _reject_unknown(cfg["absorption"], ABSORPTION_KEYS, "absorption")
    for k, case in enumerate(cfg.get("cases", []) or []):
        _reject_unknown(case, CASE_KEYS, f"cases[{k}]")
    if "mode" in cfg and cfg["mode"] not in ("quenched", "annealed"):
        raise ConfigError("mode must be 'quenched' or 'annealed'")
    return cfg


def load_config(path) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            cfg = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    cfg = validate(cfg)
    cfg["_base_dir"] = os.path.dirname(os.path.abspath(path))
    return cfg


def require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing required key {key!r}")
    return cfg[key]


def _wrap(fn, *args):
    try:
        return fn(*args)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def build_params(model: dict) -> ModelParams:
    def go():
        mut = require(model, "mutation")
        kern = MutationKernel(
            float(require(mut, "beta_prime")),
            require(mut, "q_prime"),
            float(mut.get("beta_double_prime", 0.0)),
            mut.get("q_double_prime"),
        )
        N = model.get("N")
        return ModelParams(float(require(model, "gamma")), float(model.get("alpha", 0.0)), kern,
                           None if N is None else int(N))

    return _wrap(go)


def build_environment(env: dict, base_dir: str = "."):
    def go():
        kind = env["kind"]
        if kind == "constant":
            return ConstantEnvironment(require(env, "fitness"))
        if kind == "schedule":
            if "path" in env:
                return ScheduleEnvironment(EnvironmentPath.load(os.path.join(base_dir, env["path"])))
            return ScheduleEnvironment(
                EnvironmentPath(require(env, "times"), require(env, "values"), float(require(env, "horizon")))
            )
        return MarkovEnvironment(require(env, "states"), require(env, "rates"), env.get("initial"))

    return _wrap(go)


def build_function(section: dict, K: int) -> DualFunction:
    def go():
        if len(section) != 1:
            raise ConfigError("function needs exactly one of indicator, tensor, product, constant")
        (kind, val), = section.items()
        if kind == "indicator":
            return DualFunction.indicator(int(val), K)
        if kind == "constant":
            return DualFunction.constant(float(val), K)
        if kind == "product":
            return DualFunction.product(*val)
        return DualFunction(np.array(val, dtype=np.float64), K)

    f = _wrap(go)
    if f.K != K:
        raise ConfigError(f"function has K={f.K}, model has K={K}")
    return f


def build_initial(section: dict, N: int, K: int):
    """``EmpiricalMeasure`` for explicit counts, probability vector for iid types."""
    def go():
        if len(section) != 1:
            raise ConfigError("initial needs exactly one of counts, frequencies")
        if "counts" in section:
            m = EmpiricalMeasure(section["counts"])
            if m.N != N or m.K != K:
                raise ConfigError(f"initial counts must have length {K} and sum to N={N}")
            return m
        return as_prob_vector(section["frequencies"], K)

    return _wrap(go)


def mean_measure(init) -> np.ndarray:
    """Deterministic initial frequencies, or the iid law."""
    if isinstance(init, EmpiricalMeasure):
        return init.frequencies()
    return np.asarray(init, dtype=np.float64)


def echo(cfg: dict) -> dict:
    """Config as echoed in reports: execution-only keys dropped."""
    return {k: v for k, v in cfg.items() if k not in ("workers", "_base_dir")}
