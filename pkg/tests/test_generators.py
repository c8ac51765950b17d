import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from fvlab import (
    DegreeExceedsPopulation,
    DimensionMismatch,
    DualFunction,
    EmpiricalMeasure,
    EnvironmentPath,
    Estimate,
    ModelParams,
    MutationKernel,
    dual_generator,
    fv_generator,
    generator_bound,
    generator_duality_gap,
    moran_generator,
    moment_without_replacement,
    simulate_counts,
)
from fvlab.stats import stream

import oracles


@st.composite
def instances(draw, max_K=4, max_n=4, min_n=0):
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    K = draw(st.integers(2, max_K))
    n = draw(st.integers(min_n, max_n))
    kern = MutationKernel(rng.uniform(0, 2), rng.dirichlet(np.ones(K)), rng.uniform(0, 2),
                          rng.dirichlet(np.ones(K), size=K))
    p = ModelParams(rng.uniform(0.1, 3), rng.uniform(0, 3), kern)
    f = DualFunction(rng.uniform(-1, 1, (K,) * n), K)
    return p, f, rng.dirichlet(np.ones(K)), rng.uniform(size=K), rng


def _oracle_args(p):
    k = p.kernel
    return p.gamma, p.alpha, k.beta_prime, k.q_prime, k.beta_double_prime, k.q_double_prime


@given(instances(max_K=3, max_n=3))
def test_fv_generator_matches_lattice_sums(inst):
    p, f, m, w, _ = inst
    ref = oracles.fv_generator_sum(*_oracle_args(p), w, f.tensor, m)
    assert abs(fv_generator(p, w, f, m) - ref) <= 1e-12


def test_fv_generator_k2_n2_frozen():
    rng = np.random.default_rng(2024)
    p = ModelParams(1.3, 0.7, MutationKernel(0.9, [0.4, 0.6], 0.4, [[0.8, 0.2], [0.35, 0.65]]))
    f = DualFunction(rng.uniform(-1, 1, (2, 2)), 2)
    m, w = rng.dirichlet([1, 1]), rng.uniform(size=2)
    ref = oracles.fv_generator_sum(*_oracle_args(p), w, f.tensor, m)
    assert abs(fv_generator(p, w, f, m) - ref) <= 1e-12


@given(instances())
def test_duality_identity(inst):
    p, f, m, w, _ = inst
    assert generator_duality_gap(p, w, f, m) <= 1e-10


@given(instances())
def test_trivial_cases(inst):
    p, f, m, w, rng = inst
    c = DualFunction.constant(rng.uniform(-3, 3), p.K)
    assert fv_generator(p, w, c, m) == 0.0
    assert dual_generator(p, w, c, m) == 0.0
    # constant fitness: selection contributes nothing
    flat = np.full(p.K, rng.uniform())
    p0 = ModelParams(p.gamma, 0.0, p.kernel)
    assert abs(fv_generator(p, flat, f, m) - fv_generator(p0, flat, f, m)) <= 1e-12
    assert abs(dual_generator(p, flat, f, m) - dual_generator(p0, flat, f, m)) <= 1e-12


@given(instances())
def test_neutral_dual_equals_fv(inst):
    p, f, m, w, _ = inst
    p0 = ModelParams(p.gamma, 0.0, p.kernel)
    assert abs(dual_generator(p0, w, f, m) - fv_generator(p0, w, f, m)) <= 1e-12


@given(instances(min_n=1), st.floats(-2, 2), st.floats(-2, 2))
def test_generators_are_linear(inst, a, b):
    p, f, m, w, rng = inst
    g = DualFunction(rng.uniform(-1, 1, f.tensor.shape), p.K)
    h = DualFunction(a * f.tensor + b * g.tensor, p.K)
    for gen in (fv_generator, dual_generator):
        lhs = gen(p, w, h, m)
        rhs = a * gen(p, w, f, m) + b * gen(p, w, g, m)
        assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))
    counts = rng.multinomial(7, m)
    if counts.sum() >= f.degree:
        em = EmpiricalMeasure(counts)
        pn = p.with_N(7)
        lhs = moran_generator(pn, w, h, em)
        rhs = a * moran_generator(pn, w, f, em) + b * moran_generator(pn, w, g, em)
        assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))


@given(instances(max_K=3, max_n=3, min_n=1), st.integers(0, 2**31))
def test_moran_generator_matches_individual_events(inst, seed):
    p, f, _, w, _ = inst
    rng = np.random.default_rng(seed)
    N = int(rng.integers(max(f.degree, 2), 6))
    counts = rng.multinomial(N, np.ones(p.K) / p.K)
    ref = oracles.moran_generator_individuals(*_oracle_args(p), w, f.tensor, counts)
    assert abs(moran_generator(p, w, f, EmpiricalMeasure(counts)) - ref) <= 1e-11


def test_moran_generator_single_atom_hand_value():
    # N = n = 2, everyone of type 0, neutral: only mutation moves Phi
    q, Q = np.array([0.3, 0.7]), np.array([[0.6, 0.4], [0.1, 0.9]])
    bp, bpp = 1.5, 0.5
    p = ModelParams(1.0, 2.0, MutationKernel(bp, q, bpp, Q))
    f = DualFunction(np.array([[1.0, -2.0], [4.0, 0.5]]), 2)
    # each individual mutates to a at rate bp q[a] + bpp Q[0, a]; then Phi is the
    # average over the two orders of (f(a, 0) + f(0, a)) / 2
    hand = 2 * sum((bp * q[a] + bpp * Q[0, a]) * ((f(a, 0) + f(0, a)) / 2 - f(0, 0)) for a in range(2))
    assert moran_generator(p, [0.5, 0.5], f, EmpiricalMeasure([2, 0])) == pytest.approx(hand, abs=1e-14)


def test_moran_generator_errors():
    p = ModelParams(1.0, 1.0, MutationKernel(1.0, [0.5, 0.5]))
    with pytest.raises(DegreeExceedsPopulation):
        moran_generator(p, [1, 0], DualFunction(np.ones((2, 2, 2)), 2), EmpiricalMeasure([1, 1]))
    with pytest.raises(DimensionMismatch):
        fv_generator(p, [1, 0, 0], DualFunction.indicator(0, 3), [0.2, 0.3, 0.5])
    assert moran_generator(p, [1, 0], DualFunction.constant(3.0, 2), EmpiricalMeasure([1, 1])) == 0.0


def test_moran_generator_equals_count_chain_rate_matrix():
    # exact: d/dt E Phi(k_t) at t = 0 is (R Phi)(k0)
    N = 12
    q, Q = np.array([0.35, 0.65]), np.array([[0.7, 0.3], [0.2, 0.8]])
    p = ModelParams(1.1, 1.7, MutationKernel(0.8, q, 0.6, Q), N)
    w = np.array([0.9, 0.25])
    f = DualFunction(np.array([[0.3, -0.8], [0.5, 0.1]]), 2)
    R = oracles.two_allele_rate_matrix(N, p.gamma, p.alpha, 0.8, q, 0.6, Q, w)
    phi = np.array([moment_without_replacement(EmpiricalMeasure([k, N - k]), f) for k in range(N + 1)])
    for k in range(N + 1):
        assert moran_generator(p, w, f, EmpiricalMeasure([k, N - k])) == pytest.approx((R @ phi)[k], abs=1e-12)


def test_martingale_sanity():
    # (E Phi(mu_t) - Phi(mu_0)) / t against the generator at t = 0.1, degree 1
    N, t, reps = 40, 0.1, 40_000
    q = np.array([0.2, 0.8])
    p = ModelParams(1.0, 2.0, MutationKernel(2.0, q), N)
    w = np.array([1.0, 0.0])
    f = DualFunction.indicator(0, 2)
    k0 = 30
    m0 = EmpiricalMeasure([k0, N - k0])
    gen = moran_generator(p, w, f, m0)
    env = EnvironmentPath([0.0], [w], t)
    ts = np.array([t])
    vals = [simulate_counts(p, env, m0.counts, t, ts, stream(8, r)).counts[-1, 0] / N for r in range(reps)]
    est = Estimate.from_values((np.asarray(vals) - k0 / N) / t)
    # the O(t) bias, evaluated exactly on the count chain
    R = oracles.two_allele_rate_matrix(N, 1.0, 2.0, 2.0, q, 0.0, np.eye(2), w)
    phi = np.arange(N + 1) / N
    exact = (expm(t * R) @ phi)[k0]
    bias = abs((exact - k0 / N) / t - gen)
    assert abs(est.mean - gen) <= 3 * est.se + bias
    assert abs(est.mean - (exact - k0 / N) / t) <= 3 * est.se


def test_generator_bound_examples():
    p = ModelParams(1.0, 1.5, MutationKernel(0.7, [0.5, 0.5], 0.3))
    assert generator_bound(p, DualFunction.constant(2.0, 2)) == 0.0
    ind = DualFunction.indicator(0, 2)
    assert generator_bound(p, ind) == pytest.approx(4 * p.beta + 2 * p.alpha)
    rng = np.random.default_rng(0)
    for _ in range(100):
        assert abs(fv_generator(p, rng.uniform(size=2), ind, rng.dirichlet([1, 1]))) <= generator_bound(p, ind)


def test_generator_bound_random_degree_three():
    rng = np.random.default_rng(1)
    p = ModelParams(1.2, 0.8, MutationKernel(0.5, [0.2, 0.3, 0.5], 0.4, rng.dirichlet(np.ones(3), size=3)))
    f = DualFunction(rng.uniform(-1, 1, (3, 3, 3)), 3)
    bound = generator_bound(p, f)
    worst = max(abs(fv_generator(p, rng.uniform(size=3), f, rng.dirichlet(np.ones(3)))) for _ in range(1000))
    assert worst <= bound


@given(instances())
def test_generator_bound_never_violated(inst):
    p, f, m, w, _ = inst
    assert abs(fv_generator(p, w, f, m)) <= generator_bound(p, f) * (1 + 1e-12) + 1e-15


def test_unordered_pair_bound_can_fail():
    # resampling alone, f = +1 off the diagonal, -1 on it, uniform m on 4 alleles
    p = ModelParams(1.0, 0.0, MutationKernel(1e-300, [0.25] * 4))
    f = DualFunction(np.where(np.eye(4) > 0, -1.0, 1.0), 4)
    val = fv_generator(p, [0.5] * 4, f, [0.25] * 4)
    assert val == pytest.approx(-1.5, rel=1e-12)
    assert abs(val) > generator_bound(p, f, convention="unordered")
    assert abs(val) <= generator_bound(p, f)
    with pytest.raises(ValueError):
        generator_bound(p, f, convention="other")


def test_moran_gap_decays_like_one_over_n():
    p = ModelParams(1.0, 2.0, MutationKernel(1.0, [0.4, 0.6], 0.5, [[0.9, 0.1], [0.2, 0.8]]))
    f = DualFunction(np.array([[0.3, -0.8], [0.5, 0.1]]), 2)
    w = np.array([0.9, 0.2])
    gaps = []
    for N in (10, 100, 1000):
        m = EmpiricalMeasure([3 * N // 10, 7 * N // 10])
        gaps.append(abs(moran_generator(p.with_N(N), w, f, m) - fv_generator(p, w, f, m.frequencies())))
    C = [N * g for N, g in zip((10, 100, 1000), gaps)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert max(C) / min(C) < 1.2
