import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.stats import chi2, chi2_contingency

from fvlab import (
    ConstantEnvironment,
    DimensionMismatch,
    DualFunction,
    EmpiricalMeasure,
    EnvironmentPath,
    EnvironmentRangeError,
    Estimate,
    MarkovEnvironment,
    ModelParams,
    MoranTrajectory,
    MutationKernel,
    ParticleState,
    estimate_moran_moment,
    product_moment,
    simulate_counts,
    simulate_moran,
)
from fvlab.stats import stream

import oracles


def _params(N, gamma=1.0, alpha=1.0, bp=1.0, q=(0.5, 0.5), bpp=0.0, Q=None):
    return ModelParams(gamma, alpha, MutationKernel(bp, q, bpp, Q), N)


def _flat(w, horizon):
    return EnvironmentPath([0.0], [w], horizon)


def test_one_way_mutation_fixes_allele_zero():
    p = _params(20, alpha=0.0, bp=1.0, q=(1.0, 0.0))
    tr = simulate_moran(p, _flat([0.5, 0.5], 30.0), ParticleState.from_counts([5, 15]), 30.0,
                        np.linspace(0, 30, 31), 1)
    hit = np.flatnonzero(tr.counts[:, 0] == 20)
    assert hit.size and np.all(tr.counts[hit[0]:, 0] == 20)


def test_two_individuals_fix_at_first_resampling():
    p = _params(2, alpha=0.0, bp=1e-9)
    ts = np.linspace(0, 10, 2001)
    for seed in range(20):
        tr = simulate_moran(p, _flat([0.5, 0.5], 10.0), ParticleState([0, 1]), 10.0, ts, seed)
        mixed = tr.counts[:, 0] == 1
        first = np.argmin(mixed) if not mixed.all() else None
        assert first is not None and first > 0
        assert not mixed[first:].any()


@given(st.integers(0, 2**32 - 1))
def test_population_is_conserved(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(2, 4))
    N = int(rng.integers(2, 30))
    p = ModelParams(rng.uniform(0.1, 2), rng.uniform(0, 3),
                    MutationKernel(rng.uniform(0, 1), rng.dirichlet(np.ones(K)), rng.uniform(0.1, 1),
                                   rng.dirichlet(np.ones(K), size=K)), N)
    env = EnvironmentPath([0.0, 0.4, 1.1], rng.uniform(size=(3, K)), 2.0)
    ts = np.linspace(0, 2, 9)
    tr = simulate_moran(p, env, ParticleState.iid(np.ones(K) / K, N, rng), 2.0, ts, seed)
    assert np.all(tr.counts.sum(axis=1) == N) and np.all(tr.counts >= 0)
    assert np.array_equal(np.bincount(tr.final_alleles, minlength=K), tr.counts[-1])
    c = simulate_counts(p, env, tr.counts[0], 2.0, ts, stream(seed))
    assert np.all(c.counts.sum(axis=1) == N) and np.all(c.counts >= 0)


@given(st.integers(0, 2**32 - 1))
def test_neutral_runs_ignore_the_environment(seed):
    p = _params(15, alpha=0.0, bp=0.7, q=(0.3, 0.7), bpp=0.4, Q=[[0.5, 0.5], [0.1, 0.9]])
    a = EnvironmentPath([0.0, 1.0], [[1.0, 0.0], [0.2, 0.7]], 3.0)
    b = EnvironmentPath([0.0, 0.3, 2.0], [[0.0, 1.0], [0.5, 0.5], [0.9, 0.9]], 3.0)
    init = ParticleState.from_counts([6, 9])
    ts = np.linspace(0, 3, 13)
    ra = simulate_moran(p, a, init, 3.0, ts, seed)
    rb = simulate_moran(p, b, init, 3.0, ts, seed)
    assert np.array_equal(ra.counts, rb.counts)
    assert np.array_equal(ra.final_alleles, rb.final_alleles)


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5.0))
def test_zero_fitness_makes_selection_a_no_op(seed, alpha):
    env = _flat([0.0, 0.0], 3.0)
    init = ParticleState.from_counts([4, 8])
    ts = np.linspace(0, 3, 7)
    ra = simulate_moran(_params(12, alpha=0.0), env, init, 3.0, ts, seed)
    rb = simulate_moran(_params(12, alpha=alpha), env, init, 3.0, ts, seed)
    assert np.array_equal(ra.counts, rb.counts)
    assert np.array_equal(ra.final_alleles, rb.final_alleles)


def test_exchangeability_of_initial_individuals():
    p = _params(10, alpha=2.0, bp=0.5)
    env = _flat([0.9, 0.3], 0.7)
    base = np.array([0] * 4 + [1] * 6)
    rng = np.random.default_rng(0)
    ts = np.array([0.7])
    hist = np.zeros((2, 11), dtype=int)
    for r in range(1500):
        hist[0, simulate_moran(p, env, ParticleState(base), 0.7, ts, np.random.SeedSequence(1, spawn_key=(r,))).counts[-1, 0]] += 1
        hist[1, simulate_moran(p, env, ParticleState(rng.permutation(base)), 0.7, ts, np.random.SeedSequence(2, spawn_key=(r,))).counts[-1, 0]] += 1
    keep = hist.sum(axis=0) >= 10
    _, pval, _, _ = chi2_contingency(hist[:, keep])
    assert pval > 0.001


def test_neutral_mean_relaxes_to_mutation_law():
    p = _params(50, alpha=0.0, bp=1.0)
    est = estimate_moran_moment(p, ConstantEnvironment([0.5, 0.5]), EmpiricalMeasure([50, 0]),
                                DualFunction.indicator(0, 2), 20.0, 2000, 4, engine="particles")
    assert abs(est.mean - 0.5) <= 3 * est.se


def test_count_engine_matches_exact_chain():
    # E Phi(k_t) from the matrix exponential of the two-allele count chain
    N, t = 16, 0.6
    q, Q, w = np.array([0.3, 0.7]), np.array([[0.8, 0.2], [0.4, 0.6]]), np.array([0.95, 0.15])
    p = _params(N, gamma=1.2, alpha=2.5, bp=0.7, q=q, bpp=0.5, Q=Q)
    R = oracles.two_allele_rate_matrix(N, 1.2, 2.5, 0.7, q, 0.5, Q, w)
    k0 = 5
    law = expm(t * R)[k0]
    f = DualFunction(np.array([[0.3, -0.8], [0.5, 0.1]]), 2)
    phi = np.array([product_moment(np.array([k, N - k]) / N, f) for k in range(N + 1)])
    exact = float(law @ phi)
    env = _flat(w, t)
    for engine in ("counts", "particles"):
        est = estimate_moran_moment(p, ConstantEnvironment(w), EmpiricalMeasure([k0, N - k0]), f, t, 20_000, 9,
                                    engine=engine)
        assert abs(est.mean - exact) <= 3.5 * est.se, engine
    # the whole law, not just one moment
    ks = [simulate_counts(p, env, [k0, N - k0], t, [t], stream(3, r)).counts[-1, 0] for r in range(20_000)]
    obs = np.bincount(ks, minlength=N + 1)
    expected = 20_000 * law
    keep = expected >= 5
    stat = float(((obs[keep] - expected[keep]) ** 2 / expected[keep]).sum())
    assert chi2.sf(stat, keep.sum() - 1) > 0.001


def test_segment_boundaries_respected():
    # fitness switches from favouring 0 to favouring 1 at t = 1
    p = _params(40, gamma=0.2, alpha=8.0, bp=0.2)
    env = EnvironmentPath([0.0, 1.0], [[1.0, 0.0], [0.0, 1.0]], 2.0)
    ts = np.array([1.0, 2.0])
    a = np.array([simulate_counts(p, env, [20, 20], 2.0, ts, stream(5, r)).frequencies()[:, 0] for r in range(300)])
    assert a[:, 0].mean() > 0.6 and a[:, 1].mean() < a[:, 0].mean() - 0.15


def test_estimate_trivial_cases_and_errors():
    p = _params(30)
    env = ConstantEnvironment([0.8, 0.4])
    e = estimate_moran_moment(p, env, EmpiricalMeasure([10, 20]), DualFunction.constant(2.0, 2), 1.0, 100, 1)
    assert e.mean == 2.0 and e.variance == 0.0
    f = DualFunction(np.array([[1.0, 0.0], [0.0, 0.0]]), 2)
    e = estimate_moran_moment(p, env, EmpiricalMeasure([10, 20]), f, 0.0, 10, 1)
    assert e.mean == pytest.approx(1 / 9, abs=1e-15) and e.variance == 0.0
    iid = estimate_moran_moment(p, env, [0.25, 0.75], DualFunction.indicator(0, 2), 0.0, 4000, 1)
    assert abs(iid.mean - 0.25) <= 4 * iid.se
    with pytest.raises(ValueError):
        estimate_moran_moment(_params(None), env, [0.5, 0.5], f, 1.0, 10, 1)
    with pytest.raises(DimensionMismatch):
        estimate_moran_moment(p, env, [0.5, 0.5], DualFunction.indicator(0, 3), 1.0, 10, 1)
    with pytest.raises(EnvironmentRangeError):
        simulate_counts(p, _flat([0.5, 0.5], 1.0), [15, 15], 2.0, [2.0], stream(0))
    with pytest.raises(ValueError):
        simulate_moran(p, _flat([0.5, 0.5], 1.0), ParticleState.from_counts([15, 15]), 1.0, [0.5, 0.2], 0)
    with pytest.raises(ValueError):
        simulate_moran(p, _flat([0.5, 0.5], 1.0), ParticleState.from_counts([5, 5]), 1.0, [1.0], 0)


def test_quenched_and_annealed_agree_for_constant_environment():
    p = _params(40)
    env = MarkovEnvironment([[0.9, 0.1]], [[0.0]])
    f = DualFunction.indicator(0, 2)
    q = estimate_moran_moment(p, env, EmpiricalMeasure([20, 20]), f, 0.5, 3000, 2, quenched=True)
    a = estimate_moran_moment(p, env, EmpiricalMeasure([20, 20]), f, 0.5, 3000, 2, quenched=False)
    assert q.mean == a.mean


def test_trajectory_export(tmp_path):
    tr = MoranTrajectory([0.0, 0.5], [[3, 1], [2, 2]])
    text = tr.to_text()
    assert text.splitlines() == ["time,n0,n1", "0.0,3,1", "0.5,2,2"]
    tr.save(tmp_path / "t.csv", delimiter="\t")
    assert (tmp_path / "t.csv").read_text().splitlines()[1] == "0.0\t3\t1"
    assert [m.N for m in tr.measures] == [4, 4]
    assert np.allclose(tr.frequencies()[1], [0.5, 0.5])


def test_estimates_do_not_depend_on_worker_count():
    p = _params(30)
    env = MarkovEnvironment([[0.9, 0.1], [0.2, 0.6]], [[-1, 1], [1, -1]])
    f = DualFunction(np.array([[0.3, -0.8], [0.5, 0.1]]), 2)
    one = estimate_moran_moment(p, env, [0.4, 0.6], f, 0.8, 400, 5, quenched=False)
    many = estimate_moran_moment(p, env, [0.4, 0.6], f, 0.8, 400, 5, quenched=False, workers=4)
    assert one == many
