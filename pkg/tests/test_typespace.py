import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fvlab import (
    DegreeExceedsPopulation,
    DimensionMismatch,
    DualFunction,
    EmpiricalMeasure,
    ModelParams,
    MutationKernel,
    extension_gap,
    moment_without_replacement,
    product_moment,
)
from fvlab.polynomial import canonicalize_tensor, dummy_axes

import oracles


@st.composite
def tensors(draw, max_K=4, max_n=4, min_n=0):
    K = draw(st.integers(2, max_K))
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return K, rng.uniform(-1, 1, size=(K,) * n), rng


def test_product_moment_examples():
    m = np.array([0.3, 0.7])
    assert product_moment(m, DualFunction.constant(2.5, 2)) == 2.5
    assert product_moment(m, DualFunction.indicator(0, 2)) == pytest.approx(0.3, abs=1e-15)
    same = DualFunction(np.eye(2), 2)
    assert product_moment([0.5, 0.5], same) == pytest.approx(0.5, abs=1e-15)


@given(tensors())
def test_product_moment_matches_lattice_sum(case):
    K, t, rng = case
    m = rng.dirichlet(np.ones(K))
    assert abs(product_moment(m, DualFunction(t, K)) - oracles.product_moment_sum(m, t)) <= 1e-12


@given(tensors(min_n=1), st.integers(0, 3))
def test_product_moment_is_linear_in_each_index(case, axis):
    K, t, rng = case
    axis %= t.ndim
    a, b = rng.dirichlet(np.ones(K)), rng.dirichlet(np.ones(K))
    lam = rng.uniform()
    # replacing m by a mixture in one slot only is linear
    mix = lam * a + (1 - lam) * b

    def partial(v):
        g = np.tensordot(t, v, axes=([axis], [0]))
        return product_moment(a, DualFunction(g, K))

    assert abs(partial(mix) - (lam * partial(a) + (1 - lam) * partial(b))) <= 1e-12


def test_moment_without_replacement_examples():
    diff = DualFunction(1.0 - np.eye(2), 2)
    assert moment_without_replacement(EmpiricalMeasure([1, 1]), diff) == 1.0
    both0 = DualFunction(np.array([[1.0, 0.0], [0.0, 0.0]]), 2)
    # frozen from enumerating the 6 ordered pairs of 3 individuals by hand
    assert moment_without_replacement(EmpiricalMeasure([2, 1]), both0) == pytest.approx(1 / 3, abs=1e-15)
    assert moment_without_replacement(EmpiricalMeasure([2, 1]), DualFunction.constant(-4.0, 2)) == -4.0


@given(tensors(max_K=3, max_n=3, min_n=1), st.integers(0, 2**31))
def test_moment_without_replacement_matches_individual_average(case, seed):
    K, t, _ = case
    rng = np.random.default_rng(seed)
    N = int(rng.integers(t.ndim, 7))
    counts = rng.multinomial(N, np.ones(K) / K)
    alleles = [a for a in range(K) for _ in range(counts[a])]
    got = moment_without_replacement(EmpiricalMeasure(counts), DualFunction(t, K))
    assert abs(got - oracles.moment_over_individuals(alleles, t)) <= 1e-12


def test_moment_without_replacement_degree_check():
    f = DualFunction(np.ones((2, 2, 2)), 2)
    with pytest.raises(DegreeExceedsPopulation):
        moment_without_replacement(EmpiricalMeasure([1, 1]), f)
    with pytest.raises(DimensionMismatch):
        moment_without_replacement(EmpiricalMeasure([1, 1, 1]), DualFunction.indicator(0, 2))


def test_extension_gap_examples():
    diff = DualFunction(1.0 - np.eye(2), 2)
    assert extension_gap(EmpiricalMeasure([1, 1]), diff) == pytest.approx(0.5, abs=1e-15)
    rng = np.random.default_rng(0)
    m = EmpiricalMeasure([3, 5, 2])
    assert extension_gap(m, DualFunction(rng.uniform(size=3), 3)) <= 1e-15
    assert extension_gap(m, DualFunction.constant(1.0, 3)) == 0.0


def test_extension_gap_decays_like_one_over_n():
    f = DualFunction(np.array([[0.3, -0.8], [0.5, 0.1]]), 2)
    gaps = [extension_gap(EmpiricalMeasure([3 * N // 10, 7 * N // 10]), f) for N in (10, 100, 1000)]
    assert gaps[0] > gaps[1] > gaps[2]
    ratios = [gaps[0] / gaps[1], gaps[1] / gaps[2]]
    assert all(9.0 < r < 11.5 for r in ratios)
    # N * gap stays bounded
    Ngap = [N * g for N, g in zip((10, 100, 1000), gaps)]
    assert max(Ngap) / min(Ngap) < 1.2


def test_mutation_kernel_validation():
    with pytest.raises(ValueError):
        MutationKernel(1.0, [0.5, 0.6])
    with pytest.raises(ValueError):
        MutationKernel(0.0, [0.5, 0.5], 0.0)
    with pytest.raises(ValueError):
        MutationKernel(1.0, [0.5, 0.5], 1.0, [[0.5, 0.4], [0, 1]])
    with pytest.raises(ValueError):
        MutationKernel(-1.0, [0.5, 0.5], 2.0)
    with pytest.raises(ValueError):
        ModelParams(0.0, 1.0, MutationKernel(1.0, [0.5, 0.5]))
    k = MutationKernel(1.0, [0.5, 0.5])
    assert np.array_equal(k.q_double_prime, np.eye(2))
    assert k.beta == 1.0


def test_stationary_law_solves_balance():
    k = MutationKernel(1.0, [0.2, 0.3, 0.5], 2.0, [[0.1, 0.9, 0.0], [0.0, 0.2, 0.8], [0.7, 0.0, 0.3]])
    pi = k.stationary_law()
    assert abs(pi.sum() - 1) < 1e-12
    assert np.max(np.abs(pi @ k.generator())) < 1e-12
    # parent-independent mutation alone: the law is q'
    assert np.allclose(MutationKernel(1.5, [0.2, 0.8]).stationary_law(), [0.2, 0.8], atol=1e-14)


@given(tensors())
def test_canonical_form_has_no_dummy_axes_and_same_values(case):
    K, t, rng = case
    # plant dummy axes
    n = t.ndim
    extra = int(rng.integers(0, 3))
    big = t
    for _ in range(extra):
        pos = int(rng.integers(0, big.ndim + 1))
        big = np.repeat(np.expand_dims(big, pos), K, axis=pos)
    c = canonicalize_tensor(big)
    assert dummy_axes(c) == []
    assert c.ndim <= n
    for m in (rng.dirichlet(np.ones(K)) for _ in range(3)):
        assert abs(product_moment(m, DualFunction(c, K)) - product_moment(m, DualFunction(big, K))) <= 1e-12
    if big.ndim:
        assert np.max(np.abs(c)) <= np.max(np.abs(big))


def test_canonicalize_edge_cases():
    assert canonicalize_tensor(np.array([2.0, 2.0])).shape == ()
    assert canonicalize_tensor(np.full((3, 3, 3), 0.7)).shape == ()
    assert canonicalize_tensor(np.zeros((2, 2))).shape == ()
    t = np.array([[1.0, 2.0], [1.0, 2.0]])
    assert np.array_equal(canonicalize_tensor(t), [1.0, 2.0])
    assert canonicalize_tensor(np.float64(3.0)) == 3.0


def test_dual_function_constructors():
    f = DualFunction.product([1.0, 2.0], [3.0, 5.0])
    assert f.degree == 2 and f(1, 1) == 10.0
    g = DualFunction.from_callable(lambda a, b: a + 2 * b, 3, 2)
    assert g(2, 1) == 4.0
    with pytest.raises(DimensionMismatch):
        DualFunction(np.ones((2, 3)), 2)
    with pytest.raises(ValueError):
        DualFunction.indicator(2, 2)
    with pytest.raises(ValueError):
        DualFunction.indicator(0, 2).value
    assert DualFunction.constant(1.5, 2).value == 1.5
    assert not f.tensor.flags.writeable


def test_empirical_measure():
    m = EmpiricalMeasure.from_alleles([0, 2, 2, 1], 4)
    assert m.N == 4 and m.K == 4
    assert np.array_equal(m.counts, [1, 1, 2, 0])
    with pytest.raises(ValueError):
        EmpiricalMeasure([0, 0])
    with pytest.raises(ValueError):
        EmpiricalMeasure([-1, 2])
