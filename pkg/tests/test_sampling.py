from collections import Counter

import numpy as np
import pytest

from dppkit import (
    ALGORITHMS,
    AllZero,
    DualProjective,
    LEnsemble,
    NumericalBreakdown,
    ProjectiveBasis,
    RankMismatch,
    ValidationError,
    categorical_draw,
    dual_factorization,
    enumerate_projective_kdpp,
    goodness_of_fit,
    sample_dpp,
    sample_dpp_many,
    sample_projective,
    sample_projective_dual,
    sample_projective_efficient,
    sample_projective_many,
    sanitize_probabilities,
    use_backend,
)
from helpers import binomial_band, random_psd

PRIMAL = ("reference", "schur", "efficient")


def trivial_dual(basis):
    k = basis.k
    return DualProjective(psi=basis.v.T.copy(), c_tilde=np.eye(k), k=k, w=np.eye(k), e=np.ones(k))


def source_for(basis, algorithm):
    return trivial_dual(basis) if algorithm == "dual" else basis


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_axis_basis_always_returns_its_support(algorithm, rng):
    basis = ProjectiveBasis(np.eye(3)[:, :2])
    for _ in range(30):
        draw = sample_projective(source_for(basis, algorithm), rng, algorithm)
        assert draw.as_set() == {0, 1}


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_flat_single_vector_is_uniform(algorithm, rng):
    basis = ProjectiveBasis(np.full((4, 1), 0.5))
    trials = 20_000
    counts = Counter(sample_projective(source_for(basis, algorithm), rng, algorithm).indices[0] for _ in range(trials))
    for i in range(4):
        assert abs(counts[i] / trials - 0.25) <= binomial_band(0.25, trials)


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_small_projective_law(algorithm):
    basis = ProjectiveBasis.random(6, 2, np.random.default_rng(3))
    idx, _ = sample_projective_many(source_for(basis, algorithm), 40_000, 11, algorithm)
    fit = goodness_of_fit([tuple(r) for r in idx], enumerate_projective_kdpp(basis))
    assert fit.tv_distance < 0.02
    assert fit.p_value > 1e-3


def test_dual_single_row_is_uniform_over_two(rng):
    dp = DualProjective.from_factor(dual_factorization(np.array([[1.0, 1.0]])))
    trials = 20_000
    ones = sum(sample_projective_dual(dp, rng).indices[0] for _ in range(trials))
    assert abs(ones / trials - 0.5) <= binomial_band(0.5, trials)


def test_dual_initial_weights_equal_lifted_row_norms(rng):
    f = dual_factorization(rng.standard_normal((4, 40)))
    dp = DualProjective.from_factor(f, [1, 3])
    v = dp.lifted_basis().v
    np.testing.assert_allclose(dp.initial_weights(), np.sum(v * v, axis=1), atol=1e-10)
    plain = DualProjective(psi=dp.psi, c_tilde=dp.c_tilde, k=2)
    np.testing.assert_allclose(plain.initial_weights(), np.sum(v * v, axis=1), atol=1e-10)


def test_dual_rank_mismatch(rng):
    f = dual_factorization(rng.standard_normal((3, 10)))
    dp = DualProjective.from_factor(f, [0, 2])
    with pytest.raises(RankMismatch):
        DualProjective(psi=dp.psi, c_tilde=dp.c_tilde, k=3)
    with pytest.raises(RankMismatch):
        DualProjective(psi=dp.psi, c_tilde=dp.c_tilde, k=1)


def test_basis_must_be_orthonormal():
    with pytest.raises(ValidationError, match="orthonormal"):
        ProjectiveBasis(np.ones((3, 2)))
    with pytest.raises(ValidationError):
        ProjectiveBasis(np.eye(2, 3))


def test_dual_algorithm_needs_dual_input(rng):
    basis = ProjectiveBasis.random(5, 2, rng)
    with pytest.raises(ValidationError):
        sample_projective(basis, rng, "dual")
    with pytest.raises(ValidationError):
        sample_dpp(LEnsemble(np.eye(3)), rng, "dual")
    with pytest.raises(ValidationError):
        sample_dpp(LEnsemble(np.eye(3)), rng, "bogus")


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_step_sums_follow_normalization(algorithm, rng):
    basis = ProjectiveBasis.random(20, 6, rng)
    draw = sample_projective(source_for(basis, algorithm), rng, algorithm)
    np.testing.assert_allclose(draw.step_sums, 6 - np.arange(6), atol=1e-10)


def test_sanitized_last_step_sums_to_one(rng):
    k = 5
    basis = ProjectiveBasis.random(30, k, rng)
    draw = sample_projective_efficient(basis, rng, record_trace=True)
    last = sanitize_probabilities(draw.probability_trace[k - 1], draw.indices[: k - 1])
    assert last.sum() == pytest.approx(1.0, abs=1e-6)


def test_sanitize_examples():
    np.testing.assert_array_equal(sanitize_probabilities([0.5, -1e-12, 0.3], [2]), [0.5, 0.0, 0.0])
    with pytest.raises(NumericalBreakdown):
        sanitize_probabilities([0.5, -0.2, 0.3])


def test_sanitize_does_not_touch_input():
    p = np.array([0.5, -1e-12, 0.3])
    sanitize_probabilities(p, [0])
    assert p[1] == -1e-12


def test_categorical_degenerate(rng):
    for _ in range(20):
        assert categorical_draw([0.0, 1.0, 0.0], rng) == 1


@pytest.mark.parametrize("p, expect", [((1.0, 1.0), (0.5, 0.5)), ((2.0, 1.0, 1.0), (0.5, 0.25, 0.25))])
def test_categorical_frequencies(p, expect, rng):
    trials = 100_000
    counts = np.bincount([categorical_draw(p, rng) for _ in range(trials)], minlength=len(p))
    for c, q in zip(counts, expect):
        assert abs(c / trials - q) <= binomial_band(q, trials)


def test_categorical_rejects_bad_weights(rng):
    with pytest.raises(AllZero):
        categorical_draw([0.0, 0.0], rng)
    with pytest.raises(ValidationError):
        categorical_draw([1.0, -1.0], rng)
    with pytest.raises(ValidationError):
        categorical_draw([], rng)


def test_categorical_inverse_cdf_boundaries():
    from dppkit import kernels

    assert kernels.categorical(np.array([1.0, 1.0]), 0.0) == 0
    assert kernels.categorical(np.array([1.0, 1.0]), 0.5) == 1
    assert kernels.categorical(np.array([0.0, 1.0, 1.0]), 0.0) == 1
    assert kernels.categorical(np.array([1.0, 1.0, 0.0]), 0.999999) == 1


def test_zero_kernel_gives_empty_sample(rng):
    L = LEnsemble(np.zeros((4, 4)))
    for alg in PRIMAL:
        assert sample_dpp(L, rng, alg).indices == ()


def test_diagonal_dpp_frequencies(rng):
    trials = 100_000
    draws = sample_dpp_many(np.diag([2.0, 0.0]), trials, rng)
    counts = Counter(d.indices for d in draws)
    assert set(counts) <= {(), (0,)}
    assert abs(counts[(0,)] / trials - 2.0 / 3.0) <= binomial_band(2.0 / 3.0, trials)


def test_seeded_draws_reproduce(rng):
    L = LEnsemble(random_psd(rng, 8, rank=4))
    a = [sample_dpp(L, 123, alg).indices for alg in PRIMAL]
    b = [sample_dpp(L, 123, alg).indices for alg in PRIMAL]
    assert a == b
    assert sample_dpp(L, 123).seed == 123


def test_primal_samplers_share_index_sequences(rng):
    for _ in range(10):
        basis = ProjectiveBasis.random(25, 5, rng)
        seed = int(rng.integers(2**32))
        runs = [sample_projective(source_for(basis, a), seed, a).indices for a in ALGORITHMS]
        assert all(r == runs[0] for r in runs)


def test_many_matches_successive_singles(rng):
    basis = ProjectiveBasis.random(15, 4, rng)
    for alg in ALGORITHMS:
        src = source_for(basis, alg)
        idx, sums = sample_projective_many(src, 30, np.random.default_rng(5), alg)
        g = np.random.default_rng(5)
        singles = [sample_projective(src, g, alg).indices for _ in range(30)]
        assert [tuple(r) for r in idx.tolist()] == singles
        np.testing.assert_allclose(sums, np.tile(4 - np.arange(4), (30, 1)), atol=1e-10)


def test_dual_factor_draws_match_lifted_primal_draws(rng):
    f = dual_factorization(rng.standard_normal((3, 9)))
    for seed in range(30):
        a = sample_dpp(f, seed, "dual")
        b = sample_dpp(f, seed, "efficient")
        assert a.indices == b.indices
        assert a.eigen_selection == b.eigen_selection


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_backends_agree(algorithm, rng):
    basis = ProjectiveBasis.random(30, 5, rng)
    src = source_for(basis, algorithm)
    with use_backend("numpy"):
        a, sa = sample_projective_many(src, 20, 9, algorithm)
        ta = sample_projective(src, 4, algorithm, record_trace=True).probability_trace
    with use_backend("numba"):
        b, sb = sample_projective_many(src, 20, 9, algorithm)
        tb = sample_projective(src, 4, algorithm, record_trace=True).probability_trace
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(sa, sb, atol=1e-12)
    np.testing.assert_allclose(ta, tb, atol=1e-12)


def test_k_zero_basis(rng):
    basis = ProjectiveBasis(np.zeros((4, 0)))
    assert sample_projective(basis, rng).indices == ()
    idx, _ = sample_projective_many(basis, 3, rng)
    assert idx.shape == (3, 0)
