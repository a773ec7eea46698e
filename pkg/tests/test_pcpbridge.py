import numpy as np
import pytest

from robustmc import (
    DataValidationError,
    LowRankSparsePair,
    ObservationMask,
    Problem,
    SolverConfig,
    choose_cutoff,
    coherence,
    extract_sparse,
    lambda_from,
    objective_g,
    objective_pcp,
    psi,
    robust_impute,
    soft_impute,
    soft_threshold_scalar,
    solve_pcp_alternating,
    svd,
)


def make_problem(seed, n1=12, n2=10, rank=2, noise=0.05, outliers=(), observed=0.7):
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((n1, rank)) @ rng.standard_normal((n2, rank)).T
    x = x0 + noise * rng.standard_normal((n1, n2))
    flags = rng.random((n1, n2)) < observed
    for i, j, v in outliers:
        x[i, j] += v
        flags[i, j] = True
    return x0, Problem.from_full(x, ObservationMask(flags))


class TestExtractSparse:
    def test_zero_residual_gives_zero(self):
        _, prob = make_problem(50)
        s = extract_sparse(prob, prob.values, 0.5)
        assert not s.any()

    def test_single_cell_soft_threshold(self):
        prob = Problem(np.array([[2.0, 0.0], [0.0, 0.0]]),
                       ObservationMask.from_pairs(2, 2, [(0, 0)]))
        c = 1.0
        s = extract_sparse(prob, np.zeros((2, 2)), c)
        assert s[0, 0] == pytest.approx(c)  # residual 2c shrinks to c
        assert not s[s != s[0, 0]].any()

    def test_residual_identity(self):
        rng = np.random.default_rng(51)
        _, prob = make_problem(52)
        l = rng.standard_normal(prob.shape) * 2
        c = 0.4
        s = extract_sparse(prob, l, c)
        flags = prob.mask.flags
        lhs = np.where(flags, prob.values - l - s, 0.0)
        rhs = np.where(flags, 0.5 * psi(prob.values - l, c), 0.0)
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_support_inside_mask(self):
        _, prob = make_problem(53)
        s = extract_sparse(prob, np.zeros(prob.shape), 0.1)
        assert not s[~prob.mask.flags].any()


class TestObjectivePcp:
    def test_zero_pair_value(self):
        _, prob = make_problem(54)
        pair = LowRankSparsePair(np.zeros(prob.shape), np.zeros(prob.shape))
        assert objective_pcp(prob, pair, 1.0, 1.0) == pytest.approx(
            0.5 * float(np.sum(prob.values**2))
        )

    def test_off_mask_sparse_rejected(self):
        _, prob = make_problem(55)
        s = np.where(prob.mask.flags, 0.0, 1.0)
        with pytest.raises(DataValidationError):
            objective_pcp(prob, LowRankSparsePair(np.zeros(prob.shape), s), 1.0, 1.0)

    def test_matches_huber_objective_for_any_l(self):
        rng = np.random.default_rng(56)
        _, prob = make_problem(57)
        gamma, c = 0.8, 0.3
        for _ in range(25):
            l = rng.standard_normal(prob.shape) * rng.choice([0.1, 1.0, 5.0])
            pair = LowRankSparsePair(l, extract_sparse(prob, l, c))
            lhs = objective_pcp(prob, pair, gamma, c)
            rhs = objective_g(prob, l, gamma, c)
            assert abs(lhs - rhs) <= 1e-10 * (1 + abs(rhs))

    def test_extracted_sparse_minimizes_over_s(self):
        rng = np.random.default_rng(58)
        _, prob = make_problem(59)
        gamma, c = 0.5, 0.4
        l = rng.standard_normal(prob.shape)
        s_star = extract_sparse(prob, l, c)
        base = objective_pcp(prob, LowRankSparsePair(l, s_star), gamma, c)
        flags = prob.mask.flags
        for _ in range(100):
            bump = np.where(flags, rng.standard_normal(prob.shape), 0.0)
            bump *= rng.choice([1e-4, 1e-2, 1.0])
            val = objective_pcp(prob, LowRankSparsePair(l, s_star + bump), gamma, c)
            assert val >= base - 1e-12


class TestSolvePcpAlternating:
    def test_no_outliers_huge_cutoff_reduces_to_soft_impute(self):
        _, prob = make_problem(60)
        gamma = 0.6
        res = solve_pcp_alternating(prob, gamma, c=1e9, epsilon=1e-12)
        assert not res.sparse.any()
        plain = soft_impute(prob, gamma, epsilon=1e-14, max_iters=20000)
        rel = np.linalg.norm(res.low_rank - plain.y_hat) / np.linalg.norm(plain.y_hat)
        assert rel < 1e-5

    def test_huge_gamma_gives_pure_soft_threshold(self):
        _, prob = make_problem(61)
        c = 0.2
        gamma = svd(prob.values).singular_values[0] * 50
        res = solve_pcp_alternating(prob, gamma, c, epsilon=1e-12)
        assert not res.low_rank.any()
        expected = np.where(prob.mask.flags, soft_threshold_scalar(prob.values, c), 0.0)
        assert np.allclose(res.sparse, expected, atol=1e-12)

    def test_trace_non_increasing(self):
        _, prob = make_problem(62, outliers=[(1, 1, 7.0), (5, 3, -6.0)])
        res = solve_pcp_alternating(prob, 0.8, 0.3, epsilon=1e-10)
        t = res.objective_trace
        assert all(b <= a + 1e-10 * max(1.0, a) for a, b in zip(t, t[1:]))

    def test_agrees_with_robust_impute(self):
        _, prob = make_problem(63, n1=15, n2=15, outliers=[(2, 2, 8.0), (9, 4, -9.0)])
        gamma = svd(prob.values).singular_values[0] * 0.2
        c = choose_cutoff(gamma, 15, 15, prob.observed_fraction)
        cfg = SolverConfig(gamma_path=(gamma,), cutoff=c, epsilon=1e-12, max_inner_iters=8000)
        y = robust_impute(prob, cfg)[0].y_hat
        res = solve_pcp_alternating(prob, gamma, c, epsilon=1e-12, max_iters=2000)
        assert res.converged
        rel = np.linalg.norm(res.low_rank - y) / (1 + np.linalg.norm(y))
        assert rel < 1e-3
        g_val = objective_g(prob, y, gamma, c)
        pcp_val = objective_pcp(prob, res.pair, gamma, c)
        assert abs(g_val - pcp_val) <= 1e-6 * (1 + abs(g_val))

    def test_planted_outliers_land_in_support(self):
        planted = [(1, 1, 9.0), (6, 2, -8.0), (10, 7, 7.5)]
        _, prob = make_problem(64, n1=14, n2=12, noise=0.02, outliers=planted)
        gamma = svd(prob.values).singular_values[0] * 0.15
        c = 0.5  # outliers are >= 10c, noise <= c/10
        res = solve_pcp_alternating(prob, gamma, c, epsilon=1e-10)
        for i, j, _ in planted:
            assert res.sparse[i, j] != 0.0


class TestLambdaFrom:
    def test_simple_ratio(self):
        assert lambda_from(0.3162, 1.0) == pytest.approx(0.3162)
        assert lambda_from(2.0, 2.0) == 1.0

    def test_round_trip_with_choose_cutoff(self):
        gamma, n, frac = 1.7, 80, 0.25
        lam = lambda_from(choose_cutoff(gamma, n, n, frac), gamma)
        assert lam == pytest.approx(1 / np.sqrt(n * frac), rel=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(DataValidationError):
            lambda_from(0.0, 1.0)


class TestCoherence:
    def test_single_spike_is_maximally_coherent(self):
        n = 6
        l = np.zeros((n, n))
        l[0, 0] = 1.0
        mu = coherence(l)
        assert mu.mu_rows == pytest.approx(n)
        assert mu.mu_cols == pytest.approx(n)

    def test_all_ones_is_perfectly_spread(self):
        n = 8
        mu = coherence(np.ones((n, n)))
        assert mu.mu_rows == pytest.approx(1.0, abs=1e-10)
        assert mu.mu_cols == pytest.approx(1.0, abs=1e-10)
        assert mu.mu_cross == pytest.approx(1.0, abs=1e-10)

    def test_matches_direct_scan(self):
        rng = np.random.default_rng(65)
        l = rng.standard_normal((100, 3)) @ rng.standard_normal((100, 3)).T
        mu = coherence(l)
        f = svd(l)
        u, v = f.u[:, :3], f.v[:, :3]
        assert mu.mu_rows == pytest.approx(100 / 3 * max(np.sum(u * u, axis=1)), rel=1e-10)
        assert mu.mu_cols == pytest.approx(100 / 3 * max(np.sum(v * v, axis=1)), rel=1e-10)
        assert mu.mu_cross == pytest.approx(
            100 * 100 / 3 * np.max(np.abs(u @ v.T)) ** 2, rel=1e-10
        )

    def test_zero_matrix_rejected(self):
        with pytest.raises(DataValidationError):
            coherence(np.zeros((4, 4)))
