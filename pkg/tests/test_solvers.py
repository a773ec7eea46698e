import numpy as np
import pytest

from robustmc import (
    DataValidationError,
    ObservationMask,
    Problem,
    SolverConfig,
    choose_cutoff,
    default_gamma_path,
    general_robust,
    objective_f,
    objective_g,
    robust_impute,
    soft_impute,
    soft_impute_path,
    stationarity_certificate,
    svd,
    svd_soft_threshold,
)

from oracles import completion_oracle, completion_objective


def make_instance(seed, n1=12, n2=10, rank=2, noise=0.05, outlier_frac=0.0,
                  outlier_scale=8.0, observed=0.7):
    """Ad-hoc contaminated low-rank instance for solver tests."""
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((n1, rank)) @ rng.standard_normal((n2, rank)).T
    x = x0 + noise * rng.standard_normal((n1, n2))
    n_out = int(round(outlier_frac * n1 * n2))
    if n_out:
        idx = rng.choice(n1 * n2, n_out, replace=False)
        bumps = outlier_scale * rng.choice([-1.0, 1.0], n_out)
        x.flat[idx] += bumps
    mask = ObservationMask(rng.random((n1, n2)) < observed)
    return x0, Problem.from_full(x, mask)


def trace_is_monotone(trace, slack=1e-10):
    return all(b <= a + slack * max(1.0, a) for a, b in zip(trace, trace[1:]))


class TestSolverConfig:
    def test_defaults_valid(self):
        cfg = SolverConfig()
        assert cfg.epsilon == 1e-5
        assert cfg.max_inner_iters == 500
        assert cfg.max_outer_iters == 100

    def test_rejects_increasing_path(self):
        with pytest.raises(DataValidationError):
            SolverConfig(gamma_path=(1.0, 2.0))

    def test_rejects_nonpositive_gamma(self):
        with pytest.raises(DataValidationError):
            SolverConfig(gamma_path=(1.0, 0.0))

    def test_rejects_empty_path(self):
        with pytest.raises(DataValidationError):
            SolverConfig(gamma_path=())

    def test_rejects_bad_epsilon(self):
        with pytest.raises(DataValidationError):
            SolverConfig(epsilon=0.0)


class TestDefaultGammaPath:
    def test_shape_and_anchors(self):
        _, prob = make_instance(21)
        path = default_gamma_path(prob)
        sigma1 = svd(prob.values).singular_values[0]
        assert len(path) == 20
        assert path[0] == pytest.approx(0.95 * sigma1, rel=1e-12)
        assert path[-1] == pytest.approx(0.01 * sigma1, rel=1e-12)
        assert all(a > b for a, b in zip(path, path[1:]))

    def test_top_gamma_collapses_to_zero(self):
        _, prob = make_instance(22)
        sigma1 = svd(prob.values).singular_values[0]
        assert not svd_soft_threshold(prob.values, sigma1 * 1.0001).any()


class TestObjectives:
    def test_f_zero_at_perfect_fit(self):
        mask = ObservationMask.full(2, 2)
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        prob = Problem.from_full(x, mask)
        assert objective_f(prob, x, 0.0) == 0.0

    def test_f_at_zero_estimate(self):
        _, prob = make_instance(23)
        expected = 0.5 * float(np.sum(prob.values**2))
        assert objective_f(prob, np.zeros(prob.shape), 1.5) == pytest.approx(expected)

    def test_g_at_zero_estimate_quadratic_regime(self):
        _, prob = make_instance(24)
        c = float(np.abs(prob.values).max()) + 1
        assert objective_g(prob, np.zeros(prob.shape), 2.0, c) == pytest.approx(
            objective_f(prob, np.zeros(prob.shape), 2.0)
        )

    def test_g_zero_when_everything_zero(self):
        prob = Problem.from_full(np.zeros((3, 3)), ObservationMask.full(3, 3))
        assert objective_g(prob, np.zeros((3, 3)), 1.0, 1.0) == 0.0

    def test_g_never_exceeds_f(self):
        rng = np.random.default_rng(25)
        _, prob = make_instance(26)
        for _ in range(10):
            y = rng.standard_normal(prob.shape)
            assert objective_g(prob, y, 0.7, 0.5) <= objective_f(prob, y, 0.7) + 1e-12


class TestSoftImpute:
    def test_fully_observed_closed_form(self):
        rng = np.random.default_rng(27)
        x = rng.standard_normal((6, 6))
        prob = Problem.from_full(x, ObservationMask.full(6, 6))
        sol = soft_impute(prob, 0.8)
        assert np.allclose(sol.y_hat, svd_soft_threshold(x, 0.8), atol=1e-12)
        assert sol.converged

    def test_total_shrinkage_returns_zero(self):
        _, prob = make_instance(28)
        gamma = svd(prob.values).singular_values[0] * 1.1
        sol = soft_impute(prob, gamma)
        assert not sol.y_hat.any()
        assert sol.converged

    def test_matches_independent_first_order_solver(self):
        rng = np.random.default_rng(29)
        x = rng.standard_normal((6, 6))
        mask = ObservationMask(rng.random((6, 6)) < 0.5)
        prob = Problem.from_full(x, mask)
        gamma = 0.5
        sol = soft_impute(prob, gamma, epsilon=1e-14, max_iters=20000)
        ours = objective_f(prob, sol.y_hat, gamma)
        ref_y = completion_oracle(prob.values, mask.flags, gamma, obj_tol=1e-12)
        ref = completion_objective(prob.values, mask.flags, ref_y, gamma)
        assert ours == pytest.approx(ref, rel=1e-5)

    def test_objective_trace_non_increasing(self):
        _, prob = make_instance(30, outlier_frac=0.1)
        sol = soft_impute(prob, 1.0)
        assert trace_is_monotone(sol.objective_trace)

    def test_max_iters_flags_not_converged(self):
        _, prob = make_instance(31)
        sol = soft_impute(prob, 0.1, epsilon=1e-16, max_iters=3)
        assert not sol.converged
        assert sol.iterations == 3

    def test_final_rank_matches_recomputation(self):
        _, prob = make_instance(32)
        sol = soft_impute(prob, 1.2)
        s = svd(sol.y_hat).singular_values
        expected = int(np.sum(s > 1e-8 * s[0])) if s.size else 0
        assert sol.final_rank == expected

    def test_single_observed_entry(self):
        prob = Problem(np.array([[0.0, 0.0], [0.0, 3.0]]),
                       ObservationMask.from_pairs(2, 2, [(1, 1)]))
        sol = soft_impute(prob, 0.5)
        assert sol.converged
        assert np.linalg.matrix_rank(sol.y_hat) <= 1

    def test_deterministic(self):
        _, prob = make_instance(33)
        a = soft_impute(prob, 0.9)
        b = soft_impute(prob, 0.9)
        assert np.array_equal(a.y_hat, b.y_hat)
        assert a.objective_trace == b.objective_trace


class TestGeneralRobust:
    def test_huge_cutoff_reduces_to_plain_completion(self):
        eps = 1e-12
        _, prob = make_instance(34)
        cfg = SolverConfig(cutoff=1e9, epsilon=eps, max_inner_iters=10000)
        sol = general_robust(prob, 0.8, cfg)
        plain = soft_impute(prob, 0.8, epsilon=eps, max_iters=10000)
        assert sol.iterations == 1
        rel = np.linalg.norm(sol.y_hat - plain.y_hat) / np.linalg.norm(plain.y_hat)
        assert rel <= 10 * np.sqrt(eps)

    def test_monotone_trace_from_initial_estimate(self):
        _, prob = make_instance(35, outlier_frac=0.08)
        sol = general_robust(prob, 1.0)
        assert trace_is_monotone(sol.objective_trace)
        assert sol.objective_trace[-1] <= sol.objective_trace[0] + 1e-12

    def test_agrees_with_robust_impute(self):
        _, prob = make_instance(36, n1=10, n2=10, outlier_frac=0.02)
        gamma = 0.6 * svd(prob.values).singular_values[0] * 0.5
        c = choose_cutoff(gamma, 10, 10, prob.observed_fraction)
        cfg = SolverConfig(gamma_path=(gamma,), cutoff=c, epsilon=1e-12,
                           max_inner_iters=5000, max_outer_iters=500)
        a = general_robust(prob, gamma, cfg)
        b = robust_impute(prob, cfg)[0]
        rel = np.linalg.norm(a.y_hat - b.y_hat) / np.linalg.norm(b.y_hat)
        assert rel < 1e-4

    def test_custom_completer_is_used(self):
        _, prob = make_instance(37)
        calls = []

        def completer(p, gamma, y0):
            calls.append(gamma)
            return soft_impute(p, gamma, y0, 1e-8, 2000)

        sol = general_robust(prob, 1.0, completer=completer)
        assert len(calls) >= 2  # initial completion plus at least one refit
        assert sol.converged


class TestRobustImpute:
    def test_huge_gamma_gives_zero_path(self):
        _, prob = make_instance(38)
        gamma = svd(prob.values).singular_values[0] * 2
        path = robust_impute(prob, SolverConfig(gamma_path=(gamma,)))
        assert len(path) == 1
        assert not path[0].y_hat.any()
        assert path[0].converged
        assert path[0].final_rank == 0

    def test_huge_cutoff_matches_soft_impute_path_exactly(self):
        _, prob = make_instance(39, outlier_frac=0.1)
        cfg = SolverConfig(cutoff=1e12)
        robust = robust_impute(prob, cfg)
        soft = soft_impute_path(prob, cfg)
        assert robust.gammas == soft.gammas
        for a, b in zip(robust, soft):
            assert np.allclose(a.y_hat, b.y_hat, atol=1e-10)
            assert a.svd_count == b.svd_count

    def test_beats_soft_impute_under_outliers(self):
        x0, prob = make_instance(40, n1=20, n2=20, rank=2, noise=0.05,
                                 outlier_frac=0.3, observed=0.75)
        cfg = SolverConfig(gamma_path=default_gamma_path(prob, 10))
        unobs = ~prob.mask.flags

        def best_err(path):
            return min(
                float(np.sum(np.where(unobs, x0 - s.y_hat, 0.0) ** 2))
                for s in path
            )

        assert best_err(robust_impute(prob, cfg)) < best_err(soft_impute_path(prob, cfg))

    def test_traces_monotone_and_warm_start_never_worsens(self):
        _, prob = make_instance(41, outlier_frac=0.1)
        path = robust_impute(prob)
        for sol in path:
            assert trace_is_monotone(sol.objective_trace)
            assert sol.objective_trace[-1] <= sol.objective_trace[0] + 1e-12

    def test_svd_count_includes_initialization(self):
        _, prob = make_instance(42)
        path = robust_impute(prob, SolverConfig(gamma_path=(1.5, 1.0)))
        assert path[0].svd_count == path[0].iterations + 1
        assert path[1].svd_count == path[1].iterations

    def test_single_observed_entry(self):
        prob = Problem(np.array([[0.0, 0.0], [0.0, 3.0]]),
                       ObservationMask.from_pairs(2, 2, [(1, 1)]))
        path = robust_impute(prob, SolverConfig(gamma_path=(1.0, 0.2)))
        assert all(s.converged for s in path)
        assert all(np.linalg.matrix_rank(s.y_hat) <= 1 for s in path)

    def test_solver_agreement_bound(self):
        # the two robust solvers land within 10*sqrt(eps) of each other
        eps = 1e-8
        _, prob = make_instance(43, outlier_frac=0.05)
        gamma = svd(prob.values).singular_values[0] * 0.2
        c = choose_cutoff(gamma, prob.n_rows, prob.n_cols, prob.observed_fraction)
        cfg = SolverConfig(gamma_path=(gamma,), cutoff=c, epsilon=eps,
                           max_inner_iters=5000, max_outer_iters=500)
        a = general_robust(prob, gamma, cfg)
        b = robust_impute(prob, cfg)[0]
        rel = np.linalg.norm(a.y_hat - b.y_hat) / np.linalg.norm(b.y_hat)
        assert rel <= 10 * np.sqrt(eps)


class TestStationarityCertificate:
    def test_passes_at_converged_solution(self):
        _, prob = make_instance(44, outlier_frac=0.1)
        gamma = svd(prob.values).singular_values[0] * 0.15
        c = choose_cutoff(gamma, prob.n_rows, prob.n_cols, prob.observed_fraction)
        cfg = SolverConfig(gamma_path=(gamma,), cutoff=c, epsilon=1e-12, max_inner_iters=8000)
        sol = robust_impute(prob, cfg)[0]
        assert sol.converged
        cert = stationarity_certificate(prob, sol.y_hat, gamma, c)
        assert cert.rank == sol.final_rank
        assert cert.passes(1e-3)

    def test_fails_away_from_the_solution(self):
        _, prob = make_instance(45)
        gamma = 0.05  # tiny weight: the zero matrix is badly suboptimal
        c = 10.0
        cert = stationarity_certificate(prob, np.zeros(prob.shape), gamma, c)
        assert not cert.passes(1e-3)

    def test_zero_solution_certificate(self):
        _, prob = make_instance(46)
        gamma = svd(prob.values).singular_values[0] * 2
        c = float(np.abs(prob.values).max()) + 1
        cert = stationarity_certificate(prob, np.zeros(prob.shape), gamma, c)
        assert cert.rank == 0
        assert cert.passes(1e-3)
