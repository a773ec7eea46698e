"""Completion solvers.

Three entry points:

* `soft_impute` -- the non-robust baseline.  Repeatedly fills the missing
  entries with the current estimate and soft-thresholds the spectrum, which
  minimizes  0.5*||P(X) - P(Y)||_F^2 + gamma*||Y||_*  (squared loss).
* `general_robust` -- wraps *any* non-robust completer.  Each outer round
  replaces the observations by surrogate values whose squared-loss gradient
  matches the Huber gradient at the current estimate, then re-completes.
* `robust_impute` -- the fused fast variant: the surrogate construction is
  interleaved directly with the spectral shrinkage steps and swept along a
  decreasing gamma path with warm starts.

Every solver run owns its state; returned Solution objects are immutable
and hold a per-iteration objective trace (squared-loss objective for
`soft_impute`, Huber objective for the robust solvers) that is
non-increasing, plus the number of spectral-shrinkage SVDs performed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DataValidationError, DimensionMismatchError
from .huber import choose_cutoff, huber_norm_sq, pseudo_data, psi
from .matcore import (
    Problem,
    _frozen,
    _raw_svd,
    as_matrix,
    nuclear_norm,
    shrink_singular_values,
    svd,
)

RANK_TOL = 1e-8

# completer(problem, gamma, y_init) -> Solution; must not increase the
# squared-loss objective relative to the warm start y_init.
Completer = Callable[[Problem, float, Optional[np.ndarray]], "Solution"]


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by the path solvers.

    gamma_path       strictly decreasing positive weights; None derives the
                     default 20-point log-spaced path from the problem.
    cutoff           Huber cutoff; None picks it per gamma via
                     `choose_cutoff` (an explicit value is held fixed
                     across the whole path).
    epsilon          stop once ||Y_new - Y_old||_F^2 / ||Y_old||_F^2 < epsilon.
    max_inner_iters  cap on shrinkage iterations per gamma.
    max_outer_iters  cap on re-completion rounds in `general_robust`.
    """

    gamma_path: Optional[tuple] = None
    cutoff: Optional[float] = None
    epsilon: float = 1e-5
    max_inner_iters: int = 500
    max_outer_iters: int = 100

    def __post_init__(self):
        if self.gamma_path is not None:
            path = tuple(float(g) for g in self.gamma_path)
            if len(path) == 0:
                raise DataValidationError("gamma_path must be nonempty")
            if any(not (g > 0 and np.isfinite(g)) for g in path):
                raise DataValidationError("gamma_path entries must be positive and finite")
            if any(a <= b for a, b in zip(path, path[1:])):
                raise DataValidationError("gamma_path must be strictly decreasing")
            object.__setattr__(self, "gamma_path", path)
        if self.cutoff is not None and not (self.cutoff > 0 and np.isfinite(self.cutoff)):
            raise DataValidationError(f"cutoff must be positive and finite, got {self.cutoff}")
        if not (self.epsilon > 0):
            raise DataValidationError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_inner_iters < 1 or self.max_outer_iters < 1:
            raise DataValidationError("iteration caps must be at least 1")


@dataclass(frozen=True)
class Solution:
    """One solve at a fixed gamma.

    `objective_trace[0]` is the objective at the starting point of the
    iteration (the warm start), later entries follow each update, so the
    trace being non-increasing is exactly the per-step descent guarantee.
    `final_rank` counts singular values of y_hat above RANK_TOL times the
    largest one.
    """

    y_hat: np.ndarray
    gamma: float
    iterations: int
    svd_count: int
    objective_trace: tuple
    final_rank: int
    converged: bool

    def __post_init__(self):
        object.__setattr__(self, "y_hat", _frozen(self.y_hat))
        object.__setattr__(self, "objective_trace", tuple(float(v) for v in self.objective_trace))


@dataclass(frozen=True)
class PathSolution:
    """Solutions along a decreasing gamma path, in path order."""

    solutions: tuple

    def __post_init__(self):
        object.__setattr__(self, "solutions", tuple(self.solutions))

    @property
    def gammas(self):
        return tuple(s.gamma for s in self.solutions)

    @property
    def total_svd_count(self) -> int:
        return sum(s.svd_count for s in self.solutions)

    @property
    def all_converged(self) -> bool:
        return all(s.converged for s in self.solutions)

    def __len__(self):
        return len(self.solutions)

    def __iter__(self):
        return iter(self.solutions)

    def __getitem__(self, i):
        return self.solutions[i]


@dataclass(frozen=True)
class CertificateReport:
    """First-order optimality measurements at a candidate solution.

    tangent_gap      Frobenius distance between the scaled Huber gradient
                     projected on the tangent space of y_hat's singular
                     vectors and the expected u @ v.T.
    orthogonal_norm  spectral norm of the component off that space
                     (must not exceed 1 at an exact minimizer).
    """

    tangent_gap: float
    orthogonal_norm: float
    rank: int

    def passes(self, tol: float = 1e-3) -> bool:
        return (
            self.tangent_gap <= tol * np.sqrt(self.rank)
            and self.orthogonal_norm <= 1.0 + tol
        )


def _rel_change_sq(new: np.ndarray, old: np.ndarray) -> float:
    num = float(np.sum((new - old) ** 2))
    den = float(np.sum(old * old))
    if den == 0.0:
        # the update rule is undefined at 0; only a literal fixed point stops
        return 0.0 if num == 0.0 else np.inf
    return num / den


def _rank_from_values(shrunk: np.ndarray) -> int:
    if shrunk.size == 0:
        return 0
    top = float(shrunk.max())
    if top <= 0.0:
        return 0
    return int(np.sum(shrunk > RANK_TOL * top))


def _masked_residual(x, flags, y):
    return np.where(flags, x - y, 0.0)


def _f_value(x, flags, y, gamma, nuc):
    r = _masked_residual(x, flags, y)
    return 0.5 * float(np.sum(r * r)) + gamma * nuc


def _g_value(x, flags, y, gamma, c, nuc):
    r = _masked_residual(x, flags, y)
    return 0.5 * huber_norm_sq(r, c) + gamma * nuc


def default_gamma_path(problem: Problem, count: int = 20,
                       top_scale: float = 0.95, bottom_scale: float = 0.01) -> tuple:
    """Log-spaced gamma path from near-total shrinkage down to light shrinkage.

    Anchored at the largest singular value of the observed matrix, the
    smallest weight for which the solution collapses to zero.
    """
    if count < 1:
        raise DataValidationError(f"count must be >= 1, got {count}")
    if not (0.0 < bottom_scale < top_scale):
        raise DataValidationError("need 0 < bottom_scale < top_scale")
    _, s, _ = _raw_svd(problem.values)
    sigma1 = float(s[0])
    if sigma1 <= 0.0:
        raise DataValidationError("observed matrix is identically zero; no sensible path")
    return tuple(np.geomspace(top_scale * sigma1, bottom_scale * sigma1, count).tolist())


def objective_f(problem: Problem, y, gamma: float) -> float:
    """Squared-loss objective: 0.5*||P(X) - P(Y)||_F^2 + gamma*||Y||_*."""
    y = as_matrix(y, "y")
    if y.shape != problem.shape:
        raise DimensionMismatchError(f"y shape {y.shape} != problem shape {problem.shape}")
    return _f_value(problem.values, problem.mask.flags, y, float(gamma), nuclear_norm(y))


def objective_g(problem: Problem, y, gamma: float, c: float) -> float:
    """Huber objective: 0.5*||P(X) - P(Y)||^2_{huber,c} + gamma*||Y||_*."""
    y = as_matrix(y, "y")
    if y.shape != problem.shape:
        raise DimensionMismatchError(f"y shape {y.shape} != problem shape {problem.shape}")
    return _g_value(problem.values, problem.mask.flags, y, float(gamma), c, nuclear_norm(y))


def soft_impute(problem: Problem, gamma: float, y_init=None,
                epsilon: float = 1e-5, max_iters: int = 500) -> Solution:
    """Iterate Y <- shrink(P(X) + Pc(Y), gamma) until the relative change
    of successive iterates drops below epsilon.

    Hitting max_iters is not an error; the Solution comes back with
    converged=False.
    """
    gamma = float(gamma)
    if gamma < 0:
        raise DataValidationError(f"gamma must be >= 0, got {gamma}")
    if not epsilon > 0:
        raise DataValidationError(f"epsilon must be positive, got {epsilon}")
    if max_iters < 1:
        raise DataValidationError(f"max_iters must be >= 1, got {max_iters}")
    x = problem.values
    flags = problem.mask.flags
    if y_init is None:
        y = np.zeros(problem.shape)
        nuc = 0.0
    else:
        y = as_matrix(y_init, "y_init")
        if y.shape != problem.shape:
            raise DimensionMismatchError(f"y_init shape {y.shape} != problem shape {problem.shape}")
        nuc = nuclear_norm(y)
    trace = [_f_value(x, flags, y, gamma, nuc)]
    svds = 0
    converged = False
    iterations = 0
    shrunk = np.zeros(0)
    for it in range(1, max_iters + 1):
        y_new, shrunk = shrink_singular_values(np.where(flags, x, y), gamma)
        svds += 1
        trace.append(_f_value(x, flags, y_new, gamma, float(shrunk.sum())))
        done = _rel_change_sq(y_new, y) < epsilon
        y = y_new
        iterations = it
        if done:
            converged = True
            break
    return Solution(y, gamma, iterations, svds, tuple(trace),
                    _rank_from_values(shrunk), converged)


def soft_impute_path(problem: Problem, config: Optional[SolverConfig] = None) -> PathSolution:
    """Run `soft_impute` along a gamma path, warm-starting each stage from
    the previous solution."""
    config = config if config is not None else SolverConfig()
    gammas = config.gamma_path if config.gamma_path is not None else default_gamma_path(problem)
    y = None
    sols = []
    for gamma in gammas:
        sol = soft_impute(problem, gamma, y, config.epsilon, config.max_inner_iters)
        y = sol.y_hat
        sols.append(sol)
    return PathSolution(tuple(sols))


def general_robust(problem: Problem, gamma: float,
                   config: Optional[SolverConfig] = None,
                   completer: Optional[Completer] = None) -> Solution:
    """Robustify an arbitrary completer at a single gamma.

    Round zero completes the raw observations.  Every later round builds
    surrogate observations from the current estimate (observed values kept
    where the residual is within the cutoff, clipped toward the estimate
    beyond it) and re-completes, warm-started at the current estimate.
    Descent of the completer implies descent of the Huber objective, so the
    recorded trace is non-increasing.
    """
    gamma = float(gamma)
    if not gamma > 0:
        raise DataValidationError(f"gamma must be positive, got {gamma}")
    config = config if config is not None else SolverConfig()
    c = config.cutoff if config.cutoff is not None else choose_cutoff(
        gamma, problem.n_rows, problem.n_cols, problem.observed_fraction)
    if completer is None:
        def completer(prob, g, y0):
            return soft_impute(prob, g, y0, config.epsilon, config.max_inner_iters)
    x = problem.values
    flags = problem.mask.flags
    inner = completer(problem, gamma, None)
    y = np.asarray(inner.y_hat, dtype=float)
    svds = inner.svd_count
    trace = [_g_value(x, flags, y, gamma, c, nuclear_norm(y))]
    converged = False
    iterations = 0
    for it in range(1, config.max_outer_iters + 1):
        z = pseudo_data(x, y, problem.mask, c)
        inner = completer(Problem(z, problem.mask), gamma, y)
        y_new = np.asarray(inner.y_hat, dtype=float)
        svds += inner.svd_count
        trace.append(_g_value(x, flags, y_new, gamma, c, nuclear_norm(y_new)))
        done = _rel_change_sq(y_new, y) < config.epsilon
        y = y_new
        iterations = it
        if done:
            converged = True
            break
    return Solution(y, gamma, iterations, svds, tuple(trace), inner.final_rank, converged)


def robust_impute(problem: Problem, config: Optional[SolverConfig] = None) -> PathSolution:
    """Huber-robust completion along a decreasing gamma path.

    Starts from a single plain shrinkage of the observed matrix, then for
    each gamma repeats: build surrogate observations from the current
    estimate, fill the unobserved entries with the estimate, shrink the
    spectrum.  Each stage is warm-started from the previous one and stops
    on the relative-change rule; a stage hitting the iteration cap is
    flagged converged=False and the path continues.

    svd_count on each Solution counts the shrinkage SVDs of that stage; the
    initial shrinkage is attributed to the first stage.
    """
    config = config if config is not None else SolverConfig()
    gammas = config.gamma_path if config.gamma_path is not None else default_gamma_path(problem)
    x = problem.values
    flags = problem.mask.flags
    n1, n2 = problem.shape
    frac = problem.observed_fraction
    y, shrunk = shrink_singular_values(problem.values, gammas[0])
    nuc = float(shrunk.sum())
    pending_svds = 1
    sols = []
    for gamma in gammas:
        c = config.cutoff if config.cutoff is not None else choose_cutoff(gamma, n1, n2, frac)
        svds = pending_svds
        pending_svds = 0
        trace = [_g_value(x, flags, y, gamma, c, nuc)]
        converged = False
        iterations = 0
        for it in range(1, config.max_inner_iters + 1):
            z = pseudo_data(x, y, problem.mask, c)
            y_new, shrunk = shrink_singular_values(np.where(flags, z, y), gamma)
            svds += 1
            nuc = float(shrunk.sum())
            trace.append(_g_value(x, flags, y_new, gamma, c, nuc))
            done = _rel_change_sq(y_new, y) < config.epsilon
            y = y_new
            iterations = it
            if done:
                converged = True
                break
        sols.append(Solution(y, gamma, iterations, svds, tuple(trace),
                             _rank_from_values(shrunk), converged))
    return PathSolution(tuple(sols))


def stationarity_certificate(problem: Problem, y_hat, gamma: float, c: float,
                             rank_tol: float = RANK_TOL) -> CertificateReport:
    """Check the first-order optimality of y_hat for the Huber objective.

    At an exact minimizer, half the elementwise Huber derivative of the
    observed residual, divided by gamma, is a subgradient of the nuclear
    norm at y_hat: its tangent-space component equals u @ v.T and the rest
    has spectral norm at most 1.  The report quantifies both; solver error
    is amplified by 1/gamma, so thresholds should be looser than the solve
    tolerance.
    """
    gamma = float(gamma)
    if not gamma > 0:
        raise DataValidationError(f"gamma must be positive, got {gamma}")
    y_hat = as_matrix(y_hat, "y_hat")
    if y_hat.shape != problem.shape:
        raise DimensionMismatchError(f"y_hat shape {y_hat.shape} != problem shape {problem.shape}")
    resid = _masked_residual(problem.values, problem.mask.flags, y_hat)
    m = 0.5 * psi(resid, c) / gamma
    factors = svd(y_hat)
    s = factors.singular_values
    if s.size == 0 or float(s[0]) <= 0.0:
        return CertificateReport(0.0, float(np.linalg.norm(m, 2)), 0)
    keep = s > rank_tol * float(s[0])
    u = factors.u[:, keep]
    v = factors.v[:, keep]
    r = int(keep.sum())
    utm = u.T @ m
    tangent = u @ utm + (m @ v) @ v.T - u @ (utm @ v) @ v.T
    gap = float(np.linalg.norm(tangent - u @ v.T, "fro"))
    orth = float(np.linalg.norm(m - tangent, 2))
    return CertificateReport(gap, orth, r)
