"""Synthetic benchmarks and image degradation.

Everything is driven by integer seeds through numpy Generators; a master
seed plus (setting index, replicate index) determines every instance, so a
benchmark re-run with the same seed reproduces results exactly.  Replicates
are generated and solved sequentially in index order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DataValidationError, RobustMcError
from .matcore import ObservationMask, Problem, _frozen, as_matrix
from .solvers import (
    SolverConfig,
    default_gamma_path,
    robust_impute,
    soft_impute_path,
)

_SEED_MASK = 0xFFFFFFFFFFFFFFFF
OUTLIER_NOISE_SCALE = 4.0  # outlier noise sd, in units of the base noise sd

METHODS = ("robust", "soft")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one random low-rank instance."""

    n_rows: int
    n_cols: int
    rank: int
    snr: float
    outlier_prob: float
    missing_prob: float
    seed: int

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise DataValidationError(f"dimensions must be positive, got {self.n_rows}x{self.n_cols}")
        if not 1 <= self.rank <= min(self.n_rows, self.n_cols):
            raise DataValidationError(f"rank must lie in [1, min(n1, n2)], got {self.rank}")
        if not self.snr > 0:
            raise DataValidationError(f"snr must be positive, got {self.snr}")
        if not 0.0 <= self.outlier_prob < 1.0:
            raise DataValidationError(f"outlier_prob must be in [0, 1), got {self.outlier_prob}")
        if not 0.0 <= self.missing_prob < 1.0:
            raise DataValidationError(f"missing_prob must be in [0, 1), got {self.missing_prob}")

    @property
    def setting_id(self) -> str:
        return (f"n{self.n_rows}x{self.n_cols}_r{self.rank}_s{self.snr:g}"
                f"_p{self.outlier_prob:g}_q{self.missing_prob:g}")


@dataclass(frozen=True)
class GroundTruthInstance:
    """A contaminated instance together with everything needed to score it.

    Among the observed entries, `outlier_set` marks the grossly corrupted
    positions and `clean_observed_set` the merely noisy rest; training
    error is scored on the latter, test error on the unobserved entries
    against the clean target.
    """

    x0: np.ndarray
    x: np.ndarray
    mask: ObservationMask
    outlier_set: ObservationMask
    clean_observed_set: ObservationMask
    sigma: float

    def __post_init__(self):
        x0 = as_matrix(self.x0, "x0")
        x = as_matrix(self.x, "x")
        if x0.shape != x.shape or x0.shape != self.mask.shape:
            raise DataValidationError("x0, x and mask must share a shape")
        both = self.outlier_set.flags & self.clean_observed_set.flags
        union = self.outlier_set.flags | self.clean_observed_set.flags
        if both.any() or not np.array_equal(union, self.mask.flags):
            raise DataValidationError(
                "outlier_set and clean_observed_set must partition the observed set"
            )
        object.__setattr__(self, "x0", _frozen(x0))
        object.__setattr__(self, "x", _frozen(x))

    def problem(self) -> Problem:
        return Problem.from_full(self.x, self.mask)


@dataclass(frozen=True)
class MissingSpec:
    """How pixels go missing in an image experiment."""

    mode: str
    rate: float = 0.0
    patch_size: int = 16

    def __post_init__(self):
        if self.mode not in ("none", "independent", "clustered"):
            raise DataValidationError(f"unknown missing mode {self.mode!r}")
        if self.mode != "none" and not 0.0 < self.rate < 1.0:
            raise DataValidationError(f"missing rate must be in (0, 1), got {self.rate}")
        if self.patch_size < 1:
            raise DataValidationError(f"patch_size must be >= 1, got {self.patch_size}")

    @classmethod
    def none(cls) -> "MissingSpec":
        return cls("none")

    @classmethod
    def independent(cls, rate: float) -> "MissingSpec":
        return cls("independent", rate)

    @classmethod
    def clustered(cls, rate: float, patch_size: int = 16) -> "MissingSpec":
        return cls("clustered", rate, patch_size)


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(int(seed) & _SEED_MASK)


def replicate_seed(master_seed: int, spec_index: int, replicate_index: int) -> int:
    """Stable per-replicate seed: first 64-bit word of the child sequence
    spawned from the master seed at key (spec_index, replicate_index)."""
    ss = np.random.SeedSequence(
        int(master_seed) & _SEED_MASK, spawn_key=(int(spec_index), int(replicate_index))
    )
    return int(ss.generate_state(1, np.uint64)[0])


def _sample_independent_mask(rng, shape, missing_prob, retries: int = 8) -> np.ndarray:
    for _ in range(retries):
        observed = rng.random(shape) >= missing_prob
        if observed.any():
            return observed
    raise DataValidationError("failed to sample a nonempty observation set")


def generate_synthetic(spec: SyntheticSpec) -> GroundTruthInstance:
    """Low-rank target + dense noise + sparse gross noise + random mask.

    The target is a product of two iid standard normal factor matrices.
    The base noise sd makes the signal-to-noise ratio (sqrt of entry
    variance over noise variance) equal spec.snr; with probability
    spec.outlier_prob an entry additionally receives independent noise at
    OUTLIER_NOISE_SCALE times that sd.  Entries go missing independently
    with probability spec.missing_prob.
    """
    rng = _rng(spec.seed)
    u = rng.standard_normal((spec.n_rows, spec.rank))
    v = rng.standard_normal((spec.n_cols, spec.rank))
    x0 = u @ v.T
    sigma = float(np.sqrt(x0.var()) / spec.snr)
    x = x0 + rng.normal(0.0, sigma, x0.shape)
    outliers = rng.random(x0.shape) < spec.outlier_prob
    x = x + np.where(outliers, rng.normal(0.0, OUTLIER_NOISE_SCALE * sigma, x0.shape), 0.0)
    observed = _sample_independent_mask(rng, x0.shape, spec.missing_prob)
    return GroundTruthInstance(
        x0=x0,
        x=x,
        mask=ObservationMask(observed),
        outlier_set=ObservationMask(outliers & observed),
        clean_observed_set=ObservationMask(observed & ~outliers),
        sigma=sigma,
    )


def training_error(instance: GroundTruthInstance, y_hat) -> float:
    """Relative squared error on the clean observed entries.

    Outlier positions are excluded, so a fit dragged toward them scores
    worse here, not better.
    """
    y_hat = as_matrix(y_hat, "y_hat")
    if y_hat.shape != instance.x.shape:
        raise DataValidationError(f"y_hat shape {y_hat.shape} != instance shape {instance.x.shape}")
    gamma_flags = instance.clean_observed_set.flags
    if not gamma_flags.any():
        raise DataValidationError("no clean observed entries to score")
    den = float(np.sum(np.where(gamma_flags, instance.x, 0.0) ** 2))
    if den == 0.0:
        raise DataValidationError("clean observed entries are all zero; error undefined")
    num = float(np.sum(np.where(gamma_flags, instance.x - y_hat, 0.0) ** 2))
    return num / den


def test_error(instance: GroundTruthInstance, y_hat) -> float:
    """Relative squared error on the unobserved entries against the clean target."""
    y_hat = as_matrix(y_hat, "y_hat")
    if y_hat.shape != instance.x.shape:
        raise DataValidationError(f"y_hat shape {y_hat.shape} != instance shape {instance.x.shape}")
    unobs = ~instance.mask.flags
    if not unobs.any():
        raise DataValidationError("no unobserved entries to score")
    den = float(np.sum(np.where(unobs, instance.x0, 0.0) ** 2))
    if den == 0.0:
        raise DataValidationError("clean target vanishes off the mask; error undefined")
    num = float(np.sum(np.where(unobs, instance.x0 - y_hat, 0.0) ** 2))
    return num / den


def _grow_patches(rng, n_rows: int, n_cols: int, missing_frac: float, patch_size: int) -> np.ndarray:
    if patch_size > n_rows or patch_size > n_cols:
        raise DataValidationError(
            f"patch_size {patch_size} does not fit a {n_rows}x{n_cols} grid"
        )
    target = missing_frac * n_rows * n_cols
    if patch_size * patch_size > target:
        raise DataValidationError(
            "missing_frac too small to hold a single patch; "
            f"need missing_frac*cells >= {patch_size * patch_size}"
        )
    missing = np.zeros((n_rows, n_cols), dtype=bool)
    while missing.sum() < target:
        i = int(rng.integers(0, n_rows - patch_size + 1))
        j = int(rng.integers(0, n_cols - patch_size + 1))
        missing[i:i + patch_size, j:j + patch_size] = True
    if missing.all():
        raise DataValidationError("patches covered the whole grid; nothing observed")
    return ~missing


def clustered_mask(n_rows: int, n_cols: int, missing_frac: float,
                   patch_size: int, seed: int) -> ObservationMask:
    """Missingness as a union of full square patches.

    Patches of side patch_size are dropped at uniformly random positions
    (fully inside the grid, overlaps allowed) until the missing fraction
    reaches missing_frac; the observed complement is returned.  Overshoot
    is at most one patch's area.
    """
    if not 0.0 < missing_frac < 1.0:
        raise DataValidationError(f"missing_frac must be in (0, 1), got {missing_frac}")
    return ObservationMask(_grow_patches(_rng(seed), n_rows, n_cols, missing_frac, patch_size))


def degrade_image(img, snr: float, outlier_frac: float, outlier_snr: float,
                  missing: MissingSpec, seed: int) -> GroundTruthInstance:
    """Contaminate a grayscale image the way the synthetic generator
    contaminates a low-rank target.

    Dense Gaussian noise is calibrated so sqrt(Var(img)/noise var) = snr;
    an exact round(outlier_frac * pixels) subset of pixels, sampled without
    replacement, receives additional noise calibrated to outlier_snr.
    Missing pixels follow `missing`.
    """
    img = as_matrix(img, "img")
    var = float(img.var())
    if var == 0.0:
        raise DataValidationError("image has zero variance; SNR calibration undefined")
    if not snr > 0:
        raise DataValidationError(f"snr must be positive, got {snr}")
    if not outlier_snr > 0:
        raise DataValidationError(f"outlier_snr must be positive, got {outlier_snr}")
    if not 0.0 <= outlier_frac <= 1.0:
        raise DataValidationError(f"outlier_frac must be in [0, 1], got {outlier_frac}")
    rng = _rng(seed)
    scale = float(np.sqrt(var))
    sigma = scale / snr
    x = img + rng.normal(0.0, sigma, img.shape)
    n_out = int(round(outlier_frac * img.size))
    outliers = np.zeros(img.shape, dtype=bool)
    if n_out > 0:
        chosen = rng.choice(img.size, size=n_out, replace=False)
        outliers.flat[chosen] = True
        x = x + np.where(outliers, rng.normal(0.0, scale / outlier_snr, img.shape), 0.0)
    if missing.mode == "none":
        observed = np.ones(img.shape, dtype=bool)
    elif missing.mode == "independent":
        observed = _sample_independent_mask(rng, img.shape, missing.rate)
    else:
        observed = _grow_patches(rng, img.shape[0], img.shape[1], missing.rate, missing.patch_size)
    return GroundTruthInstance(
        x0=img,
        x=x,
        mask=ObservationMask(observed),
        outlier_set=ObservationMask(outliers & observed),
        clean_observed_set=ObservationMask(observed & ~outliers),
        sigma=sigma,
    )


@dataclass(frozen=True)
class PathRecord:
    """One (replicate, path stage) measurement."""

    replicate: int
    gamma_index: int
    gamma: float
    fitted_rank: int
    training_error: float
    test_error: float
    svd_count: int
    converged: bool


@dataclass(frozen=True)
class RankSummary:
    """Mean +- standard error of the measurements at one fitted rank."""

    rank: int
    n: int
    mean_training_error: float
    se_training_error: float
    mean_test_error: float
    se_test_error: float
    mean_svd_count: float
    se_svd_count: float


@dataclass(frozen=True)
class BenchResult:
    """All measurements for one (setting, method) pair."""

    setting_id: str
    method: str
    replicates: int
    records: tuple
    failures: tuple  # (replicate index, message)

    def best_test_errors(self) -> list:
        """Per replicate, the smallest test error along the path."""
        best = {}
        for rec in self.records:
            cur = best.get(rec.replicate)
            if cur is None or rec.test_error < cur:
                best[rec.replicate] = rec.test_error
        return [best[r] for r in sorted(best)]

    @property
    def mean_best_test_error(self) -> float:
        vals = self.best_test_errors()
        if not vals:
            raise DataValidationError("no successful replicates")
        return float(np.mean(vals))

    def rank_summaries(self) -> list:
        return summarize_by_rank(self.records)


def _mean_se(values) -> tuple:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, se


def summarize_by_rank(records) -> list:
    """Aggregate records by fitted rank.

    A replicate contributes to rank r through the first path stage whose
    solution has that rank; replicates whose path never hits r are left out
    of r's average, mirroring how per-rank error tables discard fits that
    lack the rank.
    """
    per_rank = {}
    for rec in records:
        slot = per_rank.setdefault(rec.fitted_rank, {})
        if rec.replicate not in slot:
            slot[rec.replicate] = rec
    out = []
    for rank in sorted(per_rank):
        chosen = [per_rank[rank][r] for r in sorted(per_rank[rank])]
        tr_m, tr_s = _mean_se([c.training_error for c in chosen])
        te_m, te_s = _mean_se([c.test_error for c in chosen])
        sv_m, sv_s = _mean_se([c.svd_count for c in chosen])
        out.append(RankSummary(rank, len(chosen), tr_m, tr_s, te_m, te_s, sv_m, sv_s))
    return out


def _solve_path(method: str, problem: Problem, config: SolverConfig):
    if method == "robust":
        return robust_impute(problem, config)
    if method == "soft":
        return soft_impute_path(problem, config)
    raise DataValidationError(f"unknown method {method!r}")


def run_benchmark(spec_grid: Sequence[SyntheticSpec], methods: Sequence[str],
                  replicates: int, seed: int,
                  gamma_count: int = 20, epsilon: float = 1e-5,
                  max_inner_iters: int = 500,
                  cutoff: Optional[float] = None) -> list:
    """Run each method over seeded replicates of each setting.

    The seed of each grid entry is ignored; instance seeds derive from the
    master seed via `replicate_seed`, so two calls with equal arguments
    return identical results.  All methods see the same instance and the
    same gamma path (derived from the observed matrix) within a replicate.
    A method failure on one replicate is recorded and the run continues.
    """
    if replicates < 1:
        raise DataValidationError(f"replicates must be >= 1, got {replicates}")
    for m in methods:
        if m not in METHODS:
            raise DataValidationError(f"unknown method {m!r}; expected subset of {METHODS}")
    results = []
    for spec_index, spec in enumerate(spec_grid):
        records = {m: [] for m in methods}
        failures = {m: [] for m in methods}
        for rep in range(replicates):
            inst = generate_synthetic(replace(spec, seed=replicate_seed(seed, spec_index, rep)))
            problem = inst.problem()
            gammas = default_gamma_path(problem, gamma_count)
            config = SolverConfig(gamma_path=gammas, cutoff=cutoff, epsilon=epsilon,
                                  max_inner_iters=max_inner_iters)
            for m in methods:
                try:
                    path = _solve_path(m, problem, config)
                    for gi, sol in enumerate(path):
                        records[m].append(PathRecord(
                            replicate=rep,
                            gamma_index=gi,
                            gamma=sol.gamma,
                            fitted_rank=sol.final_rank,
                            training_error=training_error(inst, sol.y_hat),
                            test_error=test_error(inst, sol.y_hat),
                            svd_count=sol.svd_count,
                            converged=sol.converged,
                        ))
                except (RobustMcError, np.linalg.LinAlgError) as exc:
                    failures[m].append((rep, str(exc)))
        for m in methods:
            results.append(BenchResult(spec.setting_id, m, replicates,
                                       tuple(records[m]), tuple(failures[m])))
    return results
