"""Huber loss machinery.

The loss is quadratic inside [-c, c] and grows linearly outside, which is
what bounds the influence of gross outliers while keeping the criterion
convex.  All functions accept scalars or arrays (applied elementwise) and
are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataValidationError, DimensionMismatchError
from .matcore import ObservationMask


@dataclass(frozen=True)
class HuberParams:
    """Validated Huber cutoff (same units as the matrix entries)."""

    c: float

    def __post_init__(self):
        if not (self.c > 0 and np.isfinite(self.c)):
            raise DataValidationError(f"cutoff c must be positive and finite, got {self.c}")


def _check_cutoff(c: float) -> float:
    c = float(c)
    if not (c > 0 and np.isfinite(c)):
        raise DataValidationError(f"cutoff c must be positive and finite, got {c}")
    return c


def rho(x, c: float):
    """Huber loss: x**2 for |x| <= c, c*(2|x| - c) beyond."""
    c = _check_cutoff(c)
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = np.where(ax <= c, x * x, c * (2.0 * ax - c))
    return float(out) if out.ndim == 0 else out


def psi(x, c: float):
    """Derivative of `rho`: 2x inside [-c, c], clipped to +-2c outside."""
    c = _check_cutoff(c)
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) <= c, 2.0 * x, 2.0 * c * np.sign(x))
    return float(out) if out.ndim == 0 else out


def huber_norm_sq(m, c: float) -> float:
    """Sum of the Huber loss over all entries.

    Coincides with the squared Frobenius norm once c dominates every |entry|.
    """
    m = np.asarray(m, dtype=float)
    return float(np.sum(rho(m, c)))


def soft_threshold_scalar(x, c: float):
    """Shrink toward zero by c: the minimizer of 0.5*(x - s)**2 + c*|s|."""
    c = _check_cutoff(c)
    x = np.asarray(x, dtype=float)
    out = np.where(x > c, x - c, np.where(x < -c, x + c, 0.0))
    return float(out) if out.ndim == 0 else out


def pseudo_data(x_obs, y_cur, mask: ObservationMask, c: float) -> np.ndarray:
    """Surrogate observations for one robust step.

    On the mask, residuals within +-c pass the observed value through
    untouched (exactly, no arithmetic applied); residuals beyond the cutoff
    are replaced by the current estimate moved c toward the observation.
    Off the mask the result is zero.
    """
    c = _check_cutoff(c)
    x_obs = np.asarray(x_obs, dtype=float)
    y_cur = np.asarray(y_cur, dtype=float)
    if x_obs.shape != y_cur.shape or x_obs.shape != mask.shape:
        raise DimensionMismatchError(
            f"shapes differ: x {x_obs.shape}, y {y_cur.shape}, mask {mask.shape}"
        )
    e = x_obs - y_cur
    clipped = np.where(e > c, y_cur + c, np.where(e < -c, y_cur - c, x_obs))
    return np.where(mask.flags, clipped, 0.0)


def choose_cutoff(gamma: float, n_rows: int, n_cols: int, observed_fraction: float) -> float:
    """Cutoff rule tied to the regularization weight.

    c = gamma / sqrt(max(n_rows, n_cols) * observed_fraction).  Scales
    linearly in gamma, so a gamma path with auto cutoffs keeps the ratio
    c/gamma fixed for a given problem size and sampling rate.
    """
    if not gamma > 0:
        raise DataValidationError(f"gamma must be positive, got {gamma}")
    if n_rows < 1 or n_cols < 1:
        raise DataValidationError(f"dimensions must be positive, got {n_rows}x{n_cols}")
    if not (0.0 < observed_fraction <= 1.0):
        raise DataValidationError(
            f"observed_fraction must be in (0, 1], got {observed_fraction}"
        )
    return float(gamma) / np.sqrt(max(n_rows, n_cols) * observed_fraction)
