"""Independent re-implementations used as oracles by the test suite.

Spectral shrinkage here is built from the eigendecomposition of the Gram
matrix (never numpy's svd), and the minimizers are plain proximal-gradient
loops with step sizes away from 1, so their fixed points are reached along
a different computational path than the production one-shot operators.
"""

import numpy as np


def gram_singular_values(a):
    lam = np.linalg.eigvalsh(np.asarray(a).T @ np.asarray(a))
    return np.sqrt(np.clip(lam, 0.0, None))[::-1]


def nuclear_norm_oracle(a):
    return float(gram_singular_values(a).sum())


def gram_shrink(a, t):
    """Spectral soft-threshold by t, via eigh of a.T @ a."""
    a = np.asarray(a, dtype=float)
    lam, v = np.linalg.eigh(a.T @ a)
    s = np.sqrt(np.clip(lam, 0.0, None))
    scale = np.zeros_like(s)
    pos = s > 0
    scale[pos] = np.maximum(s[pos] - t, 0.0) / s[pos]
    return a @ ((v * scale) @ v.T)


def prox_objective(m, y, gamma):
    return 0.5 * float(np.sum((m - y) ** 2)) + gamma * nuclear_norm_oracle(y)


def prox_nuclear_oracle(m, gamma, step=0.5, obj_tol=1e-9, max_iters=200000):
    """Proximal gradient on 0.5*||m - Y||_F^2 + gamma*||Y||_*."""
    m = np.asarray(m, dtype=float)
    y = np.zeros_like(m)
    prev = prox_objective(m, y, gamma)
    for _ in range(max_iters):
        y = gram_shrink(y - step * (y - m), step * gamma)
        cur = prox_objective(m, y, gamma)
        if abs(prev - cur) < obj_tol:
            return y
        prev = cur
    raise AssertionError("prox oracle failed to converge")


def completion_objective(x, flags, y, gamma):
    r = np.where(flags, x - y, 0.0)
    return 0.5 * float(np.sum(r * r)) + gamma * nuclear_norm_oracle(y)


def completion_oracle(x, flags, gamma, step=0.6, obj_tol=1e-11, max_iters=500000):
    """Proximal gradient on 0.5*||P(x) - P(Y)||_F^2 + gamma*||Y||_*.

    The step of 0.6 keeps this a genuinely different iteration from the
    fill-and-shrink fixed point (which is the step-1 special case).
    """
    x = np.asarray(x, dtype=float)
    y = np.zeros_like(x)
    prev = completion_objective(x, flags, y, gamma)
    for _ in range(max_iters):
        y = gram_shrink(y + step * np.where(flags, x - y, 0.0), step * gamma)
        cur = completion_objective(x, flags, y, gamma)
        if abs(prev - cur) < obj_tol:
            return y
        prev = cur
    raise AssertionError("completion oracle failed to converge")
