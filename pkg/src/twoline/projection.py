"""From a fitted conic to a pair of lines.

Conic vectors follow ``beta = (A, 2B, C, 2D, 2E, F)``; the formulas written
against ``(A, B, C, D, E, F)`` convert explicitly. The "ignore-F" map reads
the lines off ``A, B, C, D, E`` only (the asymptotes of a hyperbola); the
updated estimator first moves the conic one weighted Newton step towards the
degenerate surface ``det = 0``.
"""

from __future__ import annotations

import numpy as np

from .als2 import fit_als2
from .errors import (
    CoincidentLines,
    DegenerateDirection,
    EllipticConic,
    VerticalAsymptote,
)
from .geometry import LinePair, as_sample, line_from_explicit
from .results import LineFitResult, Method

__all__ = [
    "lines_to_beta",
    "beta_to_lines",
    "beta_to_params",
    "delta",
    "delta_grad",
    "one_step_update",
    "jacobian_K",
    "fit_ignore_f",
    "fit_updated",
]

C_RTOL = 1e-10
DISC_RTOL = 1e-12
DELTA_RTOL = 1e-13


def lines_to_beta(lp: LinePair, c: float = 1.0) -> np.ndarray:
    """Conic vector of the product ``C (k1 x - y + h1)(k2 x - y + h2) = 0``."""
    if c == 0:
        raise ValueError("c must be nonzero")
    k1, h1, k2, h2 = lp.explicit()
    return c * np.array([k1 * k2, -(k1 + k2), 1.0, k1 * h2 + k2 * h1, -(h1 + h2), h1 * h2])


def beta_to_params(b) -> np.ndarray:
    """``(k1, h1, k2, h2)`` with ``k1 < k2`` from the first five conic coefficients."""
    b = np.asarray(b, dtype=float)
    norm = np.linalg.norm(b)
    a, bb, c = b[0], 0.5 * b[1], b[2]
    if abs(c) < C_RTOL * norm:
        raise VerticalAsymptote("C vanishes: one line is parallel to the y-axis")
    disc = bb * bb - a * c
    eps = DISC_RTOL * norm * norm
    if disc <= -eps:
        raise EllipticConic("B^2 - AC < 0: the estimated conic is an ellipse")
    if disc < eps:
        raise CoincidentLines("B^2 - AC = 0: the estimated slopes coincide")
    # roots of C k^2 + 2B k + A = 0 without cancellation
    q = -(bb + np.copysign(np.sqrt(disc), bb))
    k1, k2 = sorted((q / c, a / q))
    h1 = (b[3] + k1 * b[4]) / (c * (k2 - k1))
    h2 = (b[3] + k2 * b[4]) / (c * (k1 - k2))
    return np.array([k1, h1, k2, h2])


def beta_to_lines(b) -> LinePair:
    k1, h1, k2, h2 = beta_to_params(b)
    return LinePair(line_from_explicit(k1, h1), line_from_explicit(k2, h2))


def _halved(b):
    b = np.asarray(b, dtype=float)
    return b[0], 0.5 * b[1], b[2], 0.5 * b[3], 0.5 * b[4], b[5]


def delta(b) -> float:
    """Determinant of the symmetric 3x3 conic matrix."""
    a, bb, c, d, e, f = _halved(b)
    return a * c * f + 2 * bb * d * e - a * e * e - c * d * d - bb * bb * f


def delta_grad(b) -> np.ndarray:
    """Gradient of :func:`delta` with respect to the stored vector ``(A, 2B, C, 2D, 2E, F)``."""
    a, bb, c, d, e, f = _halved(b)
    return np.array(
        [c * f - e * e, d * e - bb * f, a * f - d * d, bb * e - c * d, bb * d - a * e, a * c - bb * bb]
    )


def one_step_update(bt, cov6) -> np.ndarray:
    """One covariance-weighted Newton step from ``bt`` towards ``delta = 0``.

    A conic that is already degenerate to rounding (``|delta|`` below
    ``DELTA_RTOL |bt|^3``, e.g. from noise-free data) is returned unchanged.
    """
    bt = np.asarray(bt, dtype=float)
    cov6 = np.asarray(cov6, dtype=float)
    dlt = delta(bt)
    if abs(dlt) <= DELTA_RTOL * np.linalg.norm(bt) ** 3:
        return bt.copy()
    g = delta_grad(bt)
    sg = cov6 @ g
    denom = g @ sg
    if not denom > 1e-14 * (g @ g) * np.linalg.norm(cov6, 2):
        raise DegenerateDirection("gradient of the determinant has no variance along it")
    return bt - (dlt / denom) * sg


def jacobian_K(b) -> np.ndarray:
    """4x6 derivative of ``beta -> (k1, h1, k2, h2)``, by implicit differentiation.

    The slopes solve ``b0 + b1 k + b2 k^2 = 0``; the intercepts solve
    ``b3 = b2 (k1 h2 + k2 h1)`` and ``b4 = -b2 (h1 + h2)``.
    """
    b = np.asarray(b, dtype=float)
    k1, h1, k2, h2 = beta_to_params(b)
    dk = np.zeros((2, 6))
    for j, k in enumerate((k1, k2)):
        dk[j, :3] = -np.array([1.0, k, k * k]) / (b[1] + 2.0 * b[2] * k)
    g_h = b[2] * np.array([[k2, k1], [-1.0, -1.0]])
    g_k = b[2] * np.array([[h2, h1], [0.0, 0.0]])
    g_b = np.zeros((2, 6))
    g_b[:, 2] = [k1 * h2 + k2 * h1, -(h1 + h2)]
    g_b[0, 3] = -1.0
    g_b[1, 4] = -1.0
    dh = -np.linalg.solve(g_h, g_k @ dk + g_b)
    return np.vstack([dk[0], dh[0], dk[1], dh[1]])


def _projected_cov(cov6, g):
    sg = cov6 @ g
    return cov6 - np.outer(sg, sg) / (g @ sg)


def _sandwich(k, cov, n):
    c = k @ cov @ k.T / n
    return 0.5 * (c + c.T)


def fit_ignore_f(sample) -> LineFitResult:
    """Lines read off the ALS2 conic; covariance ``K Sigma_beta K' / n``."""
    z = as_sample(sample)
    fit = fit_als2(z)
    params = beta_to_params(fit.beta_tilde)
    lines = LinePair.from_explicit(*params)
    cov = _sandwich(jacobian_K(fit.beta_tilde), fit.cov_beta, fit.n)
    return LineFitResult(
        lines,
        fit.sigma2_hat,
        Method.IGNORE_F,
        cov,
        {"n": fit.n, "delta": delta(fit.beta_tilde), "lambda_residual": fit.lambda_residual},
    )


def _unit_normalized(b, cov6):
    norm = np.linalg.norm(b)
    u = b / norm
    j = (np.eye(6) - np.outer(u, u)) / norm
    return u, j @ cov6 @ j.T


def fit_updated(sample, normalization: str = "psi") -> LineFitResult:
    """Ignore-F lines after a one-step update of the ALS2 conic.

    ``normalization="psi"`` (default) uses the equivariant scaling
    ``b' Psi'_n b = -n``; ``"unit"`` rescales to ``|b| = 1`` first, which
    changes finite-sample estimates but not the asymptotic covariance.
    """
    z = as_sample(sample)
    fit = fit_als2(z)
    b, cov6 = fit.beta_tilde, fit.cov_beta
    if normalization == "unit":
        b, cov6 = _unit_normalized(b, cov6)
    elif normalization != "psi":
        raise ValueError(f"unknown normalization {normalization!r}")
    b1 = one_step_update(b, cov6)
    params = beta_to_params(b1)
    lines = LinePair.from_explicit(*params)
    cov = _sandwich(jacobian_K(b1), _projected_cov(cov6, delta_grad(b1)), fit.n)
    return LineFitResult(
        lines,
        fit.sigma2_hat,
        Method.UPDATED,
        cov,
        {
            "n": fit.n,
            "delta_before": delta(b),
            "delta_after": delta(b1),
            "normalization": normalization,
            "lambda_residual": fit.lambda_residual,
        },
    )
