"""Adjusted least squares conic estimator with unknown error variance (ALS2).

The error variance estimate is the root of ``lambda_min(Psi_n(v)) = 0``; the
conic estimate is the matching null vector, scaled so that
``beta' Psi'_n(sigma2) beta = -n``. That scaling makes the conic estimate,
and the one-step update built on it, similarity equivariant.

Because the estimator is equivariant, the computation runs on the sample
translated to its centroid and rescaled to unit RMS radius; the results are
mapped back exactly. This keeps the quartic moments well scaled wherever the
data sit in the plane.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DegenerateNullSpace,
    EmptyBracket,
    NonNegativeQuadraticForm,
    SingularNormalization,
    TooFewPoints,
)
from .geometry import as_sample, standardize
from .psi import PSI_SECOND, PsiBundle, _pairwise_sum, psi_points

__all__ = ["Als2Fit", "solve_sigma2", "beta_tilde", "covariance", "fit_als2"]

LAMBDA_RTOL = 1e-9
EIGEN_GAP_RTOL = 1e-7
COND_MAX = 1e12


@dataclass(frozen=True)
class Als2Fit:
    """Result of the ALS2 conic fit.

    ``cov_theta`` is the 7x7 asymptotic covariance of ``(beta_tilde, sigma2)``
    (not divided by n); ``cov_theta / n`` is the plug-in variance.
    """

    sigma2_hat: float
    beta_tilde: np.ndarray
    lambda_residual: float
    bundle: PsiBundle
    cov_theta: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.bundle.n

    @property
    def cov_beta(self) -> Optional[np.ndarray]:
        return None if self.cov_theta is None else self.cov_theta[:6, :6]


class _PsiQuadratic:
    """``Psi_n(v) = c0 + v c1 + v^2 c2``; every entry of psi is quadratic in v."""

    def __init__(self, z):
        x, y = z[:, 0], z[:, 1]
        self.n = z.shape[0]
        self.c0 = _pairwise_sum(psi_points(x, y, 0.0, 0))
        self.c1 = _pairwise_sum(psi_points(x, y, 0.0, 1))
        self.c2 = 0.5 * self.n * PSI_SECOND

    def value(self, v):
        m = self.c0 + v * self.c1 + (v * v) * self.c2
        return 0.5 * (m + m.T)

    def derivative(self, v):
        m = self.c1 + (2.0 * v) * self.c2
        return 0.5 * (m + m.T)

    def lambda_min(self, v):
        return np.linalg.eigvalsh(self.value(v))[0]


def _check_size(z):
    if z.shape[0] < 6:
        raise TooFewPoints(f"ALS2 needs at least 6 points, got {z.shape[0]}")


def solve_sigma2(sample):
    """Solve ``lambda_min(Psi_n(v)) = 0`` for its nonnegative root.

    Returns ``(sigma2_hat, bundle)`` where ``bundle`` holds ``Psi_n`` and
    ``Psi'_n`` at the root.
    """
    z = as_sample(sample)
    _check_size(z)
    zs, center, scale = _standardized(z)
    root, bundle = _solve(_PsiQuadratic(zs))
    return root * scale**2, _map_bundle(bundle, monomial_map(center, scale), scale)


def monomial_map(center, scale) -> np.ndarray:
    """Matrix ``M`` with ``u((z - center) / scale) = M u(z)`` for ``u = (x^2, xy, y^2, x, y, 1)``.

    Conic vectors map as ``beta = M' beta_std`` and Psi matrices as
    ``Psi_std(v / scale^2) = M Psi(v) M'``.
    """
    cx, cy = center
    m = np.array(
        [
            [1.0, 0.0, 0.0, -2.0 * cx, 0.0, cx * cx],
            [0.0, 1.0, 0.0, -cy, -cx, cx * cy],
            [0.0, 0.0, 1.0, 0.0, -2.0 * cy, cy * cy],
            [0.0, 0.0, 0.0, scale, 0.0, -scale * cx],
            [0.0, 0.0, 0.0, 0.0, scale, -scale * cy],
            [0.0, 0.0, 0.0, 0.0, 0.0, scale * scale],
        ]
    )
    return m / scale**2


def _standardized(z):
    zs, center, scale = standardize(z)
    if not scale > 0:
        raise DegenerateNullSpace("all points coincide")
    return zs, center, scale


def _map_bundle(bundle, m, scale):
    minv = np.linalg.inv(m)
    psi = minv @ bundle.psi_n @ minv.T
    dpsi = minv @ bundle.dpsi_n @ minv.T / scale**2
    return PsiBundle(0.5 * (psi + psi.T), 0.5 * (dpsi + dpsi.T), bundle.n, bundle.v * scale**2)


def _solve(pq: _PsiQuadratic):
    tol = LAMBDA_RTOL * np.trace(pq.c0) / 6.0
    lam0 = pq.lambda_min(0.0)
    if lam0 < -tol:
        raise EmptyBracket(f"lambda_min(Psi_n(0)) = {lam0:.3e} is negative")
    if lam0 <= tol:
        root = 0.0
    else:
        lo, hi = 0.0, np.trace(pq.c0) / (6.0 * pq.n)
        for _ in range(200):
            if pq.lambda_min(hi) < 0.0:
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise EmptyBracket("could not bracket the root of lambda_min")
        root = brentq(pq.lambda_min, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    bundle = PsiBundle(pq.value(root), pq.derivative(root), pq.n, float(root))
    return float(root), bundle


def _fix_sign(b):
    norm = np.linalg.norm(b)
    pivot = b[2] if abs(b[2]) >= 1e-12 * norm else b[np.argmax(np.abs(b))]
    return -b if pivot < 0 else b


def beta_tilde(bundle: PsiBundle) -> np.ndarray:
    """Null vector of ``Psi_n(sigma2)`` scaled so ``b' Psi'_n b = -n``.

    The sign is fixed by making the ``C`` coefficient positive (or, if it
    vanishes, the largest-magnitude coefficient); line extraction ignores it.
    """
    w, vecs = np.linalg.eigh(bundle.psi_n)
    scale = max(abs(w[-1]), np.finfo(float).tiny)
    if w[1] - w[0] < EIGEN_GAP_RTOL * scale:
        raise DegenerateNullSpace("smallest eigenvalue of Psi_n(sigma2) is not simple")
    b = vecs[:, 0]
    q = b @ bundle.dpsi_n @ b
    if not q < 0.0:
        raise NonNegativeQuadraticForm(f"beta' Psi'_n beta = {q:.3e} is not negative")
    return _fix_sign(np.sqrt(-bundle.n / q) * b)


def scores(sample, beta, sigma2) -> np.ndarray:
    """Per-point estimating-function values ``s_i``, shape ``(n, 7)``.

    ``s_i = (psi_i beta, beta' psi'_i beta / 2 + 1/2)``: the derivatives of the
    normalization equation give the last row of A, so its per-point summand is
    built from ``psi'`` as well.
    """
    z = as_sample(sample)
    x, y = z[:, 0], z[:, 1]
    p0 = psi_points(x, y, sigma2, 0)
    p1 = psi_points(x, y, sigma2, 1)
    s = np.empty((z.shape[0], 7))
    s[:, :6] = p0 @ beta
    s[:, 6] = 0.5 * np.einsum("i,nij,j->n", beta, p1, beta) + 0.5
    return s


def covariance(sample, fit: Als2Fit) -> np.ndarray:
    """Sandwich estimate ``A^-1 B A^-1`` of the asymptotic covariance of ``(beta_tilde, sigma2)``."""
    n = fit.n
    b = fit.beta_tilde
    d = fit.bundle.dpsi_n @ b / n
    a = np.empty((7, 7))
    a[:6, :6] = fit.bundle.psi_n / n
    a[:6, 6] = d
    a[6, :6] = d
    a[6, 6] = 0.5 * b @ PSI_SECOND @ b
    if not np.all(np.isfinite(a)) or np.linalg.cond(a) > COND_MAX:
        raise SingularNormalization("normalization matrix A(n) is numerically singular")
    s = scores(sample, b, fit.sigma2_hat)
    bmat = s.T @ s / n
    a_inv_b = np.linalg.solve(a, bmat)
    cov = np.linalg.solve(a, a_inv_b.T).T
    return 0.5 * (cov + cov.T)


def fit_als2(sample, with_covariance: bool = True) -> Als2Fit:
    """Full ALS2 fit: error variance, normalized conic and (optionally) its covariance."""
    z = as_sample(sample)
    _check_size(z)
    zs, center, scale = _standardized(z)
    sigma2, bundle = _solve(_PsiQuadratic(zs))
    b = beta_tilde(bundle)
    cov = covariance(zs, Als2Fit(sigma2, b, 0.0, bundle)) if with_covariance else None
    # back to the original frame; the normalization b' Psi' b = -n carries over
    m = monomial_map(center, scale)
    jac = np.zeros((7, 7))
    jac[:6, :6] = scale * m.T
    jac[6, 6] = scale**2
    b_orig = jac[:6, :6] @ b
    if _fix_sign(b_orig) is not b_orig:
        b_orig, jac[:6, :6] = -b_orig, -jac[:6, :6]
    bundle_orig = _map_bundle(bundle, m, scale)
    resid = float(np.linalg.norm(bundle_orig.psi_n @ b_orig) / np.linalg.norm(b_orig))
    if cov is not None:
        cov = jac @ cov @ jac.T
        cov = 0.5 * (cov + cov.T)
    return Als2Fit(sigma2 * scale**2, b_orig, resid, bundle_orig, cov)
