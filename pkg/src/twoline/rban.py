"""RBAN moment estimator for a pair of lines.

The 14 sample means of the monomials of degree 1 to 4 are matched to their
model expectations by generalized least squares. Model moments are linear in
the nuisance vector ``c = (p (1, mu1), (1 - p) (1, mu2))`` (``mu_j`` holds
the first four raw moments of the true abscissa on line ``j``), so the
nuisance block is profiled out in closed form and only the five line and
noise parameters are searched numerically.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, null_space, solve_triangular
from scipy.optimize import least_squares, minimize

from .errors import (
    EstimationFailure,
    IllConditionedMoments,
    InitFailed,
    NoDescent,
    RankDeficientJacobian,
    TooFewPoints,
)
from .geometry import Line, LinePair, SimilarityTransform, apply_similarity, as_sample, line_from_explicit, standardize
from .results import LineFitResult, Method

__all__ = [
    "MONOMIALS",
    "moment_vector",
    "MomentSummary",
    "moment_summary",
    "RbanTheta",
    "NuisanceBlock",
    "line_moment_matrix",
    "f2_eval",
    "f2_jacobian",
    "profiled_criterion",
    "fit_rban",
    "rban_covariance",
]

MONOMIALS = (
    (4, 0), (3, 1), (2, 2), (1, 3), (0, 4),
    (3, 0), (2, 1), (1, 2), (0, 3),
    (2, 0), (1, 1), (0, 2),
    (1, 0), (0, 1),
)  # fmt: skip
_PA = np.array([a for a, _ in MONOMIALS])
_PB = np.array([b for _, b in MONOMIALS])
COND_MAX = 1e12
RIDGE = 1e-10

_NOISE_MOMENT = {0: 1.0, 2: 1.0, 4: 3.0}  # in units of sigma^(order)


def _build_terms():
    # E[(xi + d)^a (k xi + h + e)^b] = sum_q L[row, q] E xi^q, each L entry a
    # sum of c * s^e * k^t * h^m with s the noise variance
    rows, qs, cs, es, ts, ms = [], [], [], [], [], []
    for r, (a, b) in enumerate(MONOMIALS):
        for i in range(0, a + 1, 2):
            for j in range(0, b + 1, 2):
                for t in range(b - j + 1):
                    rows.append(r)
                    qs.append(a - i + t)
                    cs.append(comb(a, i) * comb(b, j) * comb(b - j, t) * _NOISE_MOMENT[i] * _NOISE_MOMENT[j])
                    es.append((i + j) // 2)
                    ts.append(t)
                    ms.append(b - j - t)
    return tuple(np.array(v) for v in (rows, qs, cs)) + tuple(np.array(v) for v in (es, ts, ms))


_ROW, _Q, _C, _E, _T, _M = _build_terms()
_C = _C.astype(float)


def moment_vector(x, y) -> np.ndarray:
    """Monomials ``x^a y^b`` in the fixed order of :data:`MONOMIALS`; shape ``(..., 14)``."""
    x = np.asarray(x, dtype=float)[..., None]
    y = np.asarray(y, dtype=float)[..., None]
    return x**_PA * y**_PB


@dataclass(frozen=True)
class MomentSummary:
    m_bar: np.ndarray
    sigma_m: np.ndarray
    n: int


def moment_summary(sample) -> MomentSummary:
    """Sample mean and (1/n-normalized) covariance of the monomial vectors."""
    z = as_sample(sample)
    m = moment_vector(z[:, 0], z[:, 1])
    m_bar = m.mean(axis=0)
    d = m - m_bar
    s = d.T @ d / z.shape[0]
    return MomentSummary(m_bar, 0.5 * (s + s.T), z.shape[0])


@dataclass(frozen=True)
class RbanTheta:
    k1: float
    h1: float
    k2: float
    h2: float
    sigma2: float

    @classmethod
    def from_vector(cls, v) -> "RbanTheta":
        k1, h1, k2, h2, s2 = (float(t) for t in v)
        if k2 < k1:
            k1, h1, k2, h2 = k2, h2, k1, h1
        return cls(k1, h1, k2, h2, s2)

    def vector(self) -> np.ndarray:
        return np.array([self.k1, self.h1, self.k2, self.h2, self.sigma2])


@dataclass(frozen=True)
class NuisanceBlock:
    """Mixing weight and per-line raw moments ``mu[j, q-1] = E xi^q`` on line ``j``."""

    p: float
    mu: np.ndarray

    def coefficients(self) -> np.ndarray:
        c = np.empty(10)
        c[:5] = self.p * np.r_[1.0, self.mu[0]]
        c[5:] = (1.0 - self.p) * np.r_[1.0, self.mu[1]]
        return c


def _powers(base, expo):
    # base**expo with 0**0 = 1 and a safe derivative factor expo * base**(expo-1)
    val = base**expo
    der = np.where(expo > 0, expo * base ** np.maximum(expo - 1, 0), 0.0)
    return val, der


def line_moment_matrix(k, h, sigma2, deriv: bool = False):
    """14x5 matrix ``L`` with ``E m(xi + d, k xi + h + e) = L (1, E xi, ..., E xi^4)``.

    With ``deriv=True`` also returns ``(dL/dk, dL/dh, dL/dsigma2)``.
    """
    sv, sd = _powers(float(sigma2), _E)
    kv, kd = _powers(float(k), _T)
    hv, hd = _powers(float(h), _M)
    out = np.zeros((14, 5))
    np.add.at(out, (_ROW, _Q), _C * sv * kv * hv)
    if not deriv:
        return out
    parts = []
    for w in (_C * sv * kd * hv, _C * sv * kv * hd, _C * sd * kv * hv):
        d = np.zeros((14, 5))
        np.add.at(d, (_ROW, _Q), w)
        parts.append(d)
    return out, tuple(parts)


def _stacked(theta: RbanTheta, deriv=False):
    if not deriv:
        return np.hstack(
            [line_moment_matrix(theta.k1, theta.h1, theta.sigma2), line_moment_matrix(theta.k2, theta.h2, theta.sigma2)]
        )
    l1, (d1k, d1h, d1s) = line_moment_matrix(theta.k1, theta.h1, theta.sigma2, True)
    l2, (d2k, d2h, d2s) = line_moment_matrix(theta.k2, theta.h2, theta.sigma2, True)
    zero = np.zeros_like(l1)
    dl = (
        np.hstack([d1k, zero]),
        np.hstack([d1h, zero]),
        np.hstack([zero, d2k]),
        np.hstack([zero, d2h]),
        np.hstack([d1s, d2s]),
    )
    return np.hstack([l1, l2]), dl


def f2_eval(theta: RbanTheta, nb: NuisanceBlock) -> np.ndarray:
    """Model expectation of the 14 monomials under the two-line mixture."""
    return _stacked(theta) @ nb.coefficients()


def f2_jacobian(theta: RbanTheta, nb: NuisanceBlock) -> np.ndarray:
    """14x13 derivative of :func:`f2_eval` in ``(theta, mu[0], mu[1])`` at fixed ``p``."""
    lmat, dl = _stacked(theta, deriv=True)
    c = nb.coefficients()
    jac = np.empty((14, 13))
    for i, d in enumerate(dl):
        jac[:, i] = d @ c
    jac[:, 5:9] = nb.p * lmat[:, 1:5]
    jac[:, 9:13] = (1.0 - nb.p) * lmat[:, 6:10]
    return jac


# nuisance vector c = c0 + N z satisfies the constraint c[0] + c[5] = 1
_G = np.zeros(10)
_G[[0, 5]] = 1.0
_C0 = 0.5 * _G
_NULL = null_space(_G[None, :])


class _Whitened:
    """Cholesky-whitened moment data; adds a small ridge when badly conditioned."""

    def __init__(self, ms: MomentSummary):
        s = ms.sigma_m
        self.ridge = 0.0
        if not np.all(np.isfinite(s)) or np.linalg.cond(s) > COND_MAX:
            self.ridge = RIDGE * np.trace(s) / 14.0
            s = s + self.ridge * np.eye(14)
        try:
            self.chol = np.linalg.cholesky(s)
        except np.linalg.LinAlgError as exc:
            raise IllConditionedMoments("moment covariance is not positive definite") from exc
        if np.linalg.cond(self.chol) ** 2 > 1e3 * COND_MAX:
            raise IllConditionedMoments("moment covariance is numerically singular")
        self.sigma = s
        self.m = self.apply(ms.m_bar)

    def apply(self, a):
        return solve_triangular(self.chol, a, lower=True)


def _profile(theta: RbanTheta, wh: _Whitened, deriv=False):
    if deriv:
        lmat, dl = _stacked(theta, deriv=True)
    else:
        lmat = _stacked(theta)
    lw = wh.apply(lmat)
    rhs = wh.m - lw @ _C0
    z, *_ = np.linalg.lstsq(lw @ _NULL, rhs, rcond=None)
    c = _C0 + _NULL @ z
    r = lw @ c - wh.m
    value = float(r @ r)
    if not deriv:
        return value, c
    grad = np.array([2.0 * r @ wh.apply(d @ c) for d in dl])
    return value, c, grad


def _residual(theta: RbanTheta, wh: _Whitened):
    # whitened residual of the profiled fit and its variable-projection
    # Jacobian (the term through the nuisance solution is dropped; it is
    # second order in the residual)
    lmat, dl = _stacked(theta, deriv=True)
    lw = wh.apply(lmat)
    a = lw @ _NULL
    u, sv, _ = np.linalg.svd(a, full_matrices=False)
    u = u[:, sv > 1e-12 * sv[0]]
    rhs = wh.m - lw @ _C0
    r = u @ (u.T @ rhs) - rhs
    z, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    c = _C0 + _NULL @ z
    jac = np.column_stack([wh.apply(d @ c) for d in dl])
    jac -= u @ (u.T @ jac)
    return r, jac


def _nuisance(c, diagnostics=None) -> NuisanceBlock:
    p = float(c[0])
    mu = np.full((2, 4), np.nan)
    for j, (head, tail) in enumerate(((c[0], c[1:5]), (c[5], c[6:10]))):
        if head != 0.0:
            mu[j] = tail / head
    if diagnostics is not None:
        diagnostics["p_outside_unit_interval"] = not 0.0 <= p <= 1.0
    return NuisanceBlock(p, mu)


def profiled_criterion(theta: RbanTheta, ms: MomentSummary):
    """GLS discrepancy minimized over the nuisance block; returns ``(value, nb_star)``.

    The weight is the inverse of ``sigma_m`` (with a ridge of
    ``1e-10 trace / 14`` if its condition number exceeds 1e12).
    """
    value, c = _profile(theta, _Whitened(ms))
    return max(value, 0.0), _nuisance(c)


def rban_covariance(theta: RbanTheta, nb: NuisanceBlock, ms: MomentSummary, p: float = 0.5) -> np.ndarray:
    """Plug-in covariance of ``theta`` (5x5), already divided by n.

    The Jacobian is taken in ``(theta, mu)`` with the mixing weight held at
    ``p`` (0.5 by default), and the theta block of
    ``(F' Sigma_m^-1 F)^-1`` is returned.
    """
    wh = _Whitened(ms)
    jw = wh.apply(f2_jacobian(theta, NuisanceBlock(p, nb.mu)))
    if not np.all(np.isfinite(jw)):
        raise RankDeficientJacobian("moment Jacobian is not finite")
    sv = np.linalg.svd(jw, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise RankDeficientJacobian("moment Jacobian is rank deficient")
    info = jw.T @ jw
    cov = cho_solve(cho_factor(info), np.eye(13))[:5, :5] / ms.n
    return 0.5 * (cov + cov.T)


class _Frame:
    """Working coordinates ``w = R (z - c) / s`` for the search.

    ``c`` is the centroid, ``s`` the RMS radius and ``R`` the rotation taking
    the bisector of the initial lines to the x-axis, so both lines lie within
    45 degrees of horizontal and the explicit ``(k, h)`` form stays well
    conditioned. The frame follows any similarity applied to the data, and the
    criterion is invariant under such maps.
    """

    def __init__(self, center, scale, lines: LinePair):
        a1, a2 = (np.arctan2(ln.direction[1], ln.direction[0]) for ln in lines)
        b = 0.5 * (a1 + a2)
        # the other bisector when the lines are more than 90 degrees apart along this one
        if abs(np.sin(a1 - b)) > np.sqrt(0.5):
            b += 0.5 * np.pi
        c, sn = np.cos(b), np.sin(b)
        self.rot = np.array([[c, sn], [-sn, c]])
        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)
        self.forward = SimilarityTransform(1.0 / self.scale, self.rot, -self.rot @ self.center / self.scale)
        self.back = SimilarityTransform(self.scale, self.rot.T, self.center)

    def points(self, z):
        return ((z - self.center) @ self.rot.T) / self.scale

    def theta(self, lines: LinePair, sigma2) -> np.ndarray:
        return np.r_[apply_similarity(self.forward, lines).explicit(), sigma2 / self.scale**2]

    def line_back(self, k, h) -> Line:
        return apply_similarity(self.back, line_from_explicit(k, h))

    def jacobian(self, k, h) -> np.ndarray:
        """Derivative of the original-frame ``(k, h)`` in the working ``(k, h)`` of one line."""
        r, s = self.rot, self.scale
        dx = r[0, 0] + r[1, 0] * k
        dy = r[0, 1] + r[1, 1] * k
        slope = dy / dx
        dslope = np.linalg.det(r) / dx**2
        px = self.center[0] + s * h * r[1, 0]
        return np.array([[dslope, 0.0], [-dslope * px, s * (r[1, 1] - slope * r[1, 0])]])


def _initial(z, init):
    if init is not None:
        return init.lines, init.sigma2_hat
    from .projection import fit_ignore_f, fit_updated

    for fit in (fit_ignore_f, fit_updated):
        try:
            r = fit(z)
            return r.lines, r.sigma2_hat
        except EstimationFailure:
            continue
    raise InitFailed("no consistent initial estimate for RBAN")


def fit_rban(sample, init: Optional[LineFitResult] = None, gtol: float = 1e-10, max_iters: int = 2000) -> LineFitResult:
    """Local minimizer of the profiled criterion started from ``init`` (default: ignore-F).

    The search runs in a translated, rotated and rescaled frame (see
    :class:`_Frame`), under which the criterion is unchanged, and the
    estimate is mapped back.
    """
    z = as_sample(sample)
    n = z.shape[0]
    if n < 15:
        raise TooFewPoints(f"RBAN needs at least 15 points, got {n}")
    _, center, scale = standardize(z)
    if not scale > 0:
        raise IllConditionedMoments("all points coincide")
    start_lines, start_sigma2 = _initial(z, init)
    frame = _Frame(center, scale, start_lines)
    ms = moment_summary(frame.points(z))
    wh = _Whitened(ms)
    x0 = frame.theta(start_lines, start_sigma2)

    def fun(v):
        value, _, grad = _profile(RbanTheta(*v), wh, deriv=True)
        return value, grad

    q0 = fun(x0)[0]
    res = minimize(fun, x0, jac=True, method="BFGS", options={"gtol": gtol, "maxiter": max_iters})
    x, optimizer, nit = res.x, "bfgs", int(res.nit)
    # line searches stall once the criterion is flat to rounding; finish
    # with Levenberg-Marquardt steps on the residual vector itself
    try:
        lm = least_squares(
            lambda v: _residual(RbanTheta(*v), wh)[0],
            x,
            jac=lambda v: _residual(RbanTheta(*v), wh)[1],
            method="lm",
            xtol=1e-15,
            ftol=1e-15,
            gtol=1e-15,
            max_nfev=200,
        )
        if 2.0 * lm.cost <= fun(x)[0] * (1.0 + 1e-12):
            x, optimizer, nit = lm.x, "bfgs+lm", nit + int(lm.nfev)
    except (np.linalg.LinAlgError, ValueError):
        pass
    if not np.all(np.isfinite(x)) or fun(x)[0] > q0:
        nm = minimize(
            lambda v: fun(v)[0],
            x0,
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-24, "maxiter": max_iters},
        )
        x, optimizer, nit = nm.x, "nelder-mead", int(nm.nit)
    if not np.all(np.isfinite(x)) or fun(x)[0] > q0:
        raise NoDescent("criterion did not decrease from the initial point")
    theta_s = RbanTheta.from_vector(x)
    value, c = _profile(theta_s, wh)
    diagnostics = {
        "criterion": max(value, 0.0),
        "initial_criterion": q0,
        "iterations": nit,
        "optimizer": optimizer,
        "ridge": wh.ridge,
    }
    nb = _nuisance(c, diagnostics)
    tv = theta_s.vector()
    work = [frame.line_back(tv[0], tv[1]), frame.line_back(tv[2], tv[3])]
    lines = LinePair(*work)
    order = (0, 1) if lines.l1 is work[0] else (1, 0)
    sigma2 = float(tv[4] * scale**2)
    cov = None
    try:
        jm = np.zeros((5, 5))
        for slot, j in enumerate(order):
            jm[2 * slot : 2 * slot + 2, 2 * j : 2 * j + 2] = frame.jacobian(tv[2 * j], tv[2 * j + 1])
        jm[4, 4] = scale**2
        cov5 = jm @ rban_covariance(theta_s, nb, ms) @ jm.T
        if not np.all(np.isfinite(cov5)):
            raise np.linalg.LinAlgError("covariance not finite (vertical line)")
        cov = cov5[:4, :4]
        diagnostics["sigma2_var"] = float(cov5[4, 4])
    except (RankDeficientJacobian, np.linalg.LinAlgError) as exc:
        diagnostics["covariance_error"] = str(exc)
    diagnostics["p"] = nb.p
    return LineFitResult(lines, sigma2, Method.RBAN, cov, diagnostics)
