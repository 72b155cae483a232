"""Structural maximum likelihood via EM for a two-component Gaussian mixture.

Observed points are a mixture of ``N(mu_j, Sigma_j)`` with
``Sigma_j = sigma2 I + s_j u_j u_j'``: a singular normal on line ``j`` plus
isotropic noise, so both covariances share the smallest eigenvalue
``sigma2``. The constrained M-step has a closed form (see :func:`m_step`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import (
    CollapsedComponent,
    EstimationFailure,
    InitFailed,
    PointComponent,
    SingularComponent,
    TooFewPoints,
)
from .geometry import Line, LinePair, as_sample
from .results import LineFitResult, Method

__all__ = [
    "MixtureParams",
    "EmReport",
    "log_likelihood",
    "responsibilities",
    "m_step",
    "complete_data_objective",
    "em_fit",
    "extract_lines",
    "init_from_lines",
    "fit_ml",
]

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class MixtureParams:
    p: float
    mu1: np.ndarray
    mu2: np.ndarray
    s1: np.ndarray
    s2: np.ndarray

    def swapped(self) -> "MixtureParams":
        return MixtureParams(1.0 - self.p, self.mu2, self.mu1, self.s2, self.s1)


@dataclass
class EmReport:
    params: MixtureParams
    loglik_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    exact: bool = False


def _component_logpdf(z, mu, s):
    det = s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
    if not det > 0:
        raise SingularComponent("component covariance is not positive definite")
    d = z - mu
    q = (s[1, 1] * d[:, 0] ** 2 - 2.0 * s[0, 1] * d[:, 0] * d[:, 1] + s[0, 0] * d[:, 1] ** 2) / det
    return -_LOG_2PI - 0.5 * np.log(det) - 0.5 * q


def _joint_logpdf(z, mp):
    with np.errstate(divide="ignore"):
        lp1 = np.log(mp.p) + _component_logpdf(z, mp.mu1, mp.s1)
        lp2 = np.log1p(-mp.p) + _component_logpdf(z, mp.mu2, mp.s2)
    return np.column_stack([lp1, lp2])


def log_likelihood(sample, mp: MixtureParams) -> float:
    """Log of the mixture likelihood."""
    z = as_sample(sample)
    return float(logsumexp(_joint_logpdf(z, mp), axis=1).sum())


def responsibilities(sample, mp: MixtureParams) -> np.ndarray:
    """Posterior probability that each point belongs to component 1."""
    z = as_sample(sample)
    lp = _joint_logpdf(z, mp)
    return np.exp(lp[:, 0] - logsumexp(lp, axis=1))


def complete_data_objective(sample, w, mp: MixtureParams) -> float:
    """``sum_i w_i log(p phi_1) + (1 - w_i) log((1 - p) phi_2)``, maximized by :func:`m_step`."""
    z = as_sample(sample)
    lp = _joint_logpdf(z, mp)
    return float(w @ lp[:, 0] + (1.0 - w) @ lp[:, 1])


def _weighted_moments(z, w):
    mass = w.sum()
    mu = w @ z / mass
    d = z - mu
    c = (d * w[:, None]).T @ d / mass
    vals, vecs = np.linalg.eigh(0.5 * (c + c.T))
    return mass, mu, vals[::-1], vecs[:, 1]


def _shared_variance(masses, big, small):
    # Profile of the weighted Gaussian objective in sigma2 once each component
    # keeps its major variance when it exceeds sigma2; the stationary point of
    # every branch is a candidate and the best feasible one wins.
    best = None
    for clip in ((False, False), (True, False), (False, True), (True, True)):
        num = sum(m * s for m, s in zip(masses, small))
        den = sum(masses)
        for m, b, c in zip(masses, big, clip):
            if c:
                num += m * b
                den += m
        s2 = num / den
        if s2 <= 0:
            return 0.0
        obj = 0.0
        for m, b, s in zip(masses, big, small):
            t = max(b, s2)
            obj += m * (np.log(s2) + s / s2 + np.log(t) + b / t)
        if best is None or obj < best[0]:
            best = (obj, s2)
    return best[1]


def m_step(sample, w, p_floor: Optional[float] = None) -> MixtureParams:
    """Maximize the complete-data objective under ``lambda_min(S1) = lambda_min(S2)``.

    With weighted means ``mu_j``, weighted covariances ``C_j`` (eigenvalues
    ``b_j >= a_j``, major axis ``u_j``) and masses ``W_j``, the optimum is
    ``Sigma_j = sigma2 I + max(b_j - sigma2, 0) u_j u_j'`` where ``sigma2``
    is ``(W_1 a_1 + W_2 a_2) / (W_1 + W_2)`` unless a component's major
    variance falls below that value, in which case that component's ``b_j``
    joins the average.
    """
    z = as_sample(sample)
    n = z.shape[0]
    w = np.clip(np.asarray(w, dtype=float), 0.0, 1.0)
    floor = 1.0 / n if p_floor is None else p_floor
    parts = []
    for wj in (w, 1.0 - w):
        if wj.sum() < 2.0:
            raise CollapsedComponent("a component has fewer than 2 effective points")
        parts.append(_weighted_moments(z, wj))
    masses = [pt[0] for pt in parts]
    s2 = _shared_variance(masses, [pt[2][0] for pt in parts], [pt[2][1] for pt in parts])
    covs = []
    for _, _, vals, u in parts:
        covs.append(s2 * np.eye(2) + max(vals[0] - s2, 0.0) * np.outer(u, u))
    p = float(np.clip(masses[0] / n, floor, 1.0 - floor))
    return MixtureParams(p, parts[0][1], parts[1][1], covs[0], covs[1])


def _shared_sigma2(mp):
    return float(np.linalg.eigvalsh(mp.s1)[0])


def em_fit(sample, init: MixtureParams, tol: float = 1e-10, max_iters: int = 500) -> EmReport:
    """EM iterations from ``init``.

    Stops when the log-likelihood gain per point drops below ``tol`` (a
    criterion unchanged by similarity transforms of the data) or after
    ``max_iters``. If the shared variance collapses to zero the data lie
    exactly on two lines; the fit is then exact and EM stops.
    """
    z = as_sample(sample)
    n = z.shape[0]
    if n < 5:
        raise TooFewPoints(f"EM needs at least 5 points, got {n}")
    scale = float(np.trace(np.cov(z.T)))
    mp = init
    report = EmReport(mp)
    if _shared_sigma2(mp) <= 1e-14 * scale:
        report.exact = report.converged = True
        return report
    ll = log_likelihood(z, mp)
    report.loglik_trace.append(ll)
    for it in range(1, max_iters + 1):
        new = m_step(z, responsibilities(z, mp))
        report.iterations = it
        if _shared_sigma2(new) <= 1e-14 * scale:
            report.params = new
            report.exact = report.converged = True
            return report
        ll_new = log_likelihood(z, new)
        report.loglik_trace.append(ll_new)
        mp = new
        if (ll_new - ll) / n < tol:
            report.converged = True
            break
        ll = ll_new
    report.params = mp
    return report


def _line_of(mu, s, sigma2):
    vals, vecs = np.linalg.eigh(s)
    if vals[1] - sigma2 <= 1e-10 * (vals[0] + vals[1]):
        raise PointComponent("estimated figure is a line and a point")
    u = vecs[:, 1]
    return Line((-u[1], u[0]), mu)


def extract_lines(mp: MixtureParams) -> LineFitResult:
    """Line ``j`` passes through ``mu_j`` along the major axis of ``Sigma_j``; ``sigma2 = lambda_min``."""
    sigma2 = max(_shared_sigma2(mp), 0.0)
    lp = LinePair(_line_of(mp.mu1, mp.s1, sigma2), _line_of(mp.mu2, mp.s2, sigma2))
    return LineFitResult(lp, sigma2, Method.ML, None, {"p": mp.p})


def init_from_lines(sample, lp: LinePair) -> MixtureParams:
    """Constrained moments of the two clusters obtained by nearest-line assignment."""
    z = as_sample(sample)
    d = lp.distances(z)
    w = (d[:, 0] <= d[:, 1]).astype(float)
    return m_step(z, w)


def fit_ml(sample, init: Optional[MixtureParams] = None, tol: float = 1e-10, max_iters: int = 500, seed: int = 0):
    """ML line pair. Default initialization: ignore-F lines, else orthogonal regression."""
    z = as_sample(sample)
    if init is None:
        from .orthreg import OrConfig, fit_or
        from .projection import fit_ignore_f

        start = None
        for attempt in (lambda: fit_ignore_f(z), lambda: fit_or(z, OrConfig(seed=seed))):
            try:
                start = init_from_lines(z, attempt().lines)
                break
            except EstimationFailure:
                continue
        if start is None:
            raise InitFailed("no initial line pair for EM")
        init = start
    report = em_fit(z, init, tol, max_iters)
    result = extract_lines(report.params)
    result.diagnostics.update(
        iterations=report.iterations,
        converged=report.converged,
        exact=report.exact,
        loglik=report.loglik_trace[-1] if report.loglik_trace else None,
    )
    return result
