"""Orthogonal regression for two lines by k-means style alternation.

Each run alternates a classification step (assign every point to the nearer
line) with a refit step (total least squares line per cluster) until the
labels stop changing. Both steps minimize the criterion over their block, so
the criterion never increases within a run. The best of several random
restarts is returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AllRestartsDegenerate,
    CoincidentLines,
    DegenerateCluster,
    TooFewPoints,
)
from .geometry import Line, LinePair, as_sample
from .results import LineFitResult, Method

__all__ = ["OrConfig", "criterion_q", "tls_line_fit", "fit_or"]


@dataclass(frozen=True)
class OrConfig:
    restarts: int = 10
    max_iters: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1:
            raise ValueError("restarts and max_iters must be positive")


def _sq_dist(z, lines):
    return np.column_stack([ln.signed_distance(z) ** 2 for ln in lines])


def criterion_q(sample, lp) -> float:
    """Sum over points of the squared distance to the nearer line."""
    z = as_sample(sample)
    return float(_sq_dist(z, tuple(lp)).min(axis=1).sum())


def tls_line_fit(points, weights=None) -> Line:
    """Total least squares line: through the weighted centroid, normal along the minor axis."""
    z = np.asarray(points, dtype=float)
    w = np.ones(z.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    total = w.sum()
    if z.shape[0] < 2 or total <= 0:
        raise DegenerateCluster("need at least two weighted points")
    c = w @ z / total
    d = z - c
    s = (d * w[:, None]).T @ d
    if np.trace(s) <= 1e-28 * max(1.0, float(np.abs(c).max()) ** 2):
        raise DegenerateCluster("all points coincide")
    _, vecs = np.linalg.eigh(s)
    return Line(vecs[:, 0], c)


def _reseed(z, other):
    # line through the two points farthest from the other line
    far = np.argsort(-np.abs(other.signed_distance(z)), kind="stable")
    p = z[far[0]]
    for j in far[1:]:
        if np.any(z[j] != p):
            return Line.through(p, z[j])
    raise DegenerateCluster("all points coincide")


def _refit(z, labels, lines):
    new = list(lines)
    for j in (0, 1):
        members = z[labels == j]
        try:
            new[j] = tls_line_fit(members)
        except DegenerateCluster:
            new[j] = None
    for j in (0, 1):
        if new[j] is None:
            other = new[1 - j] if new[1 - j] is not None else lines[1 - j]
            new[j] = _reseed(z, other)
    return tuple(new)


def _classify(z, lines):
    d = _sq_dist(z, lines)
    # ties go to the first line
    return (d[:, 1] < d[:, 0]).astype(int), d


def _single_run(z, rng, max_iters):
    n = z.shape[0]
    idx = rng.choice(n, 4, replace=False)
    p = z[idx]
    lines = (Line.through(p[0], p[1]), Line.through(p[2], p[3]))
    labels, d = _classify(z, lines)
    trace = [float(d.min(axis=1).sum())]
    converged = False
    for it in range(1, max_iters + 1):
        lines = _refit(z, labels, lines)
        new_labels, d = _classify(z, lines)
        trace.append(float(d.min(axis=1).sum()))
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
    return lines, trace, it, converged


def fit_or(sample, cfg: OrConfig = OrConfig()) -> LineFitResult:
    """Orthogonal regression estimate; keeps the restart with the smallest criterion.

    Restart ``r`` draws from its own stream seeded by ``(cfg.seed, r)``, so
    the result does not depend on execution order. No covariance is attached.
    """
    z = as_sample(sample)
    n = z.shape[0]
    if n < 4:
        raise TooFewPoints(f"orthogonal regression needs at least 4 points, got {n}")
    best = None
    failures = 0
    for r in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, r])
        try:
            lines, trace, iters, converged = _single_run(z, rng, cfg.max_iters)
            lp = LinePair(*lines)
        except (DegenerateCluster, CoincidentLines, ValueError):
            failures += 1
            continue
        q = trace[-1]
        if best is None or q < best[0]:
            best = (q, lp, trace, iters, converged, r)
    if best is None:
        raise AllRestartsDegenerate("every restart degenerated")
    q, lp, trace, iters, converged, r = best
    return LineFitResult(
        lp,
        q / n,
        Method.OR,
        None,
        {
            "criterion": q,
            "iterations": iters,
            "converged": converged,
            "restart": r,
            "failed_restarts": failures,
            "q_trace": trace,
        },
    )
