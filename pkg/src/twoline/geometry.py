"""Plane geometry for line pairs.

Lines are stored in normal form ``tau . (z - zeta0) = 0`` with a unit normal
``tau``; the explicit form ``y = k x + h`` is a derived view, so near-vertical
lines never overflow intermediate computations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CoincidentLines, EmptySample, ParallelLines, VerticalLine

__all__ = [
    "Line",
    "LinePair",
    "SimilarityTransform",
    "as_sample",
    "standardize",
    "line_from_explicit",
    "explicit_from_line",
    "intersection",
    "apply_similarity",
]

COINCIDENT_TOL = 1e-9
_VERTICAL_TOL = 1e-14


def as_sample(points) -> np.ndarray:
    """Return ``points`` as a float ``(n, 2)`` array, validating shape and finiteness."""
    z = np.asarray(points, dtype=float)
    if z.ndim == 1 and z.size == 0:
        raise EmptySample("sample has no points")
    if z.ndim != 2 or z.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) array of points, got shape {z.shape}")
    if z.shape[0] == 0:
        raise EmptySample("sample has no points")
    if not np.all(np.isfinite(z)):
        raise ValueError("sample contains non-finite coordinates")
    return z


def standardize(z):
    """Translate to the centroid and rescale to unit RMS radius.

    Returns ``(z_std, center, scale)`` with ``z = center + scale * z_std``;
    ``scale`` is 0 when all points coincide.
    """
    center = z.mean(axis=0)
    d = z - center
    scale = float(np.sqrt((d * d).sum(axis=1).mean()))
    return (d / scale if scale > 0 else d), center, scale


def _canonical_normal(a, b):
    norm = math.hypot(a, b)
    if norm == 0.0 or not math.isfinite(norm):
        raise ValueError("line normal must be a finite nonzero vector")
    a, b = a / norm, b / norm
    if a < 0.0 or (a == 0.0 and b < 0.0):
        a, b = -a, -b
    return a, b


@dataclass(frozen=True, eq=False)
class Line:
    """Line ``{z : tau . (z - zeta0) = 0}``.

    ``tau`` is a unit normal whose first nonzero component is positive and
    ``zeta0`` is the foot of the perpendicular from the origin, which makes
    the representation unique.
    """

    tau: tuple
    zeta0: tuple

    def __init__(self, tau, zeta0):
        a, b = _canonical_normal(float(tau[0]), float(tau[1]))
        c = a * float(zeta0[0]) + b * float(zeta0[1])
        object.__setattr__(self, "tau", (a, b))
        object.__setattr__(self, "zeta0", (c * a, c * b))

    @classmethod
    def through(cls, p, q) -> "Line":
        """Line through two distinct points."""
        dx, dy = float(q[0]) - float(p[0]), float(q[1]) - float(p[1])
        if dx == 0.0 and dy == 0.0:
            raise ValueError("points coincide")
        return cls((-dy, dx), p)

    @property
    def offset(self) -> float:
        """Signed distance ``c`` in ``tau . z = c``."""
        return self.tau[0] * self.zeta0[0] + self.tau[1] * self.zeta0[1]

    @property
    def direction(self):
        return (-self.tau[1], self.tau[0])

    @property
    def is_vertical(self) -> bool:
        return abs(self.tau[1]) < _VERTICAL_TOL

    def angle(self) -> float:
        """Direction angle in ``(-pi/2, pi/2]``; orders non-vertical lines by slope."""
        a, b = self.tau
        if b == 0.0:
            return math.pi / 2
        return math.atan(-a / b)

    def signed_distance(self, points) -> np.ndarray:
        z = np.asarray(points, dtype=float)
        return z @ np.asarray(self.tau) - self.offset

    def contains(self, point, tol=1e-10) -> bool:
        return abs(float(self.signed_distance(np.asarray(point, float)[None])[0])) <= tol

    def isclose(self, other: "Line", tol=COINCIDENT_TOL) -> bool:
        return (
            abs(self.tau[0] - other.tau[0]) <= tol
            and abs(self.tau[1] - other.tau[1]) <= tol
            and abs(self.offset - other.offset) <= tol * max(1.0, abs(self.offset))
        )

    def __repr__(self):
        if self.is_vertical:
            return f"Line(x = {self.offset / self.tau[0]!r})"
        k, h = explicit_from_line(self)
        return f"Line(y = {k!r} x + {h!r})"


def line_from_explicit(k: float, h: float) -> Line:
    """Line ``y = k x + h``."""
    k, h = float(k), float(h)
    if not (math.isfinite(k) and math.isfinite(h)):
        raise ValueError("slope and intercept must be finite")
    return Line((k, -1.0), (0.0, h))


def explicit_from_line(line: Line):
    """Return ``(k, h)`` with ``y = k x + h`` on ``line``."""
    a, b = line.tau
    if abs(b) < _VERTICAL_TOL:
        raise VerticalLine("line is parallel to the y-axis")
    return -a / b, line.offset / b


@dataclass(frozen=True, eq=False)
class LinePair:
    """Unordered pair of distinct lines, stored in canonical order.

    Non-vertical lines are ordered by increasing slope; a vertical line sorts
    last (slope +inf). Parallel lines are ordered by offset.
    """

    l1: Line
    l2: Line

    def __init__(self, l1: Line, l2: Line):
        if l1.isclose(l2):
            raise CoincidentLines("lines coincide")
        key1 = (l1.angle(), l1.offset)
        key2 = (l2.angle(), l2.offset)
        if key2 < key1:
            l1, l2 = l2, l1
        object.__setattr__(self, "l1", l1)
        object.__setattr__(self, "l2", l2)

    @classmethod
    def from_explicit(cls, k1, h1, k2, h2) -> "LinePair":
        return cls(line_from_explicit(k1, h1), line_from_explicit(k2, h2))

    def explicit(self) -> np.ndarray:
        """``(k1, h1, k2, h2)``; raises :class:`VerticalLine` if either line is vertical."""
        return np.array([*explicit_from_line(self.l1), *explicit_from_line(self.l2)])

    def __iter__(self):
        yield self.l1
        yield self.l2

    def isclose(self, other: "LinePair", tol=COINCIDENT_TOL) -> bool:
        return self.l1.isclose(other.l1, tol) and self.l2.isclose(other.l2, tol)

    def distances(self, points) -> np.ndarray:
        """Absolute distances of ``points`` to each line, shape ``(n, 2)``."""
        return np.abs(
            np.column_stack([self.l1.signed_distance(points), self.l2.signed_distance(points)])
        )

    def __repr__(self):
        return f"LinePair({self.l1!r}, {self.l2!r})"


def intersection(lp: LinePair) -> np.ndarray:
    """Intersection point of the two lines."""
    m = np.array([lp.l1.tau, lp.l2.tau])
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) < 1e-12:
        raise ParallelLines("lines are parallel")
    c1, c2 = lp.l1.offset, lp.l2.offset
    return np.array(
        [(c1 * m[1, 1] - c2 * m[0, 1]) / det, (m[0, 0] * c2 - m[1, 0] * c1) / det]
    )


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """``g(z) = K U z + dz`` with ``U`` orthogonal and ``K != 0``."""

    K: float
    U: np.ndarray
    dz: np.ndarray

    def __init__(self, K=1.0, U=None, dz=(0.0, 0.0)):
        K = float(K)
        if K == 0.0 or not math.isfinite(K):
            raise ValueError("scale K must be finite and nonzero")
        U = np.eye(2) if U is None else np.array(U, dtype=float)
        if U.shape != (2, 2) or not np.allclose(U.T @ U, np.eye(2), atol=1e-12, rtol=0):
            raise ValueError("U must be a 2x2 orthogonal matrix")
        dz = np.array(dz, dtype=float).reshape(2)
        U.setflags(write=False)
        dz.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "dz", dz)

    @classmethod
    def from_angle(cls, K=1.0, angle=0.0, dz=(0.0, 0.0), reflect=False):
        c, s = math.cos(angle), math.sin(angle)
        U = np.array([[c, -s], [s, c]])
        if reflect:
            U = U @ np.diag([1.0, -1.0])
        return cls(K, U, dz)

    @classmethod
    def random(cls, rng, scale_range=(0.2, 5.0), shift=3.0):
        K = math.exp(rng.uniform(math.log(scale_range[0]), math.log(scale_range[1])))
        if rng.random() < 0.5:
            K = -K
        return cls.from_angle(
            K, rng.uniform(-math.pi, math.pi), rng.uniform(-shift, shift, size=2), rng.random() < 0.5
        )

    @property
    def is_identity(self) -> bool:
        return self.K == 1.0 and np.array_equal(self.U, np.eye(2)) and not np.any(self.dz)

    def __call__(self, obj):
        return apply_similarity(self, obj)


def apply_similarity(g: SimilarityTransform, obj):
    """Apply ``g`` to a sample (``(n, 2)`` array or single point), a Line or a LinePair."""
    if g.is_identity:
        return obj if isinstance(obj, (Line, LinePair)) else np.array(obj, dtype=float)
    if isinstance(obj, LinePair):
        return LinePair(apply_similarity(g, obj.l1), apply_similarity(g, obj.l2))
    if isinstance(obj, Line):
        p = np.asarray(obj.zeta0)
        q = p + np.asarray(obj.direction)
        return Line.through(apply_similarity(g, p), apply_similarity(g, q))
    z = np.asarray(obj, dtype=float)
    return g.K * z @ g.U.T + g.dz
