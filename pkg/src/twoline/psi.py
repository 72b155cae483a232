"""Generalized Hermite matrices for conic fitting with isotropic Gaussian noise.

Row/column order is ``u = (x^2, xy, y^2, x, y, 1)``, matching the conic vector
``beta = (A, 2B, C, 2D, 2E, F)``. Entry ``(a, b)`` of ``psi(x, y; v)`` is
``H_p(x; v) H_q(y; v)`` where ``x^p y^q = u_a u_b`` and ``H_p`` is the Hermite
polynomial with ``E H_p(xi + delta; v) = xi^p`` for ``delta ~ N(0, v)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .geometry import as_sample

__all__ = ["PsiBundle", "psi_eval", "psi_points", "accumulate", "PSI_SECOND"]

_UX = np.array([2, 1, 0, 1, 0, 0])
_UY = np.array([0, 1, 2, 0, 1, 0])
# x and y degree of every entry of u u^T
PX = _UX[:, None] + _UX[None, :]
PY = _UY[:, None] + _UY[None, :]


def _hermite(t, v, order):
    """Stack of d^order/dv^order H_p(t; v) for p = 0..4, shape ``(5,) + t.shape``."""
    t = np.asarray(t, dtype=float)
    v = float(v)
    z = np.zeros_like(t)
    one = np.ones_like(t)
    t2 = t * t
    if order == 0:
        rows = [one, t, t2 - v, t2 * t - 3.0 * t * v, t2 * t2 - 6.0 * t2 * v + 3.0 * v * v]
    elif order == 1:
        rows = [z, z, -one, -3.0 * t, -6.0 * t2 + 6.0 * v]
    elif order == 2:
        rows = [z, z, z, z, 6.0 * one]
    else:
        rows = [z, z, z, z, z]
    return np.stack(rows)


def psi_points(x, y, v, order=0) -> np.ndarray:
    """Per-point matrices ``d^order psi / dv^order``, shape ``(n, 6, 6)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.zeros((x.shape[0], 6, 6))
    for j in range(order + 1):
        hx = _hermite(x, v, j)
        hy = _hermite(y, v, order - j)
        # hx[PX] has shape (6, 6, n)
        out += comb(order, j) * np.moveaxis(hx[PX] * hy[PY], -1, 0)
    return out


def psi_eval(x: float, y: float, v: float, order: int = 0) -> np.ndarray:
    """The 6x6 matrix ``d^order/dv^order psi(x, y; v)`` for ``order`` in {0, 1, 2}."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    return psi_points([x], [y], v, order)[0]


PSI_SECOND = psi_eval(0.0, 0.0, 0.0, 2)
PSI_SECOND.setflags(write=False)


def _pairwise_sum(mats: np.ndarray) -> np.ndarray:
    # numpy uses pairwise summation only along a contiguous last axis
    flat = np.ascontiguousarray(mats.reshape(mats.shape[0], -1).T)
    return flat.sum(axis=1).reshape(mats.shape[1:])


@dataclass(frozen=True)
class PsiBundle:
    """``Psi_n(v)`` and ``Psi'_n(v)`` for one sample."""

    psi_n: np.ndarray
    dpsi_n: np.ndarray
    n: int
    v: float


def accumulate(sample, v: float) -> PsiBundle:
    """Sum ``psi`` and ``d psi/dv`` over the sample at ``v``."""
    z = as_sample(sample)
    if v < 0:
        raise ValueError("v must be nonnegative")
    x, y = z[:, 0], z[:, 1]
    p0 = _pairwise_sum(psi_points(x, y, v, 0))
    p1 = _pairwise_sum(psi_points(x, y, v, 1))
    return PsiBundle(_symmetrize(p0), _symmetrize(p1), z.shape[0], float(v))


def _symmetrize(m):
    return 0.5 * (m + m.T)
