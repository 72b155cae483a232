"""Result container shared by the five line-pair estimators."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import LinePair, intersection

__all__ = ["Method", "LineFitResult", "intersection_jacobian"]


class Method(enum.Enum):
    IGNORE_F = "ignore-f"
    UPDATED = "update"
    OR = "or"
    ML = "ml"
    RBAN = "rban"

    @classmethod
    def parse(cls, name: str) -> "Method":
        key = name.strip().lower()
        aliases = {"ignoref": "ignore-f", "updated": "update", "orth": "or"}
        return cls(aliases.get(key, key))

    @property
    def label(self) -> str:
        return {"ignore-f": "IgnoreF", "update": "Update", "or": "OR", "ml": "ML", "rban": "RBAN"}[
            self.value
        ]


def intersection_jacobian(params) -> np.ndarray:
    """Derivative of the intersection point with respect to ``(k1, h1, k2, h2)``, shape ``(2, 4)``."""
    k1, h1, k2, h2 = params
    d = k1 - k2
    x = (h2 - h1) / d
    dx = np.array([-x / d, -1.0 / d, x / d, 1.0 / d])
    dy = k1 * dx
    dy[0] += x
    dy[1] += 1.0
    return np.vstack([dx, dy])


@dataclass
class LineFitResult:
    """Estimated line pair.

    ``cov_lines`` is the finite-sample covariance of ``(k1, h1, k2, h2)``
    (asymptotic covariance divided by n) when the method provides one.
    """

    lines: LinePair
    sigma2_hat: float
    method: Method
    cov_lines: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    def params(self) -> np.ndarray:
        return self.lines.explicit()

    def intersection(self) -> np.ndarray:
        return intersection(self.lines)

    def intersection_cov(self) -> Optional[np.ndarray]:
        if self.cov_lines is None:
            return None
        j = intersection_jacobian(self.params())
        c = j @ self.cov_lines @ j.T
        return 0.5 * (c + c.T)

    def intersection_se(self) -> Optional[np.ndarray]:
        c = self.intersection_cov()
        return None if c is None else np.sqrt(np.clip(np.diag(c), 0.0, None))
