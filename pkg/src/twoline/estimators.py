"""Uniform entry point to the five line-pair estimators."""

from __future__ import annotations

from typing import Iterable

from .mixture import fit_ml
from .orthreg import OrConfig, fit_or
from .projection import fit_ignore_f, fit_updated
from .rban import fit_rban
from .results import LineFitResult, Method

__all__ = ["ALL_METHODS", "COV_METHODS", "fit", "parse_methods"]

ALL_METHODS = (Method.IGNORE_F, Method.UPDATED, Method.OR, Method.ML, Method.RBAN)
COV_METHODS = (Method.IGNORE_F, Method.UPDATED, Method.RBAN)


def fit(method, sample, seed: int = 0) -> LineFitResult:
    """Run one estimator. ``seed`` only affects the random restarts of orthogonal regression."""
    method = Method.parse(method) if isinstance(method, str) else method
    if method is Method.IGNORE_F:
        return fit_ignore_f(sample)
    if method is Method.UPDATED:
        return fit_updated(sample)
    if method is Method.OR:
        return fit_or(sample, OrConfig(seed=seed))
    if method is Method.ML:
        return fit_ml(sample, seed=seed)
    return fit_rban(sample)


def parse_methods(spec: str | Iterable[str]) -> tuple:
    """Comma-separated names (or an iterable of names) to methods; ``all`` selects every method."""
    names = spec.split(",") if isinstance(spec, str) else list(spec)
    names = [s.strip() for s in names if s.strip()]
    if not names:
        raise ValueError("no methods selected")
    if any(s.lower() == "all" for s in names):
        return ALL_METHODS
    out = []
    for s in names:
        m = Method.parse(s)
        if m not in out:
            out.append(m)
    return tuple(out)
