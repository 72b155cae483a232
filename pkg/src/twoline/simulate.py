"""Monte Carlo harness: true-point generators, noise, summaries, coverage and equivariance checks.

All randomness is derived from the scenario seed through
``numpy.random.default_rng([seed, stream, rep])`` so that each replication
owns its stream and results do not depend on execution order or on the
number of worker threads.
"""

from __future__ import annotations

import enum
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EstimationFailure, InvalidConfig, TooFewPoints
from .estimators import ALL_METHODS, COV_METHODS, fit
from .geometry import Line, LinePair, SimilarityTransform, apply_similarity, as_sample, intersection
from .results import LineFitResult, Method

__all__ = [
    "Distribution",
    "DEFAULT_LINES",
    "DEFAULT_DIST_PARAMS",
    "ScenarioConfig",
    "TrueSample",
    "gen_true_points",
    "perturb",
    "RepRecord",
    "McSummary",
    "McResult",
    "replicate_sample",
    "run_monte_carlo",
    "CoverageRow",
    "coverage_study",
    "chi2_2_quantile",
    "ellipse_area",
    "EquivarianceOutcome",
    "line_set_deviation",
    "equivariance_check",
    "equivariance_suite",
    "worker_count",
]

DEFAULT_LINES = LinePair.from_explicit(-0.75, 0.25, 4.0 / 3.0, 5.0 / 12.0)

# stream tags for default_rng([seed, tag, rep])
_TRUE_STREAM = 0
_NOISE_STREAM = 1
_FIT_STREAM = 2


class Distribution(enum.Enum):
    NORMAL_MIXTURE = "NormalMixture"
    DISCRETE = "Discrete"
    UNIFORM_SEGMENTS = "UniformSegments"

    @classmethod
    def parse(cls, name) -> "Distribution":
        if isinstance(name, cls):
            return name
        key = str(name).replace("-", "").replace("_", "").replace(" ", "").lower()
        for d in cls:
            if d.value.lower() == key:
                return d
        raise InvalidConfig(f"unknown distribution {name!r}")


DEFAULT_DIST_PARAMS = {
    Distribution.NORMAL_MIXTURE: {"p": 0.5, "mean1": 0.5, "sd1": 0.1, "mean2": 0.3, "sd2": 0.1},
    Distribution.DISCRETE: {"p": 0.5, "atoms1": (-0.5, 0.2, 0.8), "atoms2": (-0.4, 0.3, 0.9)},
    Distribution.UNIFORM_SEGMENTS: {"p": 0.5, "low1": -0.6, "high1": 1.0, "low2": -0.6, "high2": 1.0},
}


def _explicit_lines(lines: LinePair):
    try:
        return lines.explicit()
    except EstimationFailure as exc:
        raise InvalidConfig("true lines must not be vertical") from exc


def _support_identifiable(points) -> Optional[str]:
    # The pair of lines covering a finite support must be unique; with four
    # points, or all but one point on a line, several pairs fit.
    pts = np.unique(np.round(np.asarray(points, float), 12), axis=0)
    if pts.shape[0] < 5:
        return f"support has {pts.shape[0]} distinct points; at least 5 are needed"
    covers = set()
    for i, j in itertools.combinations(range(pts.shape[0]), 2):
        ln = Line.through(pts[i], pts[j])
        rest = pts[np.abs(ln.signed_distance(pts)) > 1e-9]
        if rest.shape[0] <= 1:
            return "all but at most one support point lie on one line"
        other = Line.through(rest[0], rest[1])
        if np.all(np.abs(other.signed_distance(rest)) <= 1e-9):
            key = tuple(sorted((tuple(np.round([*ln.tau, ln.offset], 9)), tuple(np.round([*other.tau, other.offset], 9)))))
            covers.add(key)
    if len(covers) > 1:
        return "more than one pair of lines covers the support"
    return None


@dataclass(frozen=True)
class ScenarioConfig:
    """Simulation scenario.

    ``dist_params`` overrides the defaults of :data:`DEFAULT_DIST_PARAMS`.
    With ``functional=True`` the true points are drawn once and only the
    noise is redrawn per replication; otherwise both are redrawn.
    """

    distribution: Distribution = Distribution.NORMAL_MIXTURE
    n: int = 1000
    sigma: float = 0.1
    reps: int = 100
    seed: int = 0
    lines: LinePair = DEFAULT_LINES
    dist_params: dict = field(default_factory=dict)
    functional: bool = True

    def __post_init__(self):
        object.__setattr__(self, "distribution", Distribution.parse(self.distribution))
        if int(self.n) != self.n or self.n < 6:
            raise InvalidConfig(f"n must be an integer >= 6, got {self.n}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidConfig(f"sigma must be positive, got {self.sigma}")
        if int(self.reps) != self.reps or self.reps < 1:
            raise InvalidConfig(f"reps must be a positive integer, got {self.reps}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must be an integer in [0, 2^64)")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "reps", int(self.reps))
        object.__setattr__(self, "seed", int(self.seed))
        defaults = DEFAULT_DIST_PARAMS[self.distribution]
        unknown = set(self.dist_params) - set(defaults)
        if unknown:
            raise InvalidConfig(f"unknown parameters for {self.distribution.value}: {sorted(unknown)}")
        object.__setattr__(self, "dist_params", {**defaults, **self.dist_params})
        self._validate_params()

    def _validate_params(self):
        dp = self.dist_params
        if not 0.0 < dp["p"] < 1.0:
            raise InvalidConfig("p must lie in (0, 1)")
        k1, h1, k2, h2 = _explicit_lines(self.lines)
        if self.distribution is Distribution.NORMAL_MIXTURE:
            if not (dp["sd1"] > 0 and dp["sd2"] > 0):
                raise InvalidConfig("sd1 and sd2 must be positive")
        elif self.distribution is Distribution.UNIFORM_SEGMENTS:
            if not (dp["high1"] > dp["low1"] and dp["high2"] > dp["low2"]):
                raise InvalidConfig("each segment needs high > low")
        else:
            a1 = np.asarray(dp["atoms1"], float).ravel()
            a2 = np.asarray(dp["atoms2"], float).ravel()
            if a1.size == 0 or a2.size == 0:
                raise InvalidConfig("each line needs at least one atom")
            pts = np.vstack([np.column_stack([a1, k1 * a1 + h1]), np.column_stack([a2, k2 * a2 + h2])])
            reason = _support_identifiable(pts)
            if reason:
                raise InvalidConfig(f"discrete support is not identifiable: {reason}")

    def replace(self, **changes) -> "ScenarioConfig":
        kw = dict(
            distribution=self.distribution,
            n=self.n,
            sigma=self.sigma,
            reps=self.reps,
            seed=self.seed,
            lines=self.lines,
            dist_params=dict(self.dist_params),
            functional=self.functional,
        )
        kw.update(changes)
        return ScenarioConfig(**kw)

    @property
    def true_intersection(self) -> np.ndarray:
        return intersection(self.lines)


@dataclass(frozen=True)
class TrueSample:
    points: np.ndarray
    labels: np.ndarray  # 1 or 2


def gen_true_points(cfg: ScenarioConfig, rng) -> TrueSample:
    """Draw ``cfg.n`` true points on the configured lines; line ``j`` is chosen with probability ``p``, ``1 - p``."""
    k1, h1, k2, h2 = cfg.lines.explicit()
    dp = cfg.dist_params
    n = cfg.n
    on1 = rng.random(n) < dp["p"]
    if cfg.distribution is Distribution.NORMAL_MIXTURE:
        xi = np.where(on1, rng.normal(dp["mean1"], dp["sd1"], n), rng.normal(dp["mean2"], dp["sd2"], n))
    elif cfg.distribution is Distribution.UNIFORM_SEGMENTS:
        xi = np.where(on1, rng.uniform(dp["low1"], dp["high1"], n), rng.uniform(dp["low2"], dp["high2"], n))
    else:
        a1 = np.asarray(dp["atoms1"], float).ravel()
        a2 = np.asarray(dp["atoms2"], float).ravel()
        xi = np.where(on1, a1[rng.integers(0, a1.size, n)], a2[rng.integers(0, a2.size, n)])
    eta = np.where(on1, k1 * xi + h1, k2 * xi + h2)
    return TrueSample(np.column_stack([xi, eta]), np.where(on1, 1, 2))


def perturb(ts: TrueSample, sigma: float, rng) -> np.ndarray:
    """Add independent ``N(0, sigma^2 I)`` errors to every true point."""
    if not sigma >= 0:
        raise InvalidConfig("sigma must be nonnegative")
    pts = np.asarray(ts.points if isinstance(ts, TrueSample) else ts, float)
    return pts + sigma * rng.standard_normal(pts.shape)


def worker_count() -> int:
    """Worker threads from ``TWOLINE_THREADS`` (default 1, sequential)."""
    raw = os.environ.get("TWOLINE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map(func, items, workers):
    if workers <= 1:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _rng(cfg, stream, rep):
    return np.random.default_rng([cfg.seed, stream, rep])


def _fit_seed(cfg, rep):
    return int(np.random.SeedSequence([cfg.seed, _FIT_STREAM, rep]).generate_state(1)[0])


def replicate_sample(cfg: ScenarioConfig, rep: int, true_sample: Optional[TrueSample] = None) -> np.ndarray:
    """Observed sample of replication ``rep``."""
    if true_sample is None or not cfg.functional:
        true_sample = gen_true_points(cfg, _rng(cfg, _TRUE_STREAM, rep if not cfg.functional else 0))
    return perturb(true_sample, cfg.sigma, _rng(cfg, _NOISE_STREAM, rep))


@dataclass
class RepRecord:
    """Outcome of one estimator on one replication."""

    rep: int
    method: Method
    params: Optional[np.ndarray] = None
    sigma2: float = math.nan
    point: Optional[np.ndarray] = None
    point_cov: Optional[np.ndarray] = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.point is not None


@dataclass
class McSummary:
    method: Method
    mean: np.ndarray
    sd: np.ndarray
    median_se: Optional[np.ndarray]
    rms: float
    successes: int
    failures: int
    median_sigma2: float = math.nan


@dataclass
class McResult:
    config: ScenarioConfig
    methods: tuple
    summaries: dict
    records: list

    def __getitem__(self, method) -> McSummary:
        return self.summaries[Method.parse(method) if isinstance(method, str) else method]


def _record(rep, method, result: LineFitResult) -> RepRecord:
    try:
        params = result.params()
    except EstimationFailure:
        params = None
    return RepRecord(
        rep,
        method,
        params,
        float(result.sigma2_hat),
        result.intersection(),
        result.intersection_cov(),
    )


def _run_rep(cfg, methods, rep, true_sample):
    z = replicate_sample(cfg, rep, true_sample)
    out = []
    for m in methods:
        try:
            out.append(_record(rep, m, fit(m, z, seed=_fit_seed(cfg, rep))))
        except (EstimationFailure, TooFewPoints) as exc:
            out.append(RepRecord(rep, m, error=f"{type(exc).__name__}: {exc}"))
    return out


def _summarize(method, recs, truth) -> McSummary:
    good = [r for r in recs if r.ok]
    nan2 = np.full(2, np.nan)
    if not good:
        return McSummary(method, nan2, nan2, None, math.nan, 0, len(recs))
    pts = np.array([r.point for r in good])
    sd = pts.std(axis=0, ddof=1) if len(good) > 1 else nan2
    ses = [np.sqrt(np.clip(np.diag(r.point_cov), 0, None)) for r in good if r.point_cov is not None]
    median_se = np.median(np.array(ses), axis=0) if ses else None
    rms = float(np.sqrt(np.mean(np.sum((pts - truth) ** 2, axis=1))))
    return McSummary(
        method,
        pts.mean(axis=0),
        sd,
        median_se,
        rms,
        len(good),
        len(recs) - len(good),
        float(np.median([r.sigma2 for r in good])),
    )


def run_monte_carlo(cfg: ScenarioConfig, methods: Sequence = ALL_METHODS, workers: Optional[int] = None) -> McResult:
    """Run every method on ``cfg.reps`` replications and summarize the intersection estimates.

    Failures are counted and excluded from the moments; estimates that are
    far off but still produce a line pair are kept.
    """
    methods = tuple(Method.parse(m) if isinstance(m, str) else m for m in methods)
    truth = cfg.true_intersection
    true_sample = gen_true_points(cfg, _rng(cfg, _TRUE_STREAM, 0)) if cfg.functional else None
    workers = worker_count() if workers is None else workers
    per_rep = _map(lambda r: _run_rep(cfg, methods, r, true_sample), range(cfg.reps), workers)
    records = [rec for reps in per_rep for rec in reps]
    summaries = {m: _summarize(m, [r for r in records if r.method is m], truth) for m in methods}
    return McResult(cfg, methods, summaries, records)


def chi2_2_quantile(level: float) -> float:
    """Quantile of the chi-square law with 2 degrees of freedom."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    return -2.0 * math.log1p(-level)


def ellipse_area(cov, level: float) -> float:
    """Area of ``{z : z' cov^-1 z <= chi2_2(level)}``."""
    det = float(np.linalg.det(np.asarray(cov, float)))
    return math.pi * chi2_2_quantile(level) * math.sqrt(max(det, 0.0))


@dataclass
class CoverageRow:
    method: Method
    level: float
    coverage: float
    median_area: float
    used: int
    failures: int


def coverage_study(
    cfg: ScenarioConfig,
    levels: Sequence[float] = (0.8, 0.95),
    methods: Sequence = COV_METHODS,
    workers: Optional[int] = None,
    result: Optional[McResult] = None,
):
    """Coverage of the true intersection by the delta-method confidence ellipses.

    Returns ``(rows, result)``; pass a previous ``result`` to reuse its fits.
    """
    methods = tuple(Method.parse(m) if isinstance(m, str) else m for m in methods)
    for m in methods:
        if m not in COV_METHODS:
            raise InvalidConfig(f"{m.label} reports no covariance")
    if result is None:
        result = run_monte_carlo(cfg, methods, workers)
    truth = cfg.true_intersection
    rows = []
    for m in methods:
        recs = [r for r in result.records if r.method is m]
        usable = []
        for r in recs:
            if r.ok and r.point_cov is not None:
                d = r.point - truth
                try:
                    q = float(d @ np.linalg.solve(r.point_cov, d))
                except np.linalg.LinAlgError:
                    continue
                if math.isfinite(q) and np.linalg.det(r.point_cov) > 0:
                    usable.append((q, r.point_cov))
        for lev in levels:
            c2 = chi2_2_quantile(lev)
            if usable:
                cov_frac = float(np.mean([q <= c2 for q, _ in usable]))
                area = float(np.median([ellipse_area(c, lev) for _, c in usable]))
            else:
                cov_frac = area = math.nan
            rows.append(CoverageRow(m, float(lev), cov_frac, area, len(usable), len(recs) - len(usable)))
    return rows, result


def _chord(line: Line, center, radius):
    # segment of the line inside the disk; the nearest point if it misses
    foot = np.asarray(center) - line.signed_distance(np.asarray(center)[None])[0] * np.asarray(line.tau)
    gap = float(np.linalg.norm(foot - center))
    half = math.sqrt(max(radius * radius - gap * gap, 0.0))
    u = np.asarray(line.direction)
    return np.array([foot - half * u, foot + half * u])


def line_set_deviation(a: LinePair, b: LinePair, center, radius: float) -> float:
    """Hausdorff-style distance between two line pairs restricted to a disk.

    Each line is cut to its chord in the disk; the deviation is the largest
    distance from a chord endpoint to its partner line, minimized over the
    two ways of pairing the lines.
    """
    center = np.asarray(center, float)
    la, lb = tuple(a), tuple(b)

    def one(p, q):
        if p.tau == q.tau and p.zeta0 == q.zeta0:
            return 0.0
        d1 = np.abs(q.signed_distance(_chord(p, center, radius))).max()
        d2 = np.abs(p.signed_distance(_chord(q, center, radius))).max()
        return max(d1, d2)

    straight = max(one(la[0], lb[0]), one(la[1], lb[1]))
    crossed = max(one(la[0], lb[1]), one(la[1], lb[0]))
    return float(min(straight, crossed))


@dataclass
class EquivarianceOutcome:
    method: Method
    status: str  # "ok", "skipped_both_failed" or "one_failed"
    deviation: float
    scale: float

    @property
    def relative(self) -> float:
        return self.deviation / self.scale


def equivariance_check(sample, g: SimilarityTransform, method, seed: int = 0, radius: float = 3.0) -> EquivarianceOutcome:
    """Compare ``g`` applied to the estimate with the estimate on ``g(sample)``.

    Distances are measured in the transformed frame on the disk of radius
    ``radius |K|`` around the transformed sample centroid.
    """
    method = Method.parse(method) if isinstance(method, str) else method
    z = as_sample(sample)
    gz = apply_similarity(g, z)
    scale = abs(g.K)
    fits = []
    for data in (z, gz):
        try:
            fits.append(fit(method, data, seed=seed))
        except (EstimationFailure, TooFewPoints):
            fits.append(None)
    if fits[0] is None and fits[1] is None:
        return EquivarianceOutcome(method, "skipped_both_failed", math.nan, scale)
    if fits[0] is None or fits[1] is None:
        return EquivarianceOutcome(method, "one_failed", math.inf, scale)
    center = apply_similarity(g, z.mean(axis=0))
    dev = line_set_deviation(apply_similarity(g, fits[0].lines), fits[1].lines, center, radius * scale)
    return EquivarianceOutcome(method, "ok", dev, scale)


def equivariance_suite(sample, transforms, methods: Sequence = ALL_METHODS, seed: int = 0):
    """Run :func:`equivariance_check` for every transform and method."""
    methods = tuple(Method.parse(m) if isinstance(m, str) else m for m in methods)
    return [equivariance_check(sample, g, m, seed) for g in transforms for m in methods]
