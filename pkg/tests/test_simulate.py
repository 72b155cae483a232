import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twoline.errors import InvalidConfig
from twoline.geometry import LinePair, SimilarityTransform, intersection
from twoline.results import Method
from twoline.simulate import (
    DEFAULT_LINES,
    Distribution,
    ScenarioConfig,
    chi2_2_quantile,
    coverage_study,
    ellipse_area,
    equivariance_check,
    gen_true_points,
    line_set_deviation,
    perturb,
    replicate_sample,
    run_monte_carlo,
    worker_count,
)

from conftest import REFERENCE_POINT, line_sample


class TestScenarioConfig:
    def test_default_intersection(self):
        np.testing.assert_allclose(ScenarioConfig().true_intersection, REFERENCE_POINT, atol=1e-14)
        np.testing.assert_allclose(intersection(DEFAULT_LINES), REFERENCE_POINT, atol=1e-14)

    def test_four_point_support(self):
        with pytest.raises(InvalidConfig, match="identif"):
            ScenarioConfig("Discrete", dist_params={"atoms1": (0.0, 1.0), "atoms2": (0.5, 1.5)})

    @pytest.mark.parametrize(
        "changes",
        [{"n": 3}, {"sigma": -0.1}, {"sigma": 0.0}, {"reps": 0}, {"dist_params": {"bogus": 1}}, {"dist_params": {"p": 1.5}}],
    )
    def test_invalid(self, changes):
        with pytest.raises(InvalidConfig):
            ScenarioConfig("UniformSegments").replace(**changes)

    def test_parse_distribution(self):
        assert Distribution.parse("normalmixture") is Distribution.NORMAL_MIXTURE
        with pytest.raises(InvalidConfig):
            Distribution.parse("cauchy")


class TestGeneration:
    @pytest.mark.parametrize("dist", list(Distribution))
    def test_points_on_lines(self, dist):
        ts = gen_true_points(ScenarioConfig(dist, n=500), np.random.default_rng(1))
        d = DEFAULT_LINES.distances(ts.points)
        own = d[np.arange(500), ts.labels - 1]
        assert own.max() <= 1e-12

    def test_discrete_frequencies(self):
        cfg = ScenarioConfig("Discrete", n=60_000)
        ts = gen_true_points(cfg, np.random.default_rng(2))
        p = 0.5 / 3
        se = math.sqrt(p * (1 - p) / cfg.n)
        atoms = {1: (-0.5, 0.2, 0.8), 2: (-0.4, 0.3, 0.9)}
        assert set(np.round(ts.points[:, 0], 12)) == set(atoms[1]) | set(atoms[2])
        for lab, xs in atoms.items():
            for x in xs:
                freq = np.mean((ts.labels == lab) & np.isclose(ts.points[:, 0], x))
                assert abs(freq - p) <= 3 * se

    def test_zero_noise(self):
        ts = gen_true_points(ScenarioConfig(), np.random.default_rng(3))
        np.testing.assert_array_equal(perturb(ts, 0.0, np.random.default_rng(4)), ts.points)

    def test_noise_moments(self):
        cfg = ScenarioConfig("UniformSegments", n=400_000, sigma=0.1)
        rng = np.random.default_rng(5)
        ts = gen_true_points(cfg, rng)
        e = perturb(ts, 0.1, rng) - ts.points
        n = e.shape[0]
        prod = e[:, 0] * e[:, 1]
        assert abs(prod.mean()) <= 4 * prod.std() / math.sqrt(n)
        q = e[:, 0] ** 4
        assert abs(q.mean() - 3e-4) <= 4 * q.std() / math.sqrt(n)

    def test_functional_protocol_fixes_true_points(self):
        cfg = ScenarioConfig("UniformSegments", n=50, sigma=0.0 + 1e-9, reps=2)
        a, b = replicate_sample(cfg, 0), replicate_sample(cfg, 1)
        assert np.abs(a - b).max() < 1e-7
        s = cfg.replace(functional=False)
        assert np.abs(replicate_sample(s, 0) - replicate_sample(s, 1)).max() > 1e-3


class TestMonteCarlo:
    def test_noise_free_single_rep(self):
        cfg = ScenarioConfig("UniformSegments", n=100, sigma=1e-6, reps=1)
        res = run_monte_carlo(cfg)
        for m in res.methods:
            assert res[m].successes == 1
            np.testing.assert_allclose(res[m].mean, REFERENCE_POINT, atol=1e-4)

    def test_reproducible(self):
        cfg = ScenarioConfig("NormalMixture", n=300, sigma=0.1, reps=3, seed=42)
        a, b = run_monte_carlo(cfg), run_monte_carlo(cfg)
        for m in a.methods:
            assert repr(a[m]) == repr(b[m])
            np.testing.assert_array_equal(a[m].mean, b[m].mean)

    def test_thread_independence(self, monkeypatch):
        cfg = ScenarioConfig("NormalMixture", n=300, sigma=0.1, reps=4, seed=3)
        a = run_monte_carlo(cfg, workers=1)
        b = run_monte_carlo(cfg, workers=3)
        for m in a.methods:
            np.testing.assert_array_equal(a[m].mean, b[m].mean)
            assert a[m].rms == b[m].rms

    def test_worker_env(self, monkeypatch):
        monkeypatch.setenv("TWOLINE_THREADS", "3")
        assert worker_count() == 3
        monkeypatch.delenv("TWOLINE_THREADS")
        assert worker_count() == 1

    def test_sigma2_recovery(self):
        cfg = ScenarioConfig("UniformSegments", n=10_000, sigma=0.1, reps=10)
        res = run_monte_carlo(cfg, [Method.IGNORE_F, Method.UPDATED])
        for m in res.methods:
            assert abs(res[m].median_sigma2 - 0.01) <= 0.002

    def test_failures_counted(self):
        cfg = ScenarioConfig("UniformSegments", n=8, sigma=0.3, reps=20, seed=1)
        res = run_monte_carlo(cfg, [Method.IGNORE_F, Method.RBAN])
        assert res[Method.RBAN].failures == 20
        assert res[Method.IGNORE_F].successes + res[Method.IGNORE_F].failures == 20


class TestCoverage:
    def test_quantile(self):
        assert chi2_2_quantile(0.95) == pytest.approx(5.991464547107979)

    def test_area_ratio(self):
        cov = np.array([[2.0, 0.3], [0.3, 0.5]])
        assert ellipse_area(cov, 0.8) / ellipse_area(cov, 0.95) == pytest.approx(math.log(5) / math.log(20), abs=1e-12)
        assert math.log(5) / math.log(20) == pytest.approx(0.5372, abs=1e-4)

    def test_exact_gaussian_calibration(self):
        rng = np.random.default_rng(8)
        cov = np.array([[1.0, 0.4], [0.4, 0.5]])
        d = rng.multivariate_normal(np.zeros(2), cov, 20_000)
        stat = np.einsum("ij,jk,ik->i", d, np.linalg.inv(cov), d)
        hit = np.mean(stat <= chi2_2_quantile(0.95))
        assert abs(hit - 0.95) <= 3 * math.sqrt(0.95 * 0.05 / 20_000)

    def test_study_rows(self):
        cfg = ScenarioConfig("UniformSegments", n=2000, sigma=0.1, reps=20)
        rows, res = coverage_study(cfg)
        assert {(r.method, r.level) for r in rows} == {(m, lv) for m in (Method.IGNORE_F, Method.UPDATED, Method.RBAN) for lv in (0.8, 0.95)}
        for r in rows:
            assert 0 <= r.coverage <= 1 and r.used + r.failures == 20
        by = {(r.method, r.level): r for r in rows}
        for m in (Method.IGNORE_F, Method.UPDATED, Method.RBAN):
            assert by[m, 0.8].coverage <= by[m, 0.95].coverage


class TestEquivariance:
    def test_identical_lines(self):
        assert line_set_deviation(DEFAULT_LINES, DEFAULT_LINES, np.zeros(2), 3.0) == 0.0

    def test_pairing_minimized(self):
        a = LinePair.from_explicit(0.0, 0.0, 1.0, 0.0)
        b = LinePair.from_explicit(0.0, 0.1, 1.0, 0.0)
        assert line_set_deviation(a, b, np.zeros(2), 3.0) == pytest.approx(0.1)

    @pytest.mark.parametrize("method", list(Method))
    def test_identity(self, method):
        z = line_sample(300, 0.05, 9)
        out = equivariance_check(z, SimilarityTransform(), method)
        assert out.status == "ok" and out.deviation == 0.0

    def test_rotation_ignore_f(self):
        z = line_sample(300, 0.05, 10)
        g = SimilarityTransform.from_angle(1.0, math.radians(30))
        assert equivariance_check(z, g, Method.IGNORE_F).relative <= 1e-7

    def test_scaling_or(self):
        z = line_sample(300, 0.05, 11)
        assert equivariance_check(z, SimilarityTransform(K=3.0), Method.OR).relative <= 1e-6

    def test_both_fail(self):
        z = np.random.default_rng(0).normal(size=(10, 2))
        out = equivariance_check(z, SimilarityTransform(K=2.0), Method.RBAN)
        assert out.status == "skipped_both_failed"
