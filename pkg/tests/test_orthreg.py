import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twoline.errors import AllRestartsDegenerate, DegenerateCluster, TooFewPoints
from twoline.geometry import LinePair, SimilarityTransform, line_from_explicit
from twoline.orthreg import OrConfig, criterion_q, fit_or, tls_line_fit
from twoline.simulate import ScenarioConfig, gen_true_points, perturb

from conftest import REFERENCE_PARAMS, REFERENCE_POINT, line_sample


class TestCriterion:
    def test_zero_on_lines(self, reference_lines):
        assert criterion_q(line_sample(30, 0.0, 1), reference_lines) == pytest.approx(0.0, abs=1e-25)

    def test_point_on_second_line(self):
        lp = LinePair.from_explicit(0.0, 0.0, 1e9, 0.0)
        assert criterion_q([[0.0, 1.0]], lp) == pytest.approx(0.0, abs=1e-16)

    def test_parallel_lines(self):
        assert criterion_q([[0.0, 1.0]], LinePair.from_explicit(0.0, 0.0, 0.0, 2.0)) == pytest.approx(1.0)

    def test_equidistant(self):
        lp = LinePair.from_explicit(1.0, 0.0, -1.0, 0.0)
        assert criterion_q([[0.0, 2.0]], lp) == pytest.approx(2.0)

    @given(st.integers(0, 2**31))
    def test_matches_explicit_formula(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.normal(size=(20, 2))
        k1, h1, k2, h2 = rng.normal(size=4)
        if abs(k1 - k2) < 1e-3:
            return
        x, y = z.T
        q = np.minimum((y - k1 * x - h1) ** 2 / (k1 * k1 + 1), (y - k2 * x - h2) ** 2 / (k2 * k2 + 1)).sum()
        assert criterion_q(z, LinePair.from_explicit(k1, h1, k2, h2)) == pytest.approx(q, rel=1e-12)


def grid_oracle(z, angles=1800, offsets=2001):
    best = (np.inf, None, None)
    c = z.mean(axis=0)
    for phi in np.linspace(0, np.pi, angles, endpoint=False):
        nvec = np.array([np.cos(phi), np.sin(phi)])
        base = (z - c) @ nvec
        offs = np.linspace(base.min(), base.max(), offsets)
        costs = ((base[:, None] - offs[None, :]) ** 2).sum(axis=0)
        j = int(np.argmin(costs))
        if costs[j] < best[0]:
            best = (costs[j], phi, offs[j])
    return best


class TestTls:
    def test_collinear(self):
        x = np.linspace(-1, 3, 7)
        ln = tls_line_fit(np.column_stack([x, 2 * x - 1]))
        assert ln.contains((10.0, 19.0), tol=1e-12)

    def test_rectangle(self):
        ln = tls_line_fit([[0, 0], [4, 0], [0, 1], [4, 1]])
        assert abs(ln.tau[0]) < 1e-15
        assert ln.contains((2.0, 0.5), tol=1e-15)

    def test_grid_oracle(self, rng):
        z = rng.normal(size=(40, 2)) @ np.array([[2.0, 0.5], [0.0, 0.6]])
        ln = tls_line_fit(z)
        cost = (ln.signed_distance(z) ** 2).sum()
        grid_cost, _, _ = grid_oracle(z)
        assert cost <= grid_cost + 1e-12
        assert grid_cost - cost <= 1e-3 * grid_cost

    def test_weights(self):
        z = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
        ln = tls_line_fit(z, [1.0, 1.0, 0.0, 0.0])
        assert ln.contains((7.0, 0.0), tol=1e-14)

    def test_coincident(self):
        with pytest.raises(DegenerateCluster):
            tls_line_fit([[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(DegenerateCluster):
            tls_line_fit([[1.0, 1.0]])


class TestFitOr:
    def test_noise_free(self):
        res = fit_or(line_sample(40, 0.0, 2))
        np.testing.assert_allclose(res.params(), REFERENCE_PARAMS, atol=1e-9)
        assert res.diagnostics["criterion"] == pytest.approx(0.0, abs=1e-20)
        assert res.cov_lines is None

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31))
    def test_monotone_trace(self, seed):
        res = fit_or(line_sample(200, 0.1, seed), OrConfig(restarts=3, seed=seed))
        trace = np.array(res.diagnostics["q_trace"])
        assert np.all(np.diff(trace) <= 1e-12 * trace[0])

    def test_local_minimum(self):
        z = line_sample(300, 0.05, 3)
        res = fit_or(z)
        q0 = criterion_q(z, res.lines)
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = res.params() + 1e-5 * rng.normal(size=4)
            assert criterion_q(z, LinePair.from_explicit(*p)) >= q0 - 1e-12

    def test_reproducible(self):
        z = line_sample(200, 0.1, 4)
        a, b = fit_or(z, OrConfig(seed=9)), fit_or(z, OrConfig(seed=9))
        np.testing.assert_array_equal(a.params(), b.params())

    def test_small_noise_accuracy(self):
        pts = np.array([fit_or(line_sample(1000, 0.02, 50 + r), OrConfig(seed=r)).intersection() for r in range(20)])
        assert np.all(np.abs(pts.mean(axis=0) - REFERENCE_POINT) <= 0.01)

    def test_breakdown(self):
        cfg = ScenarioConfig("NormalMixture", n=10_000, sigma=0.1, reps=1)
        rng = np.random.default_rng(5)
        z = perturb(gen_true_points(cfg, rng), 0.1, rng)
        assert np.linalg.norm(fit_or(z).intersection() - REFERENCE_POINT) > 1.0

    def test_equivariance(self, rng):
        z = line_sample(300, 0.05, 6)
        for _ in range(5):
            g = SimilarityTransform.random(rng)
            a, b = fit_or(z).lines, fit_or(g(z)).lines
            assert b.isclose(g(a), tol=1e-8)

    def test_errors(self):
        with pytest.raises(TooFewPoints):
            fit_or(np.eye(3, 2))
        with pytest.raises(AllRestartsDegenerate):
            fit_or(np.ones((10, 2)))
        with pytest.raises(ValueError):
            OrConfig(restarts=0)
