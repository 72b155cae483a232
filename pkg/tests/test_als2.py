import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twoline.als2 import covariance, fit_als2, monomial_map, scores, solve_sigma2
from twoline.errors import TooFewPoints
from twoline.geometry import SimilarityTransform
from twoline.projection import beta_to_lines, lines_to_beta
from twoline.psi import accumulate

from conftest import line_sample, random_line_pair


def angular_distance(a, b):
    c = abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.sqrt(max(0.0, 1.0 - min(c, 1.0) ** 2)))


class TestSolveSigma2:
    def test_noise_free_two_lines(self):
        z = line_sample(50, 0.0, 1)
        s2, bundle = solve_sigma2(z)
        assert s2 <= 1e-12
        assert np.linalg.eigvalsh(bundle.psi_n)[0] <= 1e-9 * np.trace(accumulate(z, 0.0).psi_n) / 6

    def test_hexagon(self):
        t = np.arange(6) * np.pi / 3
        s2, _ = solve_sigma2(np.column_stack([np.cos(t), np.sin(t)]))
        assert s2 == pytest.approx(0.0, abs=1e-12)

    def test_consistency(self):
        z = line_sample(10_000, 0.1, 2)
        s2, _ = solve_sigma2(z)
        assert 0.008 <= s2 <= 0.012

    def test_root_property(self, rng):
        z = rng.normal(size=(40, 2))
        s2, bundle = solve_sigma2(z)
        assert s2 > 0
        tol = 1e-9 * np.trace(accumulate(z, 0.0).psi_n) / 6
        assert abs(np.linalg.eigvalsh(bundle.psi_n)[0]) <= tol
        # smallest root: lambda_min positive below it
        assert np.linalg.eigvalsh(accumulate(z, 0.5 * s2).psi_n)[0] > 0

    def test_too_few(self):
        with pytest.raises(TooFewPoints):
            solve_sigma2(np.eye(2))


class TestMonomialMap:
    def test_maps_monomials(self, rng):
        c, s = rng.normal(size=2), 1.7
        m = monomial_map(c, s)
        for x, y in rng.normal(size=(5, 2)):
            xs, ys = (x - c[0]) / s, (y - c[1]) / s
            u = np.array([x * x, x * y, y * y, x, y, 1.0])
            us = np.array([xs * xs, xs * ys, ys * ys, xs, ys, 1.0])
            np.testing.assert_allclose(m @ u, us, atol=1e-12)


class TestBetaTilde:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_normalization_and_residual(self, seed):
        z = line_sample(200, 0.05, seed)
        fit = fit_als2(z, with_covariance=False)
        b, bundle = fit.beta_tilde, fit.bundle
        assert b @ bundle.dpsi_n @ b / -fit.n == pytest.approx(1.0, abs=1e-9)
        assert np.linalg.norm(bundle.psi_n @ b) <= 1e-6 * np.linalg.norm(bundle.psi_n) * np.linalg.norm(b)
        assert b[2] > 0

    def test_noise_free_matches_truth(self, reference_lines):
        z = line_sample(60, 0.0, 3)
        fit = fit_als2(z, with_covariance=False)
        assert angular_distance(fit.beta_tilde, lines_to_beta(reference_lines)) <= 1e-6

    def test_sign_irrelevant(self):
        b = fit_als2(line_sample(300, 0.05, 4), with_covariance=False).beta_tilde
        assert beta_to_lines(b).isclose(beta_to_lines(-b), tol=1e-12)

    def test_scaling_equivariance(self):
        z = line_sample(300, 0.05, 5)
        g = SimilarityTransform(K=2.0)
        a = beta_to_lines(fit_als2(z, with_covariance=False).beta_tilde)
        b = beta_to_lines(fit_als2(g(z), with_covariance=False).beta_tilde)
        assert b.isclose(g(a), tol=1e-8)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31))
    def test_random_lines_recovered(self, seed):
        rng = np.random.default_rng(seed)
        lp = random_line_pair(rng)
        z = line_sample(100, 0.0, seed, lines=lp)
        b = fit_als2(z, with_covariance=False).beta_tilde
        assert angular_distance(b, lines_to_beta(lp)) <= 1e-6


class TestCovariance:
    def test_symmetric_psd(self):
        fit = fit_als2(line_sample(2000, 0.1, 6))
        c = fit.cov_theta
        assert c.shape == (7, 7)
        assert np.linalg.norm(c - c.T) <= 1e-9 * np.linalg.norm(c)
        assert np.linalg.eigvalsh(c)[0] >= -1e-9 * np.linalg.norm(c)

    def test_recomputed_from_sample(self):
        z = line_sample(1000, 0.1, 7)
        fit = fit_als2(z)
        np.testing.assert_allclose(covariance(z, fit), fit.cov_theta, rtol=1e-6, atol=1e-10 * np.abs(fit.cov_theta).max())

    def test_estimating_equation_residual(self):
        z = line_sample(5000, 0.1, 8)
        fit = fit_als2(z, with_covariance=False)
        s = scores(z, fit.beta_tilde, fit.sigma2_hat)
        assert abs(s[:, 6].mean()) <= 1e-6

    def test_sigma2_variance_calibration(self):
        reps, n = 200, 10_000
        est, var = [], []
        for r in range(reps):
            fit = fit_als2(line_sample(n, 0.1, 1000 + r))
            est.append(fit.sigma2_hat)
            var.append(fit.cov_theta[6, 6] / n)
        ratio = np.var(est, ddof=1) / np.median(var)
        assert 0.6 <= ratio <= 1.6
