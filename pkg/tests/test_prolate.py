"""Rank-one covariance math against dense linear-algebra oracles."""

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import multivariate_normal

from adammcmc.prolate import ProlateCovariance


def random_cov(rng, dim=None, allow_zero_dir=True):
    dim = dim or int(rng.integers(1, 65))
    sigma = float(rng.uniform(0.1, 5.0))
    sigma_dir = float(rng.uniform(0.0, 10.0))
    if allow_zero_dir and rng.uniform() < 0.1:
        sigma_dir = 0.0
    direction = rng.standard_normal(dim) * float(rng.uniform(0.1, 10.0))
    return ProlateCovariance(sigma, sigma_dir, direction)


class TestLogDet:
    def test_identity_covariance(self):
        cov = ProlateCovariance(1.0, 0.0, np.array([1.0, 2.0, 3.0]))
        assert cov.log_det() == 0.0

    def test_hand_value(self):
        # sigma=0.5, sigma_dir=2, d=e1, P=3: det = 0.5^6 * (1 + 16)
        cov = ProlateCovariance(0.5, 2.0, np.array([1.0, 0.0, 0.0]))
        expected = np.log(0.5**6 * 17.0)
        assert cov.log_det() == pytest.approx(expected, rel=1e-14)

    def test_zero_direction(self):
        cov = ProlateCovariance(1.0, 3.0, np.zeros(10))
        assert cov.log_det() == 0.0

    def test_matches_dense_lu_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            cov = random_cov(rng)
            sign, dense = np.linalg.slogdet(cov.dense())
            assert sign == 1.0
            assert abs(np.expm1(cov.log_det() - dense)) < 1e-10

    def test_huge_direction_no_overflow(self):
        # r = (sigma_dir |d| / sigma)^2 overflows float64; log space must not.
        d = np.full(4, 1e200)
        cov = ProlateCovariance(0.5, 1e100, d)
        expected = 8 * np.log(0.5) + 2.0 * (np.log(1e100) + np.log(2e200) - np.log(0.5))
        assert np.isfinite(cov.log_det())
        assert cov.log_det() == pytest.approx(expected, rel=1e-12)


class TestInvQuadForm:
    def test_isotropic_reduction(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(6)
        cov = ProlateCovariance(0.7, 0.0, rng.standard_normal(6))
        assert cov.inv_quad_form(x) == pytest.approx(float(x @ x) / 0.49, rel=1e-14)

    def test_hand_value(self):
        cov = ProlateCovariance(1.0, 1.0, np.array([1.0, 0.0]))
        assert cov.inv_quad_form(np.array([1.0, 0.0])) == pytest.approx(0.5, rel=1e-14)

    def test_orthogonal_direction(self):
        cov = ProlateCovariance(0.8, 5.0, np.array([1.0, 0.0]))
        x = np.array([0.0, 3.0])
        assert cov.inv_quad_form(x) == pytest.approx(9.0 / 0.64, rel=1e-14)

    def test_dimension_mismatch(self):
        cov = ProlateCovariance(1.0, 1.0, np.ones(3))
        with pytest.raises(ValueError):
            cov.inv_quad_form(np.ones(4))

    def test_matches_dense_solve_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(300):
            cov = random_cov(rng)
            x = rng.standard_normal(cov.dim) * float(rng.uniform(0.1, 10.0))
            dense = float(x @ np.linalg.solve(cov.dense(), x))
            assert cov.inv_quad_form(x) == pytest.approx(dense, rel=1e-8)

    def test_solve_roundtrip(self):
        # Sigma @ (Sigma^{-1} x) = x with the implicit inverse.
        rng = np.random.default_rng(3)
        for _ in range(100):
            cov = random_cov(rng, dim=int(rng.integers(1, 33)))
            x = rng.standard_normal(cov.dim)
            back = cov.apply(cov.solve(x))
            np.testing.assert_allclose(back, x, rtol=1e-8, atol=1e-12)


class TestLogDensity:
    def test_zero_exponent(self):
        cov = ProlateCovariance(1.3, 0.4, np.array([1.0, -2.0]))
        mean = np.array([0.5, 0.5])
        expected = -0.5 * (2 * np.log(2 * np.pi) + cov.log_det())
        assert cov.log_density(mean, mean) == pytest.approx(expected, rel=1e-14)

    def test_standard_normal_1d(self):
        cov = ProlateCovariance(1.0, 0.0, np.zeros(1))
        got = cov.log_density(np.zeros(1), np.ones(1))
        assert got == pytest.approx(-0.5 * np.log(2 * np.pi) - 0.5, rel=1e-14)

    def test_matches_dense_gaussian_oracle(self):
        rng = np.random.default_rng(5)
        cov = ProlateCovariance(0.7, 1.3, np.array([1.0, 1.0]))
        mean = np.array([0.3, -0.2])
        for _ in range(50):
            x = rng.standard_normal(2) * 3.0
            dense = multivariate_normal(mean=mean, cov=cov.dense()).logpdf(x)
            assert cov.log_density(mean, x) == pytest.approx(dense, rel=1e-10)

    def test_normalizes_1d(self):
        cov = ProlateCovariance(0.6, 1.7, np.array([2.0]))
        total, _ = integrate.quad(
            lambda x: np.exp(cov.log_density(np.array([0.4]), np.array([x]))),
            -30,
            30,
        )
        assert total == pytest.approx(1.0, abs=1e-4)

    def test_normalizes_2d(self):
        cov = ProlateCovariance(0.8, 1.1, np.array([1.0, -0.5]))
        mean = np.array([0.2, -0.1])
        total, _ = integrate.dblquad(
            lambda y, x: np.exp(cov.log_density(mean, np.array([x, y]))),
            -12,
            12,
            -12,
            12,
        )
        assert total == pytest.approx(1.0, abs=1e-4)


class TestSample:
    def test_degenerate_limit_returns_mean(self):
        rng = np.random.default_rng(11)
        mean = np.array([3.0, -1.0])
        cov = ProlateCovariance(1e-300, 0.0, np.ones(2))
        draw = cov.sample(mean, rng)
        np.testing.assert_allclose(draw, mean, atol=1e-290)

    def test_empirical_moments(self):
        # Mean and covariance over 1e5 draws within 4 MC standard errors.
        rng = np.random.default_rng(17)
        d = rng.standard_normal(8)
        cov = ProlateCovariance(0.9, 1.4, d)
        mean = rng.standard_normal(8)
        n = 100_000
        draws = np.array([cov.sample(mean, rng) for _ in range(n)])
        sigma_true = cov.dense()

        se_mean = np.sqrt(np.diag(sigma_true) / n)
        assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * se_mean)

        emp = np.cov(draws.T)
        var_entry = np.outer(np.diag(sigma_true), np.diag(sigma_true)) + sigma_true**2
        se_cov = np.sqrt(var_entry / n)
        assert np.all(np.abs(emp - sigma_true) < 4 * se_cov)

    def test_directional_variance_formula(self):
        # Var(<tau, d>) = sigma^2 |d|^2 + sigma_dir^2 |d|^4, and
        # Var(<tau, v>) = sigma^2 |v|^2 for v orthogonal to d.
        rng = np.random.default_rng(23)
        d = np.array([1.0, 2.0, -0.5, 0.3])
        cov = ProlateCovariance(0.8, 1.2, d)
        mean = np.zeros(4)
        n = 100_000
        draws = np.array([cov.sample(mean, rng) for _ in range(n)])

        nd2 = float(d @ d)
        proj = draws @ d
        var_true = 0.8**2 * nd2 + 1.2**2 * nd2**2
        se = var_true * np.sqrt(2.0 / (n - 1))
        assert abs(proj.var(ddof=1) - var_true) < 3 * se

        v = np.array([2.0, -1.0, 0.0, 0.0])  # orthogonal to d
        assert abs(v @ d) < 1e-12
        proj_v = draws @ v
        var_v = 0.8**2 * float(v @ v)
        se_v = var_v * np.sqrt(2.0 / (n - 1))
        assert abs(proj_v.var(ddof=1) - var_v) < 3 * se_v

    def test_isotropic_mode_consumes_single_normal_vector(self):
        # sigma_dir=0 must not draw the directional scalar.
        seed = 99
        cov = ProlateCovariance(2.0, 0.0, np.zeros(3))
        draw = cov.sample(np.zeros(3), np.random.default_rng(seed))
        z = np.random.default_rng(seed).standard_normal(3)
        np.testing.assert_array_equal(draw, 2.0 * z)


class TestValidation:
    def test_rejects_nonpositive_sigma(self):
        with pytest.raises(ValueError):
            ProlateCovariance(0.0, 1.0, np.ones(2))

    def test_rejects_negative_sigma_dir(self):
        with pytest.raises(ValueError):
            ProlateCovariance(1.0, -0.1, np.ones(2))
