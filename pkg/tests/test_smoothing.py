"""Two-point gradient estimation, radius selection, and the error bounds."""

import numpy as np
import pytest

from zoconex import (
    EstimatorError,
    NoiseModel,
    SmoothingConfig,
    SmoothnessConstants,
    StochasticOracle,
    gradient_variance_bound,
    sample_direction,
    select_smoothing_parameters,
    smoothing_bias_bound,
    two_point_gradient,
    value_variance_bound,
)
from zoconex.smoothing import NU_FLOOR
from zoconex.streams import StreamSet

TINY = 1e-300


def constants(L, M, sigma=None, sigma_f=None):
    k = len(L)
    return SmoothnessConstants(
        L=np.asarray(L, dtype=float),
        M=np.asarray(M, dtype=float),
        sigma=np.asarray(sigma if sigma is not None else [TINY] * k, dtype=float),
        sigma_f=np.asarray(sigma_f if sigma_f is not None else [TINY] * k, dtype=float),
    )


class TestSampleDirection:
    def test_replay_is_identical(self):
        a = sample_direction(3, StreamSet(5).u(0))
        b = sample_direction(3, StreamSet(5).u(0))
        assert np.array_equal(a, b)

    def test_moments(self):
        rng = np.random.default_rng(2)
        draws = np.array([sample_direction(2, rng) for _ in range(10**5)])
        assert np.all(np.abs(draws.mean(axis=0)) < 0.02)
        cov = np.cov(draws.T)
        assert np.all(np.abs(cov - np.eye(2)) < 0.05)

    def test_expected_squared_norm_is_dimension(self):
        rng = np.random.default_rng(3)
        n = 10
        sq = np.array([float(u @ u) for u in (sample_direction(n, rng) for _ in range(10**5))])
        assert abs(sq.mean() - n) < 0.02 * n


class TestTwoPointGradient:
    def test_linear_function_is_exact(self):
        a = np.array([1.0, 0.0])
        oracle = StochasticOracle(lambda x: a @ x, NoiseModel("none"))
        streams = StreamSet(17)
        est = two_point_gradient(oracle, np.zeros(2), 0.1, streams.xi(0), streams.u(0))
        expected = (a @ est.direction) * est.direction
        assert np.array_equal(est.g, expected)

    def test_constant_function_with_common_noise(self):
        oracle = StochasticOracle(
            lambda x: 4.2, NoiseModel("gaussian", sigma=1.0, common=True)
        )
        streams = StreamSet(3)
        est = two_point_gradient(oracle, np.zeros(3), 0.5, streams.xi(0), streams.u(0))
        assert np.all(est.g == 0.0)

    def test_quadratic_monte_carlo_mean(self):
        # grad of the smoothed quadratic equals the true gradient exactly
        n = 4
        oracle = StochasticOracle(lambda x: x @ x, NoiseModel("none"))
        x = np.zeros(n)
        x[0] = 1.0
        rng_xi = np.random.default_rng(100)
        rng_u = np.random.default_rng(200)
        total = np.zeros(n)
        n_draws = 10**5
        for _ in range(n_draws):
            total += two_point_gradient(oracle, x, 1e-3, rng_xi, rng_u).g
        mean = total / n_draws
        target = 2.0 * x
        assert np.all(np.abs(mean - target) < 0.05)

    def test_invariant_fields(self):
        oracle = StochasticOracle(lambda x: x[0], NoiseModel("none"))
        streams = StreamSet(8)
        nu = 0.2
        est = two_point_gradient(oracle, np.zeros(2), nu, streams.xi(0), streams.u(0))
        rebuilt = ((est.value_at_shift - est.value_at_base) / nu) * est.direction
        assert np.array_equal(est.g, rebuilt)

    def test_nonfinite_value_raises_with_point(self):
        oracle = StochasticOracle(lambda x: np.inf, NoiseModel("none"))
        streams = StreamSet(8)
        with pytest.raises(EstimatorError) as err:
            two_point_gradient(oracle, np.zeros(2), 0.1, streams.xi(0), streams.u(0))
        assert err.value.point is not None

    def test_nu_must_be_positive(self):
        oracle = StochasticOracle(lambda x: 0.0, NoiseModel("none"))
        streams = StreamSet(8)
        with pytest.raises(ValueError):
            two_point_gradient(oracle, np.zeros(2), 0.0, streams.xi(0), streams.u(0))


class TestSelectSmoothingParameters:
    def test_objective_radius_arithmetic(self):
        c = constants(L=[1.0], M=[1.0])
        cfg = select_smoothing_parameters(c, n=10, m=0, T=100, m_x=1.0)
        # min of {1/sqrt(200), 2/13^1.5, 1/64}
        assert np.isclose(cfg.nu0, 1.0 / 64.0)
        assert cfg.m == 0

    def test_constraint_radius_arithmetic(self):
        c = constants(L=[1.0, 1.0], M=[1.0, 1.0])
        cfg = select_smoothing_parameters(c, n=10, m=1, T=100, m_x=1.0)
        # min of {0.04268, 1/(2 sqrt(12)), 1/sqrt(10), 1/sqrt(200), 1/64}
        assert np.isclose(cfg.nu[0], 1.0 / 64.0)

    def test_monotone_nonincreasing_in_horizon(self):
        c = constants(L=[1.0, 2.0], M=[1.0, 3.0])
        small = select_smoothing_parameters(c, n=6, m=1, T=10, m_x=2.0)
        large = select_smoothing_parameters(c, n=6, m=1, T=10**6, m_x=2.0)
        assert large.nu0 <= small.nu0
        assert np.all(large.nu <= small.nu)
        # the horizon-free terms cap the limit
        cap = min(2.0 / 9.0**1.5, 1.0 / (1.0 * 12.0**1.5))
        assert large.nu0 <= cap

    def test_floor_applies(self):
        c = constants(L=[1e12, 1e12], M=[1e12, 1e12])
        cfg = select_smoothing_parameters(c, n=50, m=1, T=10**8, m_x=10.0)
        assert cfg.nu0 >= NU_FLOOR and np.all(cfg.nu >= NU_FLOOR)


class TestVarianceBounds:
    def test_gradient_bound_plugin(self):
        # nu=0, sigma=0, L=0, M=1, n=1: B=1, bound = 10 * 5 * 1 = 50
        assert gradient_variance_bound(0.0, 0.0, 1.0, 0.0, 1, 1.0) == 50.0

    def test_gradient_bound_monotone_in_nu(self):
        lo = gradient_variance_bound(0.01, 2.0, 3.0, 0.5, 5, 1.0)
        hi = gradient_variance_bound(0.02, 2.0, 3.0, 0.5, 5, 1.0)
        assert hi > lo

    def test_value_bound_arithmetic(self):
        c = constants(L=[TINY, TINY], M=[1.0, 1.0])
        cfg = SmoothingConfig(nu0=1.0, nu=np.array([1.0]))
        # 4 (n+2) M^2 nu^2 = 4 * 3 * 1 * 1 = 12 at n=1
        assert np.isclose(value_variance_bound(c, cfg, 1), 12.0)

    def test_value_bound_vanishes(self):
        c = constants(L=[TINY, TINY], M=[TINY, TINY])
        cfg = SmoothingConfig(nu0=TINY, nu=np.array([TINY]))
        assert value_variance_bound(c, cfg, 3) < 1e-18

    def test_value_bound_unconstrained(self):
        c = constants(L=[1.0], M=[1.0], sigma_f=[2.0])
        cfg = SmoothingConfig(nu0=0.5, nu=np.zeros(0))
        assert value_variance_bound(c, cfg, 3) == 0.0

    def test_value_bound_dominates_monte_carlo(self):
        # linear constraint: F_nu scatter around f_nu stays under the bound
        rng = np.random.default_rng(0)
        a = np.array([0.7, -0.3])
        sigma = 0.2
        c = constants(
            L=[TINY, TINY],
            M=[np.linalg.norm(a)] * 2,
            sigma_f=[sigma, sigma],
        )
        nu = 0.1
        cfg = SmoothingConfig(nu0=nu, nu=np.array([nu]))
        x = np.array([0.1, 0.2])
        # linear f: f_nu = f
        f_x = a @ x
        draws = np.empty(10**5)
        for k in range(draws.size):
            u = rng.standard_normal(2)
            draws[k] = a @ (x + nu * u) + sigma * rng.standard_normal()
        emp = float(np.mean((draws - f_x) ** 2))
        assert emp <= value_variance_bound(c, cfg, 2)


class TestBiasBound:
    def test_zero_radius(self):
        assert smoothing_bias_bound(3.0, 0.0, 7) == 0.0

    def test_linear_function_unchanged(self):
        # smoothing leaves affine functions alone; 0 <= bound trivially
        assert smoothing_bias_bound(TINY, 0.3, 5) >= 0.0

    def test_quadratic_exact_gap_under_bound(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(1, 6))
            G = rng.standard_normal((n, n))
            A = G.T @ G / n
            l_const = 2.0 * float(np.linalg.eigvalsh(A)[-1])
            nu = float(rng.uniform(0.01, 0.5))
            exact_gap = nu**2 * float(np.trace(A))  # E f(x + nu u) - f(x)
            assert exact_gap <= smoothing_bias_bound(l_const, nu, n) + 1e-12


class TestSmoothingConfig:
    def test_rejects_nonpositive_radii(self):
        with pytest.raises(ValueError):
            SmoothingConfig(nu0=0.0, nu=np.array([0.1]))
        with pytest.raises(ValueError):
            SmoothingConfig(nu0=0.1, nu=np.array([-1.0]))

    def test_radius_indexing(self):
        cfg = SmoothingConfig(nu0=0.5, nu=np.array([0.1, 0.2]))
        assert cfg.radius(0) == 0.5
        assert cfg.radius(1) == 0.1
        assert cfg.radius(2) == 0.2
