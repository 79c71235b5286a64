"""Proximal-point outer loop, regularization, and KKT diagnostics."""

import numpy as np
import pytest

from zoconex import (
    Box,
    NoiseModel,
    ProblemSpec,
    ProximalConfig,
    SmoothingConfig,
    SmoothnessConstants,
    StepSchedule,
    StochasticOracle,
    StreamSet,
    default_regularization,
    estimate_multipliers,
    kkt_residual,
    nearby_kkt_report,
    proximal_point_solve,
    random_instance,
    reference_solve,
    regularize_problem,
    snap_to_boundary,
    solve,
    spectral_regularization,
)

TINY = 1e-300


def quadratic_problem(center_obj, noise=None, m=1):
    """f_0 = ||x - a||^2 with one linear constraint x_0 >= 0.25 on the unit box."""
    noise = noise or NoiseModel("none")
    a = np.asarray(center_obj, dtype=float)
    n = a.size
    oracles = [
        StochasticOracle(
            lambda x: float(np.sum((x - a) ** 2)),
            noise,
            noiseless_grad=lambda x: 2.0 * (x - a),
        )
    ]
    for _ in range(m):
        oracles.append(
            StochasticOracle(
                lambda x: 0.25 - x[0],
                noise,
                noiseless_grad=lambda x: -np.eye(n)[0],
            )
        )
    return ProblemSpec(
        dimension=n,
        constraint_count=m,
        oracles=oracles,
        domain=Box(np.full(n, -1.0), np.full(n, 1.0)),
        constants=SmoothnessConstants(
            L=np.array([2.0] + [1e-6] * m),
            M=np.array([4.0] + [1.0] * m),
            sigma=np.full(m + 1, TINY),
            sigma_f=np.full(m + 1, TINY),
        ),
    )


class TestRegularize:
    def test_vanishing_strength_changes_nothing(self):
        problem = quadratic_problem([0.3, 0.1])
        reg = regularize_problem(problem, np.zeros(2), 1e-12, np.array([1e-12]))
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = problem.domain.sample(rng)
            for i in range(2):
                orig = problem.oracles[i].noiseless_fn(x)
                assert abs(reg.oracles[i].noiseless_fn(x) - orig) <= 1e-9

    def test_zero_at_center(self):
        problem = quadratic_problem([0.3, 0.1])
        center = np.array([0.2, -0.4])
        reg = regularize_problem(problem, center, 1.0, np.array([1.0]))
        for i in range(2):
            assert np.isclose(
                reg.oracles[i].noiseless_fn(center), problem.oracles[i].noiseless_fn(center)
            )

    def test_added_term_arithmetic(self):
        # mu_0 = 1, ||x - center|| = 2: added term 2 * 1 * (0.5 * 4) = 4
        problem = quadratic_problem([0.0, 0.0])
        center = np.array([-1.0, 0.0])
        x = np.array([1.0, 0.0])
        reg = regularize_problem(problem, center, 1.0, np.array([1.0]))
        added = reg.oracles[0].noiseless_fn(x) - problem.oracles[0].noiseless_fn(x)
        assert np.isclose(added, 4.0)

    def test_constants_grow(self):
        problem = quadratic_problem([0.0, 0.0])
        reg = regularize_problem(problem, np.zeros(2), 2.0, np.array([3.0]))
        assert np.allclose(reg.constants.L, problem.constants.L + np.array([4.0, 6.0]))
        assert np.all(reg.constants.M > problem.constants.M)

    def test_center_must_be_inside(self):
        problem = quadratic_problem([0.0, 0.0])
        with pytest.raises(ValueError):
            regularize_problem(problem, np.array([2.0, 0.0]), 1.0, np.array([1.0]))

    def test_gradient_wrapping(self):
        problem = quadratic_problem([0.3, 0.1])
        center = np.array([0.1, 0.1])
        reg = regularize_problem(problem, center, 1.5, np.array([0.5]))
        x = np.array([0.6, -0.2])
        expected = problem.oracles[0].noiseless_grad(x) + 2 * 1.5 * (x - center)
        assert np.allclose(reg.oracles[0].noiseless_grad(x), expected)


class TestRegularizationStrengths:
    def test_default_compensates_lipschitz(self):
        c = SmoothnessConstants(
            L=np.array([3.0, 1.0]),
            M=np.array([1.0, 1.0]),
            sigma=np.array([TINY, TINY]),
            sigma_f=np.array([TINY, TINY]),
        )
        mu0, mu = default_regularization(c)
        assert mu0 == 3.0 and np.array_equal(mu, [1.0])

    def test_spectral_certifies_convexity(self):
        instance = random_instance(6, 2, convex=False, seed=4)
        mu0, mu = spectral_regularization(instance.min_eigenvalues())
        lam = instance.min_eigenvalues()
        cert = 2.0 * lam + 2.0 * np.concatenate(([mu0], mu))
        assert np.all(cert >= -1e-12)

    def test_default_certifies_convexity_on_instances(self):
        for seed in range(3):
            instance = random_instance(5, 2, convex=False, seed=seed)
            problem = instance.problem()
            mu0, mu = default_regularization(problem.constants)
            lam = instance.min_eigenvalues()
            cert = 2.0 * lam + 2.0 * np.concatenate(([mu0], mu))
            assert np.all(cert >= 0.0)


class TestKktResidual:
    def test_reference_optimum_certifies(self):
        instance = random_instance(5, 2, convex=True, seed=8)
        ref = reference_solve(instance)
        report = kkt_residual(instance.problem(), ref.x_star, ref.y_star)
        assert report.stationarity <= 1e-4
        assert report.complementarity <= 1e-4
        assert report.violation <= 1e-6

    def test_interior_unconstrained_minimizer(self):
        a = np.array([0.3, -0.2])
        problem = quadratic_problem(a)
        report = kkt_residual(problem, a, np.zeros(1))
        assert report.stationarity <= 1e-6

    def test_zero_dual_zero_complementarity(self):
        problem = quadratic_problem([0.5, 0.5])
        report = kkt_residual(problem, np.array([0.6, 0.1]), np.zeros(1))
        assert report.complementarity == 0.0

    def test_residuals_nonnegative(self):
        problem = quadratic_problem([0.5, 0.5])
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = problem.domain.sample(rng)
            y = np.abs(rng.normal(size=1))
            report = kkt_residual(problem, x, y)
            assert report.stationarity >= 0
            assert report.complementarity >= 0
            assert report.violation >= 0


class TestEstimateMultipliers:
    def test_exact_cancellation(self):
        # grad f_0 = -grad f_1 at x: the best multiplier is 1
        n = 2
        oracles = [
            StochasticOracle(lambda x: x[0], NoiseModel("none"), noiseless_grad=lambda x: np.array([1.0, 0.0])),
            StochasticOracle(lambda x: -x[0], NoiseModel("none"), noiseless_grad=lambda x: np.array([-1.0, 0.0])),
        ]
        problem = ProblemSpec(
            dimension=n,
            constraint_count=1,
            oracles=oracles,
            domain=Box(np.full(n, -1.0), np.full(n, 1.0)),
            constants=SmoothnessConstants(
                L=np.full(2, 1e-6), M=np.ones(2), sigma=np.full(2, TINY), sigma_f=np.full(2, TINY)
            ),
        )
        y = estimate_multipliers(problem, np.zeros(n))
        assert np.allclose(y, [1.0], atol=1e-6)

    def test_zero_gradient_gives_zero_dual(self):
        a = np.array([0.2, 0.2])
        problem = quadratic_problem(a)
        y = estimate_multipliers(problem, a)
        assert np.allclose(y, 0.0, atol=1e-9)

    def test_matches_dense_grid_search(self):
        instance = random_instance(4, 2, convex=True, seed=12)
        problem = instance.problem()
        rng = np.random.default_rng(1)
        for _ in range(3):
            x = instance.domain.sample(rng) * 0.9
            y = estimate_multipliers(problem, x)
            g0 = instance.grad(0, x)
            F = np.column_stack([instance.grad(i, x) for i in (1, 2)])
            def residual(yv):
                return float(np.linalg.norm(g0 + F @ yv))
            grid = np.linspace(0.0, 10.0, 161)
            best = min(residual(np.array([a, b])) for a in grid for b in grid)
            assert residual(y) <= best + 1e-3


class TestSnapping:
    def test_snap_box_faces(self):
        domain = Box(np.full(3, -1.0), np.full(3, 1.0))
        x = np.array([0.97, -0.98, 0.2])
        snapped = snap_to_boundary(domain, x, 0.05)
        assert np.array_equal(snapped, [1.0, -1.0, 0.2])

    def test_zero_tolerance_is_identity(self):
        domain = Box(np.full(2, -1.0), np.full(2, 1.0))
        x = np.array([0.999, 0.0])
        assert np.array_equal(snap_to_boundary(domain, x, 0.0), x)

    def test_nearby_report_handles_face_supported_points(self):
        # a stationary point on the face, perturbed inward by a noise floor:
        # the raw residual is inflated, the nearby-pair residual is not
        a = np.array([1.5, 0.0])  # unconstrained minimizer outside the box
        problem = quadratic_problem(a, m=1)
        x_star = np.array([1.0, 0.0])
        noisy = x_star - np.array([0.02, 0.0])
        raw = kkt_residual(problem, noisy, estimate_multipliers(problem, noisy))
        near, x_bar = nearby_kkt_report(problem, noisy, 0.05)
        assert raw.stationarity > 0.5
        assert near.stationarity <= 1e-6
        assert np.array_equal(x_bar, x_star)


class TestProximalPointSolve:
    def _prox_config(self, problem, K, T=400, snap=0.0):
        mu0, mu = default_regularization(problem.constants)
        return ProximalConfig(
            mu0=mu0,
            mu=mu,
            outer_steps=K,
            inner_T=T,
            inner_eta=6.0 * np.sqrt(T),
            inner_tau=2.0 * np.sqrt(T),
            kkt_snap_tol=snap,
        )

    def test_single_step_equals_one_regularized_solve(self):
        problem = quadratic_problem([0.3, 0.1])
        pc = self._prox_config(problem, K=1)
        result = proximal_point_solve(problem, pc, SmoothingConfig.uniform(1e-3, 1), StreamSet(5))
        reg = regularize_problem(problem.clone(), problem.domain.center(), pc.mu0, pc.mu)
        from zoconex.problem import aggregate_constants

        _, l_f = aggregate_constants(reg.constants)
        sched = StepSchedule(
            T=pc.inner_T, eta_t=reg.constants.L[0] + l_f + pc.inner_eta, tau_t=pc.inner_tau
        )
        x_direct, _ = solve(
            reg, sched, SmoothingConfig.uniform(1e-3, 1), StreamSet(5).child(1),
            x0=problem.domain.center(),
        )
        assert np.array_equal(result.x_hat, x_direct)
        assert result.k_hat == 1

    def test_deterministic_replay(self):
        def run():
            problem = quadratic_problem([0.4, -0.2])
            pc = self._prox_config(problem, K=3, T=200)
            return proximal_point_solve(problem, pc, SmoothingConfig.uniform(1e-3, 1), StreamSet(77))

        r1, r2 = run(), run()
        assert r1.k_hat == r2.k_hat
        assert np.array_equal(r1.x_hat, r2.x_hat)
        for a, b in zip(r1.iterates, r2.iterates):
            assert np.array_equal(a, b)

    def test_convex_problem_matches_direct_solve_budget(self):
        # outer loop with small mu stays within 2x of a direct run's gap
        a = np.array([0.6, 0.35])
        problem = quadratic_problem(a)
        # analytic optimum of ||x - a||^2 s.t. x_0 >= 0.25 inside the box: x = a
        f_star = 0.0
        K, T = 3, 600
        mu_tiny = 1e-3
        pc = ProximalConfig(
            mu0=mu_tiny,
            mu=np.array([mu_tiny]),
            outer_steps=K,
            inner_T=T,
            inner_eta=6.0 * np.sqrt(T),
            inner_tau=2.0 * np.sqrt(T),
        )
        config = SmoothingConfig.uniform(1e-3, 1)
        result = proximal_point_solve(problem, pc, config, StreamSet(9))
        gap_meta = problem.oracles[0].noiseless_fn(result.iterates[-1]) - f_star

        direct = quadratic_problem(a)
        sched = StepSchedule(T=K * T, eta_t=2.0 + 1e-6 + 6.0 * np.sqrt(K * T), tau_t=2.0 * np.sqrt(K * T))
        x_direct, _ = solve(direct, sched, config, StreamSet(9).child(99))
        gap_direct = direct.oracles[0].noiseless_fn(x_direct) - f_star
        assert gap_meta <= 2.0 * gap_direct + 1e-3

    def test_reports_present_with_diagnostics(self):
        problem = quadratic_problem([0.4, 0.0])
        pc = self._prox_config(problem, K=2, snap=0.05)
        result = proximal_point_solve(problem, pc, SmoothingConfig.uniform(1e-3, 1), StreamSet(3))
        assert len(result.reports) == 2
        assert len(result.nearby_reports) == 2
        assert result.initial_report is not None
        assert result.best_index in (0, 1)
        assert 1 <= result.k_hat <= 2
