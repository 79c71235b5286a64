"""Built-in invariant and diagnostic checks, exposed as ``zoconex verify``.

Each check prints one pass/fail line; the suite returns True only if every
check passes. These are quick spot checks, not the full test suite.
"""

from __future__ import annotations

import tempfile

import numpy as np

from .geometry import (
    Ball,
    Box,
    EuclideanGeometry,
    bregman_divergence,
    domain_diameter,
    normal_cone_distance,
    prox_step,
)
from .problem import NoiseModel, ledger_expected_calls
from .qcqp import (
    instance_from_text,
    instance_to_text,
    random_instance,
    reference_solve,
    smoothed_gap_deviation,
)
from .smoothing import (
    SmoothingConfig,
    gradient_variance_bound,
    select_smoothing_parameters,
    two_point_gradient,
)
from .solver import schedule_from_bounds, solve
from .streams import StreamSet


def _check_prox_variational_inequality(rng) -> tuple[bool, str]:
    geom = EuclideanGeometry()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 6))
        if rng.uniform() < 0.5:
            lo = rng.uniform(-2, 0, n)
            hi = lo + rng.uniform(0.1, 2, n)
            domain = Box(lo, hi)
        else:
            domain = Ball(rng.uniform(-1, 1, n), float(rng.uniform(0.2, 2)))
        x_tilde = domain.project(rng.uniform(-2, 2, n))
        v = rng.normal(0, 3, n)
        eta = float(rng.uniform(0.1, 10))
        x_plus = prox_step(geom, domain, v, x_tilde, eta)
        for _ in range(50):
            z = domain.project(rng.uniform(-3, 3, n))
            resid = float((v + eta * (x_plus - x_tilde)) @ (z - x_plus))
            worst = min(worst, resid)
    ok = worst >= -1e-9
    return ok, f"prox variational inequality: worst residual {worst:.3e}"


def _check_cone_distance_grid(rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(60):
        n = int(rng.integers(1, 3))
        lo = rng.uniform(-1.5, 0, n)
        hi = lo + rng.uniform(0.5, 2, n)
        domain = Box(lo, hi)
        x = domain.project(rng.choice([-2.0, 0.0, 2.0], n) + rng.normal(0, 0.3, n))
        g = rng.normal(0, 2, n)
        fast = normal_cone_distance(domain, x, g)
        # brute force over a dense grid of the cone
        axes = []
        for j in range(n):
            if x[j] >= hi[j] - 1e-9:
                axes.append(np.linspace(0, 6, 241))
            elif x[j] <= lo[j] + 1e-9:
                axes.append(-np.linspace(0, 6, 241))
            else:
                axes.append(np.zeros(1))
        best = np.inf
        mesh = np.meshgrid(*axes, indexing="ij")
        w = np.stack([m_.ravel() for m_ in mesh], axis=-1)
        best = float(np.min(np.linalg.norm(g[None, :] - w, axis=1)))
        worst = max(worst, abs(fast - best))
    ok = worst <= 1e-6
    return ok, f"normal-cone distance vs grid search: worst gap {worst:.3e}"


def _check_ledger(seed) -> tuple[bool, str]:
    ok = True
    details = []
    for m, T in ((0, 5), (1, 10), (3, 100)):
        instance = random_instance(4, m, convex=True, seed=seed + m)
        problem = instance.problem(NoiseModel("gaussian", sigma=0.05, common=True))
        config = SmoothingConfig.uniform(0.01, m)
        d_x, _ = domain_diameter(EuclideanGeometry(), instance.domain)
        schedule = schedule_from_bounds(problem.constants, config, 4, d_x, T)
        solve(problem, schedule, config, seed)
        expected = ledger_expected_calls(m, T)
        ok = ok and problem.ledger.total == expected
        details.append(f"(m={m},T={T}):{problem.ledger.total}/{expected}")
    return ok, "oracle ledger exactness: " + " ".join(details)


def _check_variance_bound(seed) -> tuple[bool, str]:
    instance = random_instance(6, 2, convex=True, seed=seed)
    noise = NoiseModel("gaussian", sigma=0.1, common=True)
    problem = instance.problem(noise)
    d_x, m_x = domain_diameter(EuclideanGeometry(), instance.domain)
    config = select_smoothing_parameters(problem.constants, 6, 2, 1000, m_x)
    streams = StreamSet(seed)
    ok = True
    details = []
    x = instance.domain.center()
    for i in range(3):
        nu = config.radius(i)
        grads = np.empty((4000, 6))
        for k in range(4000):
            grads[k] = two_point_gradient(
                problem.oracles[i], x, nu, streams.xi(i), streams.u(i)
            ).g
        emp = float(np.mean(np.sum((grads - instance.grad(i, x)) ** 2, axis=1)))
        bound = gradient_variance_bound(
            nu,
            problem.constants.L[i],
            problem.constants.M[i],
            problem.constants.sigma[i],
            6,
            d_x,
        )
        ok = ok and emp <= bound
        details.append(f"f{i}:{emp:.1f}<={bound:.1f}")
    return ok, "gradient variance domination: " + " ".join(details)


def _check_reference_and_gap(seed) -> tuple[bool, str]:
    ok = True
    worst_kkt = 0.0
    worst_margin = np.inf
    for k in range(5):
        instance = random_instance(5, 2, convex=True, seed=seed + 11 * k)
        ref = reference_solve(instance)
        ok = ok and ref.solved and ref.kkt_residual <= 1e-4
        worst_kkt = max(worst_kkt, ref.kkt_residual)
        config = SmoothingConfig.uniform(0.05, 2)
        rng = np.random.default_rng(seed + k)
        _, m_x = domain_diameter(EuclideanGeometry(), instance.domain)
        for _ in range(20):
            z = (instance.domain.sample(rng), _dual_sample(rng, 2, m_x))
            z_bar = (instance.domain.sample(rng), _dual_sample(rng, 2, m_x))
            lhs, rhs = smoothed_gap_deviation(instance, config, z, z_bar)
            ok = ok and lhs <= rhs + 1e-12
            worst_margin = min(worst_margin, rhs - lhs)
    return ok, (
        f"reference KKT residual <= 1e-4 (worst {worst_kkt:.2e}); "
        f"smoothed-gap bound margin >= {worst_margin:.2e}"
    )


def _dual_sample(rng, m, m_x):
    y = np.abs(rng.normal(0, 0.5, m))
    norm = np.linalg.norm(y)
    if norm > m_x:
        y *= m_x / norm
    return y


def _check_serialization(seed) -> tuple[bool, str]:
    instance = random_instance(4, 1, convex=False, seed=seed)
    text = instance_to_text(instance)
    back = instance_from_text(text)
    same = (
        np.array_equal(instance.A, back.A)
        and np.array_equal(instance.b, back.b)
        and np.array_equal(instance.c, back.c)
    )
    return same, "instance serialization round-trip: exact"


def _check_bregman(rng) -> tuple[bool, str]:
    geom = EuclideanGeometry()
    ok = True
    for _ in range(200):
        n = int(rng.integers(1, 8))
        ypt = rng.normal(0, 2, n)
        xpt = rng.normal(0, 2, n)
        w = bregman_divergence(geom, ypt, xpt)
        half = 0.5 * float(np.sum((ypt - xpt) ** 2))
        ok = ok and abs(w - half) <= 1e-12 and w >= 0
    return ok, "bregman divergence sandwich (euclidean)"


def run_verification(seed: int = 7, printer=print) -> bool:
    rng = np.random.default_rng(seed)
    checks = [
        _check_bregman(rng),
        _check_prox_variational_inequality(rng),
        _check_cone_distance_grid(rng),
        _check_ledger(seed),
        _check_variance_bound(seed),
        _check_reference_and_gap(seed),
        _check_serialization(seed),
    ]
    all_ok = True
    for ok, message in checks:
        printer(f"[{'PASS' if ok else 'FAIL'}] {message}")
        all_ok = all_ok and ok
    printer(f"verification {'passed' if all_ok else 'FAILED'}")
    return all_ok
