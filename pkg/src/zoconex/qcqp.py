"""Quadratically constrained quadratic benchmark instances.

Functions are f_i(x) = x' A_i x + b_i' x + c_i on a box domain: index 0 is
the objective, indices 1..m the constraints (f_i <= 0, the usual unit
right-hand side folded into c_i). Convex instances use well-conditioned PSD
matrices; nonconvex ones use symmetric matrices with eigenvalues straddling
zero. The module also ships a noiseless reference solver (interior
log-barrier path with projected-gradient centering) so optimality gaps can
be certified without an external dependency.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .geometry import Ball, Box, EuclideanGeometry, domain_diameter, project_nonneg
from .problem import NoiseModel, ProblemSpec, SmoothnessConstants, StochasticOracle
from .proximal import estimate_multipliers, kkt_residual
from .smoothing import SmoothingConfig

_L_FLOOR = 1e-6
_GRADIENT_NOISE_BOUND = 1e-9  # additive value noise leaves gradients exact


@dataclass
class QcqpInstance:
    """One benchmark instance: matrices A (m+1, n, n), vectors b, offsets c."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    convex: bool
    domain: object
    _reference: "ReferenceSolution | None" = field(default=None, repr=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        # symmetrize defensively; generation already produces symmetric blocks
        self.A = 0.5 * (A + np.transpose(A, (0, 2, 1)))
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if self.A.ndim != 3 or self.A.shape[1] != self.A.shape[2]:
            raise ValueError("A must have shape (m+1, n, n)")
        if self.b.shape != self.A.shape[:2] or self.c.shape != (self.A.shape[0],):
            raise ValueError("b/c shapes inconsistent with A")

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0] - 1

    def value(self, i: int, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ (self.A[i] @ x) + self.b[i] @ x + self.c[i])

    def grad(self, i: int, x) -> np.ndarray:
        return 2.0 * (self.A[i] @ np.asarray(x, dtype=float)) + self.b[i]

    def constraint_values(self, x) -> np.ndarray:
        return np.array([self.value(i, x) for i in range(1, self.m + 1)])

    def min_eigenvalues(self) -> np.ndarray:
        return np.array([np.linalg.eigvalsh(self.A[i])[0] for i in range(self.m + 1)])

    def gradient_lipschitz(self) -> np.ndarray:
        """L_i = 2 * spectral radius of A_i (floored away from zero)."""
        out = np.empty(self.m + 1)
        for i in range(self.m + 1):
            eigs = np.linalg.eigvalsh(self.A[i])
            out[i] = 2.0 * max(abs(eigs[0]), abs(eigs[-1]))
        return np.maximum(out, _L_FLOOR)

    def value_lipschitz(self) -> np.ndarray:
        """M_i = upper bound on sup over the domain of || 2 A_i x + b_i ||."""
        out = np.empty(self.m + 1)
        if isinstance(self.domain, Box):
            lower, upper = self.domain.lower, self.domain.upper
            for i in range(self.m + 1):
                rows = 2.0 * self.A[i]
                hi = self.b[i] + np.sum(np.maximum(rows * lower, rows * upper), axis=1)
                lo = self.b[i] + np.sum(np.minimum(rows * lower, rows * upper), axis=1)
                out[i] = float(np.linalg.norm(np.maximum(np.abs(hi), np.abs(lo))))
        elif isinstance(self.domain, Ball):
            c0, r = self.domain.center_point, self.domain.radius
            for i in range(self.m + 1):
                eigs = np.linalg.eigvalsh(self.A[i])
                rho = max(abs(eigs[0]), abs(eigs[-1]))
                out[i] = float(np.linalg.norm(2.0 * self.A[i] @ c0 + self.b[i])) + 2.0 * r * rho
        else:
            raise NotImplementedError(f"unsupported domain {type(self.domain).__name__}")
        return np.maximum(out, _L_FLOOR)

    def constants(self, noise_models) -> SmoothnessConstants:
        models = _noise_list(noise_models, self.m)
        return SmoothnessConstants(
            L=self.gradient_lipschitz(),
            M=self.value_lipschitz(),
            sigma=np.full(self.m + 1, _GRADIENT_NOISE_BOUND),
            sigma_f=np.array([nm.value_std_bound() for nm in models]),
        )

    def problem(self, noise_models=None) -> ProblemSpec:
        """Wire the instance into a solvable ProblemSpec."""
        models = _noise_list(noise_models, self.m)
        oracles = [
            StochasticOracle(
                noiseless_fn=_quadratic(self.A[i], self.b[i], self.c[i]),
                noise_model=models[i],
                noiseless_grad=_quadratic_grad(self.A[i], self.b[i]),
            )
            for i in range(self.m + 1)
        ]
        return ProblemSpec(
            dimension=self.n,
            constraint_count=self.m,
            oracles=oracles,
            domain=self.domain,
            constants=self.constants(models),
        )


def _quadratic(Ai, bi, ci):
    def f(x):
        return x @ (Ai @ x) + bi @ x + ci

    return f


def _quadratic_grad(Ai, bi):
    def g(x):
        return 2.0 * (Ai @ np.asarray(x, dtype=float)) + bi

    return g


def _noise_list(noise_models, m) -> list[NoiseModel]:
    if noise_models is None:
        return [NoiseModel("none")] * (m + 1)
    if isinstance(noise_models, NoiseModel):
        return [noise_models] * (m + 1)
    models = list(noise_models)
    if len(models) != m + 1:
        raise ValueError("need one noise model per function")
    return models


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def random_instance(
    n: int,
    m: int,
    convex: bool,
    seed: int,
    box_halfwidth: float = 1.0,
    max_attempts: int = 60,
) -> QcqpInstance:
    """Draw a random instance on the box [-h, h]^n, strictly feasible at 0.

    Convex blocks are G'G/n + 1e-3 I for standard normal G; nonconvex
    blocks are symmetrized normals with eigenvalues verified to straddle
    zero. Constraint offsets are fixed at -1 so the origin is strictly
    feasible. For convex instances the reference optimum is verified to lie
    strictly inside the box; failing draws are regenerated with the
    objective's linear term progressively damped (first attempt undamped).
    """
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    domain = Box(np.full(n, -box_halfwidth), np.full(n, box_halfwidth))
    root = np.random.SeedSequence(entropy=int(seed), spawn_key=(90210,))
    margin = 1e-3 * box_halfwidth
    for attempt, child in enumerate(root.spawn(max_attempts)):
        rng = np.random.Generator(np.random.PCG64(child))
        A = np.empty((m + 1, n, n))
        for i in range(m + 1):
            A[i] = _random_block(rng, n, convex)
        b = rng.standard_normal((m + 1, n))
        b[0] *= 0.8**attempt
        c = np.concatenate(([rng.standard_normal()], np.full(m, -1.0)))
        instance = QcqpInstance(A=A, b=b, c=c, convex=convex, domain=domain)
        if not convex:
            return instance
        ref = reference_solve(instance)
        if ref.solved and np.all(np.abs(ref.x_star) <= box_halfwidth - margin):
            instance._reference = ref
            return instance
    raise RuntimeError(
        f"no instance with an interior reference optimum in {max_attempts} attempts"
    )


def _random_block(rng, n, convex) -> np.ndarray:
    if convex:
        G = rng.standard_normal((n, n))
        return G.T @ G / n + 1e-3 * np.eye(n)
    for _ in range(64):
        G = rng.standard_normal((n, n))
        A = 0.5 * (G + G.T)
        eigs = np.linalg.eigvalsh(A)
        if eigs[0] < -1e-8 and eigs[-1] > 1e-8:
            return A
    raise RuntimeError("could not draw an indefinite block")


# ---------------------------------------------------------------------------
# noiseless reference solving
# ---------------------------------------------------------------------------


@dataclass
class ReferenceSolution:
    x_star: np.ndarray
    f0_star: float
    y_star: np.ndarray
    kkt_residual: float
    solved: bool
    optimal: bool  # False for nonconvex best-of-multistart benchmarks


def reference_solve(
    instance: QcqpInstance,
    barrier_stages: int = 40,
    center_tol: float = 1e-8,
    max_center_iters: int = 80,
    multistarts: int = 32,
) -> ReferenceSolution:
    """Interior log-barrier path with projected-gradient centering.

    The barrier parameter starts at 1.0 and is halved ``barrier_stages``
    times; each stage is centered by projected gradient with Barzilai-
    Borwein steps and Armijo backtracking until the unit-step gradient
    mapping falls under ``center_tol``. Multipliers come from the barrier,
    y_i = mu / (-f_i(x)). Convex instances get a certified optimum;
    nonconvex ones get the best of ``multistarts`` runs from random
    interior starts, reported as a stationary benchmark only.
    """
    if instance._reference is not None:
        return instance._reference
    if instance.convex:
        result = _barrier_descent(
            instance, np.zeros(instance.n), barrier_stages, center_tol, max_center_iters
        )
        if result is not None:
            instance._reference = result
            return result
        return ReferenceSolution(
            x_star=np.zeros(instance.n),
            f0_star=float("nan"),
            y_star=np.zeros(instance.m),
            kkt_residual=float("inf"),
            solved=False,
            optimal=False,
        )

    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=instance.n * 1000003 + instance.m, spawn_key=(7,))
    )
    best: ReferenceSolution | None = None
    starts = [np.zeros(instance.n)]
    while len(starts) < multistarts:
        x = instance.domain.sample(rng)
        for _ in range(40):  # pull toward the strictly feasible origin
            if np.all(instance.constraint_values(x) < -1e-9):
                break
            x = 0.5 * x
        starts.append(x)
    for x0 in starts:
        result = _barrier_descent(
            instance, x0, barrier_stages, center_tol, max_center_iters
        )
        if result is None:
            continue
        if best is None or result.f0_star < best.f0_star:
            best = result
    if best is None:
        return ReferenceSolution(
            x_star=np.zeros(instance.n),
            f0_star=float("nan"),
            y_star=np.zeros(instance.m),
            kkt_residual=float("inf"),
            solved=False,
            optimal=False,
        )
    best = ReferenceSolution(
        x_star=best.x_star,
        f0_star=best.f0_star,
        y_star=best.y_star,
        kkt_residual=best.kkt_residual,
        solved=True,
        optimal=False,
    )
    instance._reference = best
    return best


def _box_barrier(domain: Box, x):
    """(slack-feasible, value, grad, hess-diagonal) of the box log-barrier."""
    lo = x - domain.lower
    hi = domain.upper - x
    if np.any(lo <= 0.0) or np.any(hi <= 0.0):
        return False, np.inf, None, None
    value = -float(np.sum(np.log(lo)) + np.sum(np.log(hi)))
    grad = -1.0 / lo + 1.0 / hi
    hess_diag = 1.0 / lo**2 + 1.0 / hi**2
    return True, value, grad, hess_diag


def _barrier_descent(instance, x0, stages, tol, max_iters) -> ReferenceSolution | None:
    domain = instance.domain
    if not isinstance(domain, Box):
        raise NotImplementedError("reference solving is implemented for box domains")
    m = instance.m

    def feasible(x):
        inside = np.all(x > domain.lower) and np.all(x < domain.upper)
        return bool(inside) and (m == 0 or np.all(instance.constraint_values(x) < 0.0))

    def phi(x, mu):
        ok, box_val, _, _ = _box_barrier(domain, x)
        if not ok or (m and not np.all(instance.constraint_values(x) < 0.0)):
            return np.inf
        val = instance.value(0, x) + mu * box_val
        if m:
            val -= mu * float(np.sum(np.log(-instance.constraint_values(x))))
        return float(val)

    def grad_phi(x, mu):
        _, _, box_grad, _ = _box_barrier(domain, x)
        g = instance.grad(0, x) + mu * box_grad
        for i in range(1, m + 1):
            g = g + (mu / (-instance.value(i, x))) * instance.grad(i, x)
        return g

    def hess_phi(x, mu):
        _, _, _, box_hess = _box_barrier(domain, x)
        H = 2.0 * instance.A[0] + mu * np.diag(box_hess)
        for i in range(1, m + 1):
            fi = instance.value(i, x)
            gi = instance.grad(i, x)
            H += (mu / fi**2) * np.outer(gi, gi) + (mu / (-fi)) * (2.0 * instance.A[i])
        return H

    x = np.asarray(x0, dtype=float).copy()
    if not feasible(x):
        return None
    problem = instance.problem()
    best = None  # (residual, x, y)
    mu = 1.0
    for _ in range(stages + 1):
        x = _center(
            x,
            lambda z: phi(z, mu),
            lambda z: grad_phi(z, mu),
            lambda z: hess_phi(z, mu),
            tol,
            max_iters,
        )
        if m:
            y = np.array([mu / (-instance.value(i, x)) for i in range(1, m + 1)])
        else:
            y = np.zeros(0)
        # Certify each stage center; late stages stop improving once the
        # barrier Hessian stiffness (~ 1/mu) meets float64 granularity, so
        # the best-certified point on the path is the one to return.
        residual = kkt_residual(problem, x, y).max_residual()
        if best is None or residual < best[0]:
            best = (residual, x.copy(), y)
        mu *= 0.5
    residual, x, y = best
    return ReferenceSolution(
        x_star=x,
        f0_star=instance.value(0, x),
        y_star=y,
        kkt_residual=residual,
        solved=residual <= 1e-4,
        optimal=instance.convex,
    )


def _center(x, fval, fgrad, fhess, tol, max_iters):
    """Center one barrier stage by damped Newton on the (interior) barrier.

    While far from the center the step is Armijo-backtracked; once the
    Newton decrement is small (quadratic phase) full steps are taken
    without a line search, which avoids stalling on float64 rounding of
    the Armijo test. Infeasible trial points are rejected through the
    barrier value being +inf. Returns the best point reached; the final
    KKT certificate is the arbiter of success.
    """
    g = fgrad(x)
    for _ in range(max_iters):
        if np.linalg.norm(g) <= tol:
            return x
        H = fhess(x)
        direction = None
        damping = 0.0
        scale = max(float(np.trace(H)) / max(H.shape[0], 1), 1.0)
        for _ in range(16):
            try:
                chol = np.linalg.cholesky(H + damping * np.eye(H.shape[0]))
                direction = np.linalg.solve(chol.T, np.linalg.solve(chol, -g))
                break
            except np.linalg.LinAlgError:
                damping = max(2.0 * damping, 1e-8 * scale)
        if direction is None:
            direction = -g
        decrement_sq = float(-g @ direction)
        full = x + direction
        if damping == 0.0 and 0.0 <= decrement_sq <= 0.25 and np.isfinite(fval(full)):
            # quadratic phase: full feasible Newton step, no search
            if np.array_equal(full, x):
                return x  # step below float64 granularity
            x = full
            g = fgrad(x)
            continue
        base = fval(x)
        x_new = _armijo(x, direction, g, base, fval)
        if x_new is None and not np.array_equal(direction, -g):
            x_new = _armijo(x, -g, g, base, fval)
        if x_new is None:
            return x  # at the float64 noise floor
        x = x_new
        g = fgrad(x)
    return x


def _armijo(x, direction, g, base, fval):
    step = 1.0
    for _ in range(40):
        x_new = x + step * direction
        diff = x_new - x
        if float(diff @ diff) == 0.0:
            return None
        decrease = float(g @ diff)
        if decrease < 0.0 and fval(x_new) <= base + 1e-4 * decrease:
            return x_new
        step *= 0.5
    return None


def certified_multipliers(instance: QcqpInstance, x) -> np.ndarray:
    """Best nonnegative multipliers for the stationarity residual at x."""
    return estimate_multipliers(instance.problem(), x)


# ---------------------------------------------------------------------------
# metrics and gap diagnostics
# ---------------------------------------------------------------------------


def metrics(instance: QcqpInstance, reference: ReferenceSolution, x) -> tuple[float, float]:
    """(optimality gap, constraint violation) from the noiseless forms.

    The gap keeps its sign: an infeasible probe can be super-optimal.
    """
    gap = instance.value(0, x) - reference.f0_star
    violation = float(np.linalg.norm(project_nonneg(instance.constraint_values(x))))
    return float(gap), violation


def lagrangian(instance: QcqpInstance, x, y) -> float:
    val = instance.value(0, x)
    if instance.m:
        val += float(np.asarray(y, dtype=float) @ instance.constraint_values(x))
    return val


def lagrangian_gap(instance: QcqpInstance, z, z_bar) -> float:
    """Q(z, z_bar) = L(x, y_bar) - L(x_bar, y) with noiseless values."""
    (x, y), (x_bar, y_bar) = z, z_bar
    return lagrangian(instance, x, y_bar) - lagrangian(instance, x_bar, y)


def smoothed_lagrangian_gap(instance: QcqpInstance, config: SmoothingConfig, z, z_bar) -> float:
    """Q with every f_i replaced by its Gaussian smoothing.

    Exact for quadratics: f_{i, nu}(x) = f_i(x) + nu_i^2 trace(A_i).
    """
    (x, y), (x_bar, y_bar) = z, z_bar
    traces = np.array([np.trace(instance.A[i]) for i in range(instance.m + 1)])

    def l_nu(xx, yy):
        val = instance.value(0, xx) + config.nu0**2 * traces[0]
        if instance.m:
            smoothed = instance.constraint_values(xx) + config.nu**2 * traces[1:]
            val += float(np.asarray(yy, dtype=float) @ smoothed)
        return val

    return l_nu(x, y_bar) - l_nu(x_bar, y)


def smoothed_gap_deviation(
    instance: QcqpInstance, config: SmoothingConfig, z, z_bar
) -> tuple[float, float]:
    """Exact |Q - Q_nu| against its closed-form bound.

    The bound nu_0^2 L_0 n + M_X n sqrt(sum nu_i^4 L_i^2) is valid for dual
    vectors with norm at most M_X = sup ||x|| over the domain; probes should
    respect that.
    """
    lhs = abs(lagrangian_gap(instance, z, z_bar) - smoothed_lagrangian_gap(instance, config, z, z_bar))
    L = instance.gradient_lipschitz()
    _, m_x = domain_diameter(EuclideanGeometry(), instance.domain)
    n = instance.n
    rhs = config.nu0**2 * L[0] * n
    if instance.m:
        rhs += m_x * n * float(np.sqrt(np.sum(config.nu**4 * L[1:] ** 2)))
    return float(lhs), float(rhs)


# ---------------------------------------------------------------------------
# serialization (field-for-field, 17 significant digits)
# ---------------------------------------------------------------------------


def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in np.asarray(values).ravel())


def instance_to_text(instance: QcqpInstance) -> str:
    out = io.StringIO()
    out.write("zoconex-qcqp 1\n")
    out.write(f"n {instance.n}\n")
    out.write(f"m {instance.m}\n")
    out.write(f"convex {int(instance.convex)}\n")
    if isinstance(instance.domain, Box):
        out.write("domain box\n")
        out.write(f"lower {_fmt(instance.domain.lower)}\n")
        out.write(f"upper {_fmt(instance.domain.upper)}\n")
    elif isinstance(instance.domain, Ball):
        out.write("domain ball\n")
        out.write(f"center {_fmt(instance.domain.center_point)}\n")
        out.write(f"radius {_fmt([instance.domain.radius])}\n")
    else:
        raise NotImplementedError("unsupported domain for serialization")
    for i in range(instance.m + 1):
        out.write(f"A{i} {_fmt(instance.A[i])}\n")
        out.write(f"b{i} {_fmt(instance.b[i])}\n")
        out.write(f"c{i} {_fmt([instance.c[i]])}\n")
    return out.getvalue()


def instance_from_text(text: str) -> QcqpInstance:
    fields: dict[str, list[str]] = {}
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("zoconex-qcqp"):
        raise ValueError("not a serialized instance")
    for line in lines[1:]:
        key, *rest = line.split(" ")
        fields[key] = rest
    n = int(fields["n"][0])
    m = int(fields["m"][0])
    convex = bool(int(fields["convex"][0]))
    kind = fields["domain"][0]
    if kind == "box":
        domain = Box(
            np.array([float(v) for v in fields["lower"]]),
            np.array([float(v) for v in fields["upper"]]),
        )
    elif kind == "ball":
        domain = Ball(
            np.array([float(v) for v in fields["center"]]),
            float(fields["radius"][0]),
        )
    else:
        raise ValueError(f"unknown domain kind {kind!r}")
    A = np.empty((m + 1, n, n))
    b = np.empty((m + 1, n))
    c = np.empty(m + 1)
    for i in range(m + 1):
        A[i] = np.array([float(v) for v in fields[f"A{i}"]]).reshape(n, n)
        b[i] = np.array([float(v) for v in fields[f"b{i}"]])
        c[i] = float(fields[f"c{i}"][0])
    return QcqpInstance(A=A, b=b, c=c, convex=convex, domain=domain)
