"""Primal-dual constraint-extrapolation solver on zeroth-order oracles.

One iteration, starting from the pair (x_curr, x_prev) with dual y:

1. extrapolated constraint signal  s = (1 + theta) * l_F(x_curr)
   - theta * l_F(x_prev), where l_F is the stochastic affine model of the
   constraint block built from two-point estimates at the previous iterate;
2. dual ascent                     y <- [y + s / tau]_+ ;
3. primal prox descent             x <- prox(G_0 + sum_i y_i G_i, x, eta)
   with fresh two-point gradient estimates, drawn independently of the
   draws the affine models used;
4. a new affine model is built at the pre-step point for the next round,
   and the new iterate enters a weighted running average, which is the
   returned solution.

Oracle budget per iteration is 2 + 4m calls (2 per gradient pair for the
objective, 2 + 2 per constraint for model and gradient); initialization
spends one extra full sweep, giving exactly (2 + 4m) (T + 1) calls total.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import EuclideanGeometry, project_nonneg, prox_step
from .problem import (
    ProblemSpec,
    SmoothnessConstants,
    aggregate_constants,
    ledger_expected_calls,
)
from .smoothing import (
    SmoothingConfig,
    gradient_variance_bound,
    two_point_gradient,
    value_variance_bound,
)
from .streams import StreamSet

_SCHEDULE_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# step-size schedule
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepSchedule:
    """Constant per-iteration step parameters.

    ``eta_t`` is the full primal stiffness (it must strictly exceed
    L_0 + L_f); ``tau_t`` scales the dual ascent; ``gamma_t`` weights the
    averaging and ``theta_t`` the extrapolation. Constant sequences with
    theta = 1 satisfy the compatibility conditions the convergence argument
    needs (gamma_t * theta_t = gamma_{t-1} and non-increasing
    gamma_t * tau_t, gamma_t * eta_t), which is checked at construction.
    """

    T: int
    eta_t: float
    tau_t: float
    gamma_t: float = 1.0
    theta_t: float = 1.0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.tau_t <= 0 or self.eta_t <= 0 or self.gamma_t <= 0:
            raise ValueError("step parameters must be positive")
        if not np.isclose(self.gamma_t * self.theta_t, self.gamma_t):
            raise ValueError("constant schedules require theta_t = 1")

    def validate_against(self, constants: SmoothnessConstants) -> None:
        _, l_f = aggregate_constants(constants)
        floor = float(constants.L[0]) + l_f
        if not self.eta_t > floor:
            raise ValueError(
                f"eta_t = {self.eta_t} must strictly exceed L_0 + L_f = {floor}"
            )


def step_sizes(
    m_f: float,
    d_x: float,
    T: int,
    h_star: float,
    sigma0: float,
    sigma_nu_norm: float,
    sigma_xf: float,
) -> tuple[float, float]:
    """The (eta, tau) displays as pure formulas of the aggregate bounds:

        eta = max( sqrt(2 T (H*^2 + s0^2 + 48 ||s||^2)) / D_X,
                   6 max(2 M_f, 4 ||s||) / D_X )
        tau = max( sqrt(96 T) s_Xf, 2 D_X max(M_f, 4 ||s||) )
    """
    if d_x <= 0:
        raise ValueError("D_X must be positive")
    eta = max(
        np.sqrt(2.0 * T * (h_star**2 + sigma0**2 + 48.0 * sigma_nu_norm**2)) / d_x,
        6.0 * max(2.0 * m_f, 4.0 * sigma_nu_norm) / d_x,
    )
    tau = max(
        np.sqrt(96.0 * T) * sigma_xf,
        2.0 * d_x * max(m_f, 4.0 * sigma_nu_norm),
    )
    return float(eta), float(tau)


def schedule_from_bounds(
    constants: SmoothnessConstants,
    config: SmoothingConfig,
    n: int,
    d_x: float,
    T: int,
    dual_norm_bound: float = 1.0,
) -> StepSchedule:
    """Build the constant schedule by chaining the variance-bound formulas.

    ``dual_norm_bound`` stands in for the unknown optimal dual norm (the
    theory's H* term needs it); 1.0 is a pragmatic default. The resulting
    eta/tau are extremely conservative at desk scale, as the underlying
    variance bounds are worst-case over the whole domain; hand-tuned
    schedules usually run far faster.
    """
    m = constants.m
    m_f, l_f = aggregate_constants(constants)
    sigma0 = np.sqrt(
        gradient_variance_bound(
            config.nu0, constants.L[0], constants.M[0], constants.sigma[0], n, d_x
        )
    )
    sigma_nu = np.array(
        [
            np.sqrt(
                gradient_variance_bound(
                    config.nu[i - 1],
                    constants.L[i],
                    constants.M[i],
                    constants.sigma[i],
                    n,
                    d_x,
                )
            )
            for i in range(1, m + 1)
        ]
    )
    sigma_nu_norm = float(np.linalg.norm(sigma_nu)) if m else 0.0
    sigma_f_nu_sq = value_variance_bound(constants, config, n)
    sigma_xf = float(np.sqrt(sigma_f_nu_sq + d_x**2 * sigma_nu_norm**2))
    h_star = 0.5 * l_f * d_x * dual_norm_bound
    eta, tau = step_sizes(m_f, d_x, T, h_star, sigma0, sigma_nu_norm, sigma_xf)
    eta = max(eta, _SCHEDULE_FLOOR)
    tau = max(tau, _SCHEDULE_FLOOR)
    return StepSchedule(
        T=T, eta_t=float(constants.L[0]) + l_f + eta, tau_t=tau
    )


# ---------------------------------------------------------------------------
# stochastic linearization of the constraint block
# ---------------------------------------------------------------------------


@dataclass
class Linearization:
    """Affine model of the constraint block anchored at one iterate.

    ``base_values[i]`` is the shifted evaluation F_i(x + nu_i u_i, xi_i) and
    ``base_grads[:, i]`` the matching two-point gradient, both drawn from
    the dedicated "bar" streams so they stay independent of the prox
    gradients. ``evaluate`` extends the model affinely.
    """

    base_point: np.ndarray
    base_values: np.ndarray
    base_grads: np.ndarray

    def evaluate(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != self.base_point.shape:
            raise ValueError("dimension mismatch in linearization evaluation")
        if self.base_values.size == 0:
            return np.zeros(0)
        return self.base_values + self.base_grads.T @ (z - self.base_point)


def build_linearization(
    problem: ProblemSpec,
    x,
    config: SmoothingConfig,
    streams: StreamSet,
    strict: bool = True,
) -> Linearization:
    """Draw fresh bar-stream pairs at x and assemble the affine model.

    Two oracle calls per constraint; zero for unconstrained problems.
    """
    x = np.asarray(x, dtype=float)
    m = problem.constraint_count
    values = np.empty(m)
    grads = np.empty((problem.dimension, m))
    for i in range(1, m + 1):
        est = two_point_gradient(
            problem.oracles[i],
            x,
            config.radius(i),
            streams.xi_bar(i),
            streams.u_bar(i),
            strict=strict,
        )
        values[i - 1] = est.value_at_shift
        grads[:, i - 1] = est.g
    return Linearization(base_point=x.copy(), base_values=values, base_grads=grads)


def extrapolate(
    lin_curr: Linearization,
    lin_prev: Linearization,
    theta: float,
    eval_points: tuple[np.ndarray, np.ndarray],
) -> np.ndarray:
    """s = (1 + theta) * lin_curr(x_curr) - theta * lin_prev(x_prev)."""
    x_curr, x_prev = eval_points
    return (1.0 + theta) * lin_curr.evaluate(x_curr) - theta * lin_prev.evaluate(x_prev)


def dual_update(y, s, tau: float) -> np.ndarray:
    """Projected dual ascent: [y + s / tau]_+."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return project_nonneg(np.asarray(y, dtype=float) + np.asarray(s, dtype=float) / tau)


def estimate_lagrangian_gradient(
    problem: ProblemSpec,
    config: SmoothingConfig,
    x,
    y,
    streams: StreamSet,
    strict: bool = True,
) -> tuple[np.ndarray, float]:
    """Fresh two-point estimates of G_0 + sum_i y_i G_i at x.

    Returns the combined vector and the mean of the objective pair (an
    unbiased-up-to-smoothing estimate of f_0(x), kept for trace
    diagnostics). Costs 2 (m + 1) oracle calls from the plain streams.
    """
    est0 = two_point_gradient(
        problem.oracles[0], x, config.radius(0), streams.xi(0), streams.u(0), strict=strict
    )
    v = est0.g.copy()
    for i in range(1, problem.constraint_count + 1):
        est = two_point_gradient(
            problem.oracles[i],
            x,
            config.radius(i),
            streams.xi(i),
            streams.u(i),
            strict=strict,
        )
        v += y[i - 1] * est.g
    obj_estimate = 0.5 * (est0.value_at_shift + est0.value_at_base)
    return v, float(obj_estimate)


def primal_update(
    problem: ProblemSpec,
    config: SmoothingConfig,
    x,
    y,
    eta: float,
    streams: StreamSet,
    geom: EuclideanGeometry | None = None,
) -> np.ndarray:
    """One prox descent step on the stochastic Lagrangian gradient."""
    geom = geom or EuclideanGeometry()
    v, _ = estimate_lagrangian_gradient(problem, config, x, y, streams)
    return prox_step(geom, problem.domain, v, x, eta)


class RunningAverage:
    """Weighted running mean of the iterates."""

    def __init__(self, n: int):
        self._sum = np.zeros(n)
        self._weight = 0.0

    def add(self, x, gamma: float) -> None:
        if gamma <= 0:
            raise ValueError("averaging weights must be positive")
        self._sum += gamma * np.asarray(x, dtype=float)
        self._weight += gamma

    @property
    def weight(self) -> float:
        return self._weight

    def mean(self) -> np.ndarray:
        if self._weight == 0.0:
            raise ZeroDivisionError("no iterates accumulated")
        return self._sum / self._weight


# ---------------------------------------------------------------------------
# run records
# ---------------------------------------------------------------------------


@dataclass
class RunTrace:
    """Per-iteration record of a solver run (exactly T rows).

    ``objective`` and ``violation`` are noiseless diagnostics of the running
    averaged iterate when the oracles expose their underlying functions
    (benchmarks); otherwise they are NaN and only ``noisy_objective`` (the
    two-point pair mean at each pre-step iterate, flagged by
    ``has_noiseless = False``) is populated.
    """

    objective: np.ndarray
    violation: np.ndarray
    dual_norm: np.ndarray
    oracle_calls: np.ndarray
    noisy_objective: np.ndarray
    has_noiseless: bool
    x_bar: np.ndarray | None = None
    diverged_at: int | None = None
    initial_objective_estimate: float = float("nan")
    initial_constraint_estimates: np.ndarray = field(
        default_factory=lambda: np.zeros(0)
    )

    @property
    def iterations(self) -> int:
        return self.objective.size

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None


@dataclass
class SolverState:
    """Mutable loop state; owned exclusively by one run."""

    x_curr: np.ndarray
    x_prev: np.ndarray
    y: np.ndarray
    lin_curr: Linearization
    lin_prev: Linearization
    average: RunningAverage
    t: int = 0


# ---------------------------------------------------------------------------
# the full run
# ---------------------------------------------------------------------------


def solve(
    problem: ProblemSpec,
    schedule: StepSchedule,
    config: SmoothingConfig,
    seed_or_streams,
    x0=None,
) -> tuple[np.ndarray, RunTrace]:
    """Run T iterations and return the weighted averaged iterate and trace.

    The dual starts at zero. A non-finite iterate does not abort the run:
    the divergence is flagged, subsequent records carry NaN, and the oracle
    ledger still ends at exactly ``ledger_expected_calls(m, T)`` because the
    evaluation pattern never changes.
    """
    streams = (
        seed_or_streams
        if isinstance(seed_or_streams, StreamSet)
        else StreamSet(seed_or_streams)
    )
    schedule.validate_against(problem.constants)
    if config.m != problem.constraint_count:
        raise ValueError("smoothing config does not match the constraint count")
    domain = problem.domain
    n = problem.dimension
    m = problem.constraint_count
    T = schedule.T

    x0 = domain.center() if x0 is None else np.asarray(x0, dtype=float)
    if not domain.contains(x0):
        raise ValueError("start point lies outside the domain")
    calls_before = problem.ledger.total

    # Initialization sweep: one full gradient-estimation round at x0 for the
    # trace's pre-run diagnostics, then the first affine model, duplicated
    # into both slots so the first extrapolation reduces to its base values.
    _, obj0 = estimate_lagrangian_gradient(
        problem, config, x0, np.zeros(m), streams, strict=False
    )
    lin0 = build_linearization(problem, x0, config, streams, strict=False)

    state = SolverState(
        x_curr=x0.copy(),
        x_prev=x0.copy(),
        y=np.zeros(m),
        lin_curr=lin0,
        lin_prev=lin0,
        average=RunningAverage(n),
    )

    has_noiseless = problem.has_noiseless_reference()
    trace = RunTrace(
        objective=np.full(T, np.nan),
        violation=np.full(T, np.nan),
        dual_norm=np.empty(T),
        oracle_calls=np.empty(T, dtype=np.int64),
        noisy_objective=np.empty(T),
        has_noiseless=has_noiseless,
        initial_objective_estimate=obj0,
        initial_constraint_estimates=lin0.base_values.copy(),
    )

    f0 = problem.oracles[0].noiseless_fn
    constraint_fns = [o.noiseless_fn for o in problem.oracles[1:]]

    diverged_at = None
    theta, tau, eta, gamma = (
        schedule.theta_t,
        schedule.tau_t,
        schedule.eta_t,
        schedule.gamma_t,
    )
    ledger = problem.ledger
    # non-finite values are tolerated by design (divergence semantics), so
    # silence the corresponding warnings for the whole loop
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            s = extrapolate(
                state.lin_curr, state.lin_prev, theta, (state.x_curr, state.x_prev)
            )
            y_next = dual_update(state.y, s, tau)

            v, obj_est = estimate_lagrangian_gradient(
                problem, config, state.x_curr, y_next, streams, strict=False
            )
            # Euclidean prox closed form (prox_step minus its guards; the
            # center is the previous projection, so membership always holds)
            x_next = domain.project(state.x_curr - v / eta)

            # next round's affine model, anchored at the pre-step point
            lin_next = build_linearization(
                problem, state.x_curr, config, streams, strict=False
            )

            if diverged_at is None and not (
                np.isfinite(x_next).all() and np.isfinite(y_next).all()
            ):
                diverged_at = t

            state.average.add(x_next, gamma)
            trace.dual_norm[t] = np.linalg.norm(y_next)
            trace.oracle_calls[t] = ledger.total - calls_before
            trace.noisy_objective[t] = obj_est
            if has_noiseless:
                x_bar = state.average.mean()
                trace.objective[t] = f0(x_bar)
                if m:
                    fvals = np.array([fn(x_bar) for fn in constraint_fns])
                    trace.violation[t] = np.linalg.norm(np.maximum(fvals, 0.0))
                else:
                    trace.violation[t] = 0.0

            state.lin_prev = state.lin_curr
            state.lin_curr = lin_next
            state.x_prev = state.x_curr
            state.x_curr = x_next
            state.y = y_next
            state.t = t + 1

    x_bar = state.average.mean()
    trace.x_bar = x_bar
    trace.diverged_at = diverged_at

    spent = problem.ledger.total - calls_before
    expected = ledger_expected_calls(m, T)
    if spent != expected:
        raise AssertionError(f"ledger drift: {spent} calls vs expected {expected}")
    return x_bar, trace
