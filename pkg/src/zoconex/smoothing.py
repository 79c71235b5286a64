"""Gaussian-smoothing two-point gradient estimation and its error bounds.

The estimator for the smoothed function f_nu(x) = E[f(x + nu * u)],
u ~ N(0, I_n), is

    G = (F(x + nu * u, xi) - F(x, xi)) / nu * u,

an unbiased estimate of grad f_nu(x). The module also provides the radius
selection rule that balances smoothing bias against estimator variance for
a given iteration budget, and closed-form variance/bias bounds usable as
independent test oracles against Monte Carlo estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import (
    EstimatorError,
    SmoothnessConstants,
    StochasticOracle,
    draw_noisy_pair,
)

# Radii below this are clamped: the quotient (F(x+nu*u) - F(x)) / nu loses
# all significance to cancellation well before 1e-8 at float64.
NU_FLOOR = 1e-8


@dataclass(frozen=True)
class SmoothingConfig:
    """Smoothing radii: nu0 for the objective, nu[i-1] for constraint i."""

    nu0: float
    nu: np.ndarray

    def __post_init__(self):
        nu = np.atleast_1d(np.asarray(self.nu, dtype=float))
        if nu.size == 0:
            nu = nu.reshape(0)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "nu0", float(self.nu0))
        radii = np.concatenate(([self.nu0], nu))
        if not np.all(np.isfinite(radii)) or np.any(radii <= 0):
            raise ValueError("smoothing radii must be strictly positive and finite")

    @property
    def m(self) -> int:
        return self.nu.size

    def radius(self, i: int) -> float:
        """Radius for function index i (0 = objective)."""
        return self.nu0 if i == 0 else float(self.nu[i - 1])

    @classmethod
    def uniform(cls, nu: float, m: int) -> "SmoothingConfig":
        return cls(nu0=nu, nu=np.full(m, float(nu)))


@dataclass
class GradientEstimate:
    """One two-point estimate: g = (value_at_shift - value_at_base)/nu * u."""

    g: np.ndarray
    direction: np.ndarray
    value_at_shift: float
    value_at_base: float


def sample_direction(n: int, rng: np.random.Generator) -> np.ndarray:
    """Standard normal direction in R^n from the given stream."""
    if n < 1:
        raise ValueError("dimension must be positive")
    return rng.standard_normal(n)


def two_point_gradient(
    oracle: StochasticOracle,
    x,
    nu: float,
    xi_rng: np.random.Generator,
    u_rng: np.random.Generator,
    strict: bool = True,
) -> GradientEstimate:
    """Draw u, evaluate the shared-draw pair at (x + nu*u, x), form G.

    Charges two oracle calls. With ``strict`` (the default), a non-finite
    oracle value raises :class:`EstimatorError` carrying the offending
    point; solvers that must keep running through divergence pass
    ``strict=False`` and let non-finite values propagate, which keeps the
    stream consumption and the ledger identical on both paths.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    x = np.asarray(x, dtype=float)
    u = sample_direction(x.size, u_rng)
    x_shifted = x + nu * u
    val_shift, val_base = draw_noisy_pair(oracle, x, x_shifted, xi_rng)
    if strict and not (np.isfinite(val_shift) and np.isfinite(val_base)):
        bad = x_shifted if not np.isfinite(val_shift) else x
        raise EstimatorError(
            f"oracle returned a non-finite value ({val_shift}, {val_base})",
            point=bad,
        )
    g = ((val_shift - val_base) / nu) * u
    return GradientEstimate(g=g, direction=u, value_at_shift=val_shift, value_at_base=val_base)


# ---------------------------------------------------------------------------
# radius selection
# ---------------------------------------------------------------------------


def select_smoothing_parameters(
    constants: SmoothnessConstants, n: int, m: int, T: int, m_x: float
) -> SmoothingConfig:
    """Budget-aware smoothing radii.

    The objective radius takes the smallest of three terms driven by the
    objective smoothness L_0 and the horizon T; each constraint radius takes
    the smallest of five terms that additionally control the constraint
    count m and the domain norm bound M_X. All radii are clamped below at
    ``NU_FLOOR`` for numerical safety (never active at sensible scales).
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if constants.m != m:
        raise ValueError("constants do not match the constraint count")
    l0 = float(constants.L[0])
    nu0 = min(
        1.0 / np.sqrt(2.0 * l0 * n * np.sqrt(T)),
        2.0 / (n + 3.0) ** 1.5,
        1.0 / (l0 * (n + 6.0) ** 1.5),
    )
    nu = np.empty(m)
    for i in range(1, m + 1):
        li = float(constants.L[i])
        mi = float(constants.M[i])
        nu[i - 1] = min(
            2.0 / (n + 3.0) ** 1.5,
            1.0 / (2.0 * mi * np.sqrt((n + 2.0) * m)),
            1.0 / np.sqrt(li * n * np.sqrt(m)),
            1.0 / np.sqrt(2.0 * li * n * m_x * np.sqrt(T * m)),
            1.0 / (li * (n + 6.0) ** 1.5 * np.sqrt(m)),
        )
    return SmoothingConfig(nu0=max(nu0, NU_FLOOR), nu=np.maximum(nu, NU_FLOOR))


# ---------------------------------------------------------------------------
# closed-form error bounds (diagnostics and test oracles)
# ---------------------------------------------------------------------------


def gradient_variance_bound(
    nu: float, l_i: float, m_i: float, sigma_i: float, n: int, d_x: float
) -> float:
    """Bound on E || G - grad f_nu(x) ||^2 for one function.

    Uses B = (nu/2) L (n+3)^{3/2} + L D_X + M, a uniform bound on the
    smoothed gradient norm over the domain:

        nu^2 L^2 (n+6)^3 + 10 (n+4) (sigma^2 + B^2).
    """
    b_tilde = 0.5 * nu * l_i * (n + 3.0) ** 1.5 + l_i * d_x + m_i
    return nu**2 * l_i**2 * (n + 6.0) ** 3 + 10.0 * (n + 4.0) * (sigma_i**2 + b_tilde**2)


def value_variance_bound(constants: SmoothnessConstants, config: SmoothingConfig, n: int) -> float:
    """Bound on E || F_nu(x, xi, u) - f_nu(x) ||^2 over the constraint block:

        sum_i [ 4 (n+2) M_i^2 nu_i^2 + L_i^2 nu_i^4 n^2 ] + 2 sum_i sigma_f_i^2.

    Sums run over constraints only; with m = 0 the bound is zero.
    """
    m = constants.m
    if config.m != m:
        raise ValueError("config does not match the constraint count")
    if m == 0:
        return 0.0
    nu = config.nu
    mi = constants.M[1:]
    li = constants.L[1:]
    sf = constants.sigma_f[1:]
    per_constraint = 4.0 * (n + 2.0) * mi**2 * nu**2 + li**2 * nu**4 * n**2
    return float(np.sum(per_constraint) + 2.0 * np.sum(sf**2))


def smoothing_bias_bound(l_const: float, nu: float, n: int) -> float:
    """| f_nu(x) - f(x) | <= nu^2 L n / 2 for L-smooth f."""
    return 0.5 * nu**2 * l_const * n
