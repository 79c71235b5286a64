"""Prox geometry: Bregman divergences, compact domains, cone distances.

Only the Euclidean distance-generating function is shipped (omega =
0.5 * ||x||^2, so W(y, x) = 0.5 * ||y - x||^2 and the prox step is a
Euclidean projection), together with box and ball domains whose projections
and diameters have closed forms. The interfaces admit other geometries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MEMBERSHIP_TOL = 1e-9


class EuclideanGeometry:
    """omega(x) = 0.5 ||x||^2; 1-strongly convex and 1-smooth (L_omega = 1)."""

    l_omega = 1.0

    @staticmethod
    def omega(x) -> float:
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ x)

    @staticmethod
    def grad_omega(x) -> np.ndarray:
        return np.asarray(x, dtype=float)


def bregman_divergence(geom, y, x) -> float:
    """W(y, x) = omega(y) - omega(x) - <grad omega(x), y - x>."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape != x.shape:
        raise ValueError(f"dimension mismatch: {y.shape} vs {x.shape}")
    if isinstance(geom, EuclideanGeometry):
        d = y - x
        return 0.5 * float(d @ d)
    return float(geom.omega(y) - geom.omega(x) - geom.grad_omega(x) @ (y - x))


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lower, upper]; must be non-empty and bounded."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower/upper must be 1-d arrays of equal length")
        if np.any(lower > upper):
            raise ValueError("empty box")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("box must be bounded")

    @property
    def dimension(self) -> int:
        return self.lower.size

    def project(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(
            np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol)
        )

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def sample(self, rng) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)


@dataclass(frozen=True)
class Ball:
    """Euclidean ball of given center and radius."""

    center_point: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center_point, dtype=float))
        object.__setattr__(self, "center_point", c)
        if self.radius < 0 or not np.isfinite(self.radius):
            raise ValueError("radius must be finite and non-negative")

    @property
    def dimension(self) -> int:
        return self.center_point.size

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = x - self.center_point
        norm = float(np.linalg.norm(d))
        if norm <= self.radius:
            return x.copy()
        return self.center_point + d * (self.radius / norm)

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return float(np.linalg.norm(x - self.center_point)) <= self.radius + tol

    def center(self) -> np.ndarray:
        return self.center_point.copy()

    def sample(self, rng) -> np.ndarray:
        # uniform direction, radius via the usual r^(1/n) trick
        n = self.dimension
        d = rng.standard_normal(n)
        norm = np.linalg.norm(d)
        if norm == 0.0:
            return self.center()
        r = self.radius * rng.uniform() ** (1.0 / n)
        return self.center_point + d * (r / norm)


# ---------------------------------------------------------------------------
# prox operator and set quantities
# ---------------------------------------------------------------------------


def prox_step(geom, domain, v, x_tilde, eta: float) -> np.ndarray:
    """argmin over x in X of <v, x> + eta * W(x, x_tilde).

    Exact for the Euclidean geometry on boxes and balls: the minimizer is
    the projection of ``x_tilde - v / eta``.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    x_tilde = np.asarray(x_tilde, dtype=float)
    if not domain.contains(x_tilde, MEMBERSHIP_TOL):
        raise ValueError("prox center must lie in the domain")
    if not isinstance(geom, EuclideanGeometry):
        raise NotImplementedError("only the Euclidean geometry is shipped")
    v = np.asarray(v, dtype=float)
    with np.errstate(invalid="ignore"):
        return domain.project(x_tilde - v / eta)


def domain_diameter(geom, domain) -> tuple[float, float]:
    """(D_X, M_X): D_X = sup sqrt(W(x, y)) over the domain, M_X = sup ||x||.

    Euclidean closed forms: D_X = (max pairwise distance) / sqrt(2).
    """
    if not isinstance(geom, EuclideanGeometry):
        raise NotImplementedError("only the Euclidean geometry is shipped")
    if isinstance(domain, Box):
        span = domain.upper - domain.lower
        max_dist = float(np.linalg.norm(span))
        m_x = float(np.linalg.norm(np.maximum(np.abs(domain.lower), np.abs(domain.upper))))
    elif isinstance(domain, Ball):
        max_dist = 2.0 * domain.radius
        m_x = float(np.linalg.norm(domain.center_point)) + domain.radius
    else:
        raise NotImplementedError(f"unsupported domain {type(domain).__name__}")
    d_x = max_dist / np.sqrt(2.0)
    return d_x, m_x


def project_nonneg(y) -> np.ndarray:
    """Coordinate-wise [y]_+ = max(y, 0)."""
    return np.maximum(np.asarray(y, dtype=float), 0.0)


def normal_cone_distance(domain, x, g, tol: float = MEMBERSHIP_TOL) -> float:
    """Euclidean distance from ``g`` to the normal cone of the domain at x.

    Box: a coordinate at its upper bound absorbs a positive component of g,
    one at its lower bound absorbs a negative component, interior
    coordinates contribute |g_j| unchanged. Ball: a boundary point absorbs
    the outward-radial component. Callers checking stationarity of a
    minimization pass the *negated* Lagrangian gradient, for which a zero
    distance is exactly the first-order optimality condition.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    if not domain.contains(x, tol):
        raise ValueError("point lies outside the domain")
    if isinstance(domain, Box):
        residual = g.astype(float).copy()
        at_upper = x >= domain.upper - tol
        at_lower = x <= domain.lower + tol
        residual[at_upper] = np.minimum(residual[at_upper], 0.0)
        residual[at_lower & ~at_upper] = np.maximum(
            residual[at_lower & ~at_upper], 0.0
        )
        # degenerate coordinates (lower == upper) absorb everything
        residual[at_lower & at_upper] = 0.0
        return float(np.linalg.norm(residual))
    if isinstance(domain, Ball):
        d = x - domain.center_point
        norm = float(np.linalg.norm(d))
        if norm < domain.radius - tol or domain.radius == 0.0:
            if domain.radius == 0.0:
                return 0.0  # the whole space is normal at a point domain
            return float(np.linalg.norm(g))
        outward = d / norm
        radial = float(g @ outward)
        if radial <= 0.0:
            return float(np.linalg.norm(g))
        return float(np.linalg.norm(g - radial * outward))
    raise NotImplementedError(f"unsupported domain {type(domain).__name__}")
