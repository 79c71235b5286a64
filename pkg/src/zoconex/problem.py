"""Constrained stochastic problem abstraction and oracle-call accounting.

A problem is ``min f_0(x) over x in X subject to f_i(x) <= 0`` where every
f_i is reachable only through a noisy zeroth-order oracle. The oracle
contract is two-point access: for one noise realization the stochastic
function can be evaluated at two points. Every evaluation is charged to an
:class:`OracleLedger` so solver runs can be audited call-for-call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class EstimatorError(RuntimeError):
    """A zeroth-order estimate hit a non-finite oracle value."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


# ---------------------------------------------------------------------------
# noise models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Additive zero-mean observation noise.

    kind:
        ``"none"``, ``"gaussian"`` (std ``sigma``), or ``"student_t"``
        (``dof`` degrees of freedom, ``dof > 2``, scaled by ``scale``).
    common:
        When True, the two evaluations of a shared-draw pair receive the
        *same* additive draw, so noise cancels in differences. The default
        uses an independent sub-draw per evaluation point, which keeps the
        pair unbiased but lets noise survive in differences.
    """

    kind: str = "none"
    sigma: float = 0.0
    dof: float = 5.0
    scale: float = 1.0
    common: bool = False

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "student_t"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.kind == "student_t" and self.dof <= 2:
            raise ValueError("student_t needs dof > 2 for finite variance")

    def draw(self, rng: np.random.Generator) -> float:
        if self.kind == "none":
            return 0.0
        if self.kind == "gaussian":
            return self.sigma * rng.standard_normal()
        return self.scale * rng.standard_t(self.dof)

    def draw_pair(self, rng: np.random.Generator) -> tuple[float, float]:
        """Noise for the (shifted, base) evaluations of one shared draw."""
        if self.kind == "none":
            return 0.0, 0.0
        if self.common:
            eps = self.draw(rng)
            return eps, eps
        return self.draw(rng), self.draw(rng)

    def value_std_bound(self) -> float:
        """Upper bound on the std of ``F(x, xi) - f(x)``; never exactly zero
        so it can serve as a strictly positive constant."""
        if self.kind == "gaussian":
            return max(self.sigma, 1e-12)
        if self.kind == "student_t":
            return max(self.scale * math.sqrt(self.dof / (self.dof - 2.0)), 1e-12)
        return 1e-12


# ---------------------------------------------------------------------------
# oracles and the call ledger
# ---------------------------------------------------------------------------


class OracleLedger:
    """Monotone per-function call counters."""

    def __init__(self, n_functions: int):
        self.counts = [0] * n_functions

    @property
    def total(self) -> int:
        return sum(self.counts)

    def charge(self, index: int, calls: int) -> None:
        if calls < 0:
            raise ValueError("counters never decrease")
        self.counts[index] += calls

    def snapshot(self) -> list[int]:
        return list(self.counts)


class StochasticOracle:
    """Zeroth-order access to one function.

    ``noiseless_fn`` is the underlying f (kept for diagnostics and
    benchmarks; a true black box would hide it behind this same interface),
    ``noiseless_grad`` is optional and used only by KKT diagnostics.
    """

    __slots__ = ("noiseless_fn", "noise_model", "noiseless_grad", "ledger", "index")

    def __init__(self, noiseless_fn, noise_model: NoiseModel, noiseless_grad=None):
        self.noiseless_fn = noiseless_fn
        self.noise_model = noise_model
        self.noiseless_grad = noiseless_grad
        self.ledger: OracleLedger | None = None
        self.index = 0

    def attach(self, ledger: OracleLedger, index: int) -> None:
        self.ledger = ledger
        self.index = index

    def detached_copy(self) -> "StochasticOracle":
        return StochasticOracle(self.noiseless_fn, self.noise_model, self.noiseless_grad)


def draw_noisy_pair(oracle: StochasticOracle, x, x_shifted, rng) -> tuple[float, float]:
    """Evaluate ``(F(x_shifted, xi), F(x, xi))`` under one shared noise draw.

    Charges the ledger with two calls. The additive noise is realized per
    the oracle's :class:`NoiseModel` coupling convention.
    """
    x = np.asarray(x, dtype=float)
    x_shifted = np.asarray(x_shifted, dtype=float)
    if x.shape != x_shifted.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x_shifted.shape}")
    eps_shift, eps_base = oracle.noise_model.draw_pair(rng)
    val_shift = oracle.noiseless_fn(x_shifted) + eps_shift
    val_base = oracle.noiseless_fn(x) + eps_base
    if oracle.ledger is not None:
        oracle.ledger.charge(oracle.index, 2)
    return val_shift, val_base


# ---------------------------------------------------------------------------
# smoothness constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothnessConstants:
    """Per-function constants, index 0 = objective, 1..m = constraints.

    L: gradient-Lipschitz constants, M: value-Lipschitz constants,
    sigma: gradient-noise bounds, sigma_f: value-noise bounds. All strictly
    positive (upper bounds are fine; exactness is not required).
    """

    L: np.ndarray
    M: np.ndarray
    sigma: np.ndarray
    sigma_f: np.ndarray

    def __post_init__(self):
        for name in ("L", "M", "sigma", "sigma_f"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be a 1-d array")
            if not np.all(arr > 0):
                raise ValueError(f"{name} entries must be strictly positive")
        sizes = {self.L.size, self.M.size, self.sigma.size, self.sigma_f.size}
        if len(sizes) != 1:
            raise ValueError("constant lists must share one length (m+1)")

    @property
    def m(self) -> int:
        return self.L.size - 1


def aggregate_constants(constants: SmoothnessConstants) -> tuple[float, float]:
    """Aggregate constraint constants: ``M_f = sqrt(sum M_i^2)`` and
    ``L_f = sqrt(sum L_i^2)`` over i = 1..m (the objective is excluded)."""
    if constants.m == 0:
        return 0.0, 0.0
    m_f = float(np.sqrt(np.sum(constants.M[1:] ** 2)))
    l_f = float(np.sqrt(np.sum(constants.L[1:] ** 2)))
    return m_f, l_f


# ---------------------------------------------------------------------------
# the problem container
# ---------------------------------------------------------------------------


@dataclass
class ProblemSpec:
    """One constrained stochastic problem instance.

    ``oracles`` has exactly m+1 entries; entry 0 is the objective. The
    container owns the call ledger; constructing it (or cloning) wires every
    oracle to that ledger. A solver run should own its clone exclusively.
    """

    dimension: int
    constraint_count: int
    oracles: list[StochasticOracle]
    domain: object
    constants: SmoothnessConstants
    ledger: OracleLedger = field(init=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.constraint_count < 0:
            raise ValueError("constraint count must be non-negative")
        if len(self.oracles) != self.constraint_count + 1:
            raise ValueError(
                f"need {self.constraint_count + 1} oracles, got {len(self.oracles)}"
            )
        if self.constants.m != self.constraint_count:
            raise ValueError("constants length must be m+1")
        self.ledger = OracleLedger(len(self.oracles))
        for i, oracle in enumerate(self.oracles):
            oracle.attach(self.ledger, i)

    @property
    def objective(self) -> StochasticOracle:
        return self.oracles[0]

    @property
    def constraint_oracles(self) -> list[StochasticOracle]:
        return self.oracles[1:]

    def has_noiseless_reference(self) -> bool:
        return all(o.noiseless_fn is not None for o in self.oracles)

    def noiseless_values(self, x) -> np.ndarray:
        """Constraint vector f(x) from the noiseless references."""
        return np.array([o.noiseless_fn(x) for o in self.oracles[1:]], dtype=float)

    def clone(self) -> "ProblemSpec":
        """Independent copy with a fresh ledger (for concurrent trials)."""
        return ProblemSpec(
            dimension=self.dimension,
            constraint_count=self.constraint_count,
            oracles=[o.detached_copy() for o in self.oracles],
            domain=self.domain,
            constants=self.constants,
        )

    def with_constants(self, constants: SmoothnessConstants) -> "ProblemSpec":
        return ProblemSpec(
            dimension=self.dimension,
            constraint_count=self.constraint_count,
            oracles=[o.detached_copy() for o in self.oracles],
            domain=self.domain,
            constants=constants,
        )


def ledger_expected_calls(m: int, T: int) -> int:
    """Exact oracle-call count of a solver run: ``(2 + 4m) * (T + 1)``.

    Each iteration spends 2 calls on the objective gradient pair and, per
    constraint, 2 on the linearization pair plus 2 on the prox gradient
    pair; the initialization round costs one more full sweep.
    """
    if m < 0 or T < 1:
        raise ValueError("need m >= 0 and T >= 1")
    return (2 + 4 * m) * (T + 1)
