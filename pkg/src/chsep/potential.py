"""Singular double-well potentials F = beta_hat + pi_hat on (-1, 1).

The Flory-Huggins (logarithmic) potential is built in; other potentials are
supplied as callables.  Besides evaluation, this module carries the
inequalities used to control ``beta(phi)`` in L^1 when the mean of ``phi``
sits close to the pure phase -1, together with their explicit constants.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import xlogy

from .errors import DomainError, SearchFailed

FLORY_HUGGINS = "FloryHuggins"
CUSTOM = "Custom"

INEQUALITY_SLACK = 1e-12


@dataclass(frozen=True)
class CustomParts:
    """Callables defining a user potential.

    ``beta_hat`` must be convex, nonnegative, vanish at 0 and be continuous on
    [-1, 1]; ``beta`` is its derivative and must blow up at +-1.  ``pi`` has to
    be Lipschitz with constant ``lipschitz``.  None of this is verified.
    """

    beta: Callable
    beta_prime: Callable
    beta_hat: Callable
    pi: Callable
    pi_hat: Callable
    pi_prime: Callable
    lipschitz: float


@dataclass(frozen=True)
class SingularPotential:
    theta: float = 1.0
    theta0: float = 2.0
    kind: str = FLORY_HUGGINS
    parts: CustomParts | None = None

    def __post_init__(self):
        if self.kind == FLORY_HUGGINS:
            if not 0.0 < self.theta < self.theta0:
                raise DomainError(
                    f"Flory-Huggins needs 0 < theta < theta0, got {self.theta}, {self.theta0}"
                )
        elif self.kind == CUSTOM:
            if self.parts is None:
                raise ValueError("custom potential requires CustomParts")
        else:
            raise ValueError(f"unknown potential kind {self.kind!r}")

    @classmethod
    def custom(cls, parts: CustomParts) -> "SingularPotential":
        return cls(kind=CUSTOM, parts=parts)

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant L0 of pi."""
        if self.kind == FLORY_HUGGINS:
            return self.theta0
        return self.parts.lipschitz

    # Unchecked vectorized evaluation; callers guarantee the domain.
    def beta(self, r):
        if self.kind == FLORY_HUGGINS:
            return self.theta * np.arctanh(r)
        return self.parts.beta(r)

    def beta_prime(self, r):
        if self.kind == FLORY_HUGGINS:
            return self.theta / (1.0 - np.square(r))
        return self.parts.beta_prime(r)

    def beta_hat(self, r):
        if self.kind == FLORY_HUGGINS:
            return 0.5 * self.theta * (xlogy(1.0 + r, 1.0 + r) + xlogy(1.0 - r, 1.0 - r))
        return self.parts.beta_hat(r)

    def pi(self, r):
        if self.kind == FLORY_HUGGINS:
            return -self.theta0 * np.asarray(r, dtype=float)
        return self.parts.pi(r)

    def pi_hat(self, r):
        if self.kind == FLORY_HUGGINS:
            return -0.5 * self.theta0 * np.square(r)
        return self.parts.pi_hat(r)

    def pi_prime(self, r):
        if self.kind == FLORY_HUGGINS:
            return np.full_like(np.asarray(r, dtype=float), -self.theta0)
        return self.parts.pi_prime(r)

    def F(self, r):
        return self.beta_hat(r) + self.pi_hat(r)

    def F_prime(self, r):
        return self.beta(r) + self.pi(r)

    def F_second(self, r):
        return self.beta_prime(r) + self.pi_prime(r)


def _as_output(value, like):
    return float(value) if np.ndim(like) == 0 else value


def _open_interval(r, name="r"):
    arr = np.asarray(r, dtype=float)
    if not np.all(np.abs(arr) < 1.0):
        raise DomainError(f"{name} must lie in (-1, 1)")
    return arr


def eval_beta(pot: SingularPotential, r):
    return _as_output(pot.beta(_open_interval(r)), r)


def eval_F(pot: SingularPotential, r):
    """F(r); defined on the closed interval [-1, 1] by continuity."""
    arr = np.asarray(r, dtype=float)
    if not np.all(np.abs(arr) <= 1.0):
        raise DomainError("F is defined on [-1, 1] only")
    return _as_output(pot.F(arr), r)


def eval_F_prime(pot: SingularPotential, r):
    return _as_output(pot.F_prime(_open_interval(r)), r)


def eval_F_second(pot: SingularPotential, r):
    return _as_output(pot.F_second(_open_interval(r)), r)


def regularized_beta(pot: SingularPotential, r, clip: float = 1e-9):
    """beta on |r| <= 1 - clip, continued linearly (C^1) outside."""
    if not 0.0 < clip < 1.0:
        raise DomainError("clip must lie in (0, 1)")
    arr = np.asarray(r, dtype=float)
    edge = 1.0 - clip
    inner = np.clip(arr, -edge, edge)
    out = pot.beta(inner) + pot.beta_prime(inner) * (arr - inner)
    return _as_output(out, r)


def regularized_beta_prime(pot: SingularPotential, r, clip: float = 1e-9):
    arr = np.asarray(r, dtype=float)
    edge = 1.0 - clip
    return _as_output(pot.beta_prime(np.clip(arr, -edge, edge)), r)


@dataclass(frozen=True)
class SharpConstants:
    delta: float
    c_beta: float
    C_beta: float


def sharp_constants(delta: float) -> SharpConstants:
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    return SharpConstants(delta, min(0.5, (1.0 - delta) / delta), 1.0 / delta)


class InequalityCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def mz_sharp_sides(pot, r, r0, c_beta, C_beta):
    """Both sides of the sharp inequality, vectorized, without domain checks.

    lhs = c_beta (r0 + 1) |beta(r)|
    rhs = beta(r) (r - r0) + [(r + 1) + C_beta (r0 + 1)] |beta(-1 + (r0 + 1)/2)|
    """
    r = np.asarray(r, dtype=float)
    r0 = np.asarray(r0, dtype=float)
    b = pot.beta(r)
    b_half = np.abs(pot.beta(-1.0 + 0.5 * (r0 + 1.0)))
    lhs = c_beta * (r0 + 1.0) * np.abs(b)
    rhs = b * (r - r0) + ((r + 1.0) + C_beta * (r0 + 1.0)) * b_half
    return lhs, rhs


def _check_sharp_domain(r, r0, delta):
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    _open_interval(r)
    r0 = np.asarray(r0, dtype=float)
    if not np.all((r0 > -1.0) & (r0 < -1.0 + delta)):
        raise DomainError("r0 must lie in (-1, -1 + delta)")


def check_mz_sharp(pot: SingularPotential, r, r0, delta: float) -> InequalityCheck:
    _check_sharp_domain(r, r0, delta)
    consts = sharp_constants(delta)
    lhs, rhs = mz_sharp_sides(pot, r, r0, consts.c_beta, consts.C_beta)
    holds = lhs <= rhs + INEQUALITY_SLACK
    if np.ndim(lhs) == 0:
        return InequalityCheck(float(lhs), float(rhs), bool(holds))
    return InequalityCheck(lhs, rhs, holds)


def sharp_case_bounds(pot: SingularPotential, r, r0, delta: float):
    """Case index (1..4) and the case-wise lower bound for beta(r)(r - r0).

    The split points are r_lo = -1 + (r0 + 1)/2 and r_hi = -1 + (r0 + 1)/delta;
    each case bounds beta(r)(r - r0) from below by a different expression whose
    minimum over the four cases yields the sharp inequality.
    """
    _check_sharp_domain(r, r0, delta)
    r = np.asarray(r, dtype=float)
    r0 = np.asarray(r0, dtype=float)
    s = r0 + 1.0
    r_lo = -1.0 + 0.5 * s
    r_hi = -1.0 + s / delta
    abs_b = np.abs(pot.beta(r))
    abs_b_lo = np.abs(pot.beta(r_lo))
    case = np.select(
        [r < r_lo, r <= r_hi, r <= 0.0], [1, 2, 3], default=4
    )
    bound = np.select(
        [case == 1, case == 2, case == 3],
        [
            0.5 * s * abs_b,
            0.5 * s * abs_b - s * abs_b_lo / delta,
            0.5 * s * abs_b - (r + 1.0) * abs_b_lo,
        ],
        default=(1.0 - delta) / delta * s * abs_b,
    )
    return case, bound


def check_mz_sharp_integral(pot: SingularPotential, phi, cell_area: float, delta: float):
    """Integrated form of the sharp inequality for a discrete field.

    Integrating the pointwise bound with r = phi(x), r0 = mean(phi) gives

        c_beta (m + 1) int |beta(phi)| <= int beta(phi)(phi - m)
                                          + (1 + C_beta) |Omega| (m + 1) |beta(-1 + (m + 1)/2)|

    where ``int`` is the cell-area weighted sum.
    """
    phi = _open_interval(phi, "phi")
    m = float(np.mean(phi))
    if not -1.0 < m < -1.0 + delta:
        raise DomainError("mean of phi must lie in (-1, -1 + delta)")
    consts = sharp_constants(delta)
    area = cell_area * phi.size
    b = pot.beta(phi)
    lhs = consts.c_beta * (m + 1.0) * cell_area * np.sum(np.abs(b))
    rhs = cell_area * np.sum(b * (phi - m)) + (1.0 + consts.C_beta) * area * (m + 1.0) * abs(
        float(pot.beta(-1.0 + 0.5 * (m + 1.0)))
    )
    return InequalityCheck(float(lhs), float(rhs), bool(lhs <= rhs + INEQUALITY_SLACK * max(1.0, abs(rhs))))


def discover_mz_std_constants(pot: SingularPotential, r_star: float, r_upper: float,
                              grid_n: int, max_exponent: int = 40):
    """Lattice constants (c_*, C_*) certifying c_*|beta(r)| <= beta(r)(r - r0) + C_*.

    The r-grid holds ``grid_n`` cell midpoints of (-1, 1); the r0-grid spans
    [r_star, r_upper] including both endpoints.  Since the defect is affine in
    r0, its maximum over the r0-grid sits at an endpoint, so the tensor grid
    is scanned exactly in O(grid_n).  The pair certifies the grid, not the
    continuum.
    """
    if not -1.0 < r_star <= r_upper < 1.0:
        raise DomainError("need -1 < r_star <= r_upper < 1")
    if grid_n < 1:
        raise DomainError("grid_n must be positive")
    r = -1.0 + (np.arange(grid_n) + 0.5) * (2.0 / grid_n)
    b = pot.beta(r)
    worst_r0 = np.where(b > 0, r_upper, r_star)
    drift = b * (r - worst_r0)  # min over r0 of beta(r)(r - r0)
    abs_b = np.abs(b)
    for k in range(max_exponent + 1):
        c = 2.0 ** -k
        need = float(np.max(c * abs_b - drift))
        for j in range(-max_exponent, max_exponent + 1):
            C = 2.0 ** j
            if need <= C:
                return c, C
    raise SearchFailed("no lattice pair certifies the grid")


def check_A4_margin(pot: SingularPotential, a_star: float) -> float:
    """inf over (-1, 1) of a_* + F''(r); positive values are admissible C0."""
    if pot.kind == FLORY_HUGGINS:
        return a_star + pot.theta - pot.theta0
    r = np.linspace(-1.0, 1.0, 20001)[1:-1]
    return float(a_star + np.min(pot.F_second(r)))
