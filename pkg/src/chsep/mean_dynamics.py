"""Evolution of the spatial mean y(t) = (phi(t))_Omega and its confinement bounds.

Integrating the phase equation over the torus gives y' = (S)_Omega.  For an
admissible source this pins y between

    -1 + c0 (1 - e^{-m_bar t})   and   -1 + (2 - c0)(1 - e^{-m_bar t}) + lam e^{-m_bar t},

which in particular keeps y away from both pure phases for t > 0.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .reaction import ReactionSpec


@dataclass(frozen=True)
class MeanBounds:
    c0: float
    m_bar: float
    lam: float
    t_end: float

    def __post_init__(self):
        if not 0.0 < self.c0 <= 1.0:
            raise ValueError(f"c0 must lie in (0, 1], got {self.c0}")
        if self.m_bar <= 0 or self.t_end <= 0:
            raise ValueError("m_bar and t_end must be positive")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError("lambda must lie in [0, 1)")

    @classmethod
    def from_reaction(cls, spec: ReactionSpec, lam: float, t_end: float) -> "MeanBounds":
        return cls(spec.c0, spec.m_bar, lam, t_end)

    @property
    def lambda0(self) -> float:
        return 0.5 * self.c0

    @property
    def c1(self) -> float:
        """Slope witness: -1 + 2 c1 t stays below the lower bound on [0, t_end]."""
        return self.c0 * (1.0 - math.exp(-self.m_bar * self.t_end)) / (2.0 * self.t_end)

    @property
    def c2(self) -> float:
        return 2.0 - self.c0

    def linear_minorant(self, t):
        return -1.0 + 2.0 * self.c1 * np.asarray(t, dtype=float)

    def cap(self) -> float:
        return 1.0 - self.lambda0


def _decay(b: MeanBounds, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    return -np.expm1(-b.m_bar * t)


def lower_bound(b: MeanBounds, t):
    out = -1.0 + b.c0 * _decay(b, t)
    return float(out) if np.ndim(t) == 0 else out


def upper_bound(b: MeanBounds, t):
    grow = _decay(b, t)
    out = -1.0 + b.c2 * grow + b.lam * (1.0 - grow)
    return float(out) if np.ndim(t) == 0 else out


def exact_oono_mean(m: float, c: float, lam: float, t):
    """Mean of the Oono flow from -1 + lam; the mean ODE closes: y' = -m (y - c)."""
    t = np.asarray(t, dtype=float)
    out = c + (-1.0 + lam - c) * np.exp(-m * t)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Violation:
    step: int
    t: float
    mass: float
    lower: float
    upper: float


@dataclass
class MeanReport:
    times: np.ndarray
    mass: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    flags: np.ndarray
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "mass", "lower", "upper", "violation_flag"])
            for row in zip(self.times, self.mass, self.lower, self.upper, self.flags):
                w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])),
                            repr(float(row[3])), int(row[4])])


def verify_mean_confinement(trajectory, b: MeanBounds, slack: float) -> MeanReport:
    """Flag every recorded step whose mass leaves [lower - slack, min(upper, 1 - lambda0) + slack].

    ``trajectory`` needs ``times`` and ``mass`` sequences (a Trajectory works).
    """
    times = np.asarray(trajectory.times, dtype=float)
    mass = np.asarray(trajectory.mass, dtype=float)
    lo = np.atleast_1d(lower_bound(b, times))
    hi = np.minimum(np.atleast_1d(upper_bound(b, times)), b.cap())
    flags = (mass < lo - slack) | (mass > hi + slack)
    violations = [
        Violation(int(i), float(times[i]), float(mass[i]), float(lo[i]), float(hi[i]))
        for i in np.flatnonzero(flags)
    ]
    return MeanReport(times, mass, lo, hi, flags, violations)
