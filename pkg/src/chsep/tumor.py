"""Tumor growth: Cahn-Hilliard phase field coupled to a diffusing nutrient.

    d_t phi - Delta(A phi + F'(phi) - chi n) = -m phi + (n - delta_n)_+ h(phi)
    d_t n - Delta n = B (n_B - n) - C h(phi) n

with A = -Delta (local) or A = a - K* (nonlocal).  Each step advances the
nutrient first and then the phase with the fresh nutrient, so both the
chemotactic potential g = -chi n and the proliferation source use n^{n+1}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import field_ops as fo
from .errors import NutrientBoundsBreached
from .field_ops import ScalarField
from .reaction import TUMOR, tumor_interpolant
from .solver import PhaseRecorder, PhaseStepper, SolverConfig, Trajectory, chemical_potential

NUTRIENT_SLACK = 1e-8
NUTRIENT_COLUMNS = ("t", "mass", "n_min", "n_max")


@dataclass(frozen=True, eq=False)
class TumorConfig:
    base: SolverConfig
    chi: float = 0.5
    B: float = 1.0
    C: float = 2.0
    n_B: float | ScalarField = 1.0
    n0: ScalarField | None = None

    def __post_init__(self):
        r = self.base.reaction
        if r is None or r.kind != TUMOR:
            raise ValueError("tumor runs need a tumor reaction in the base config")
        if self.chi < 0 or self.B < 0 or self.C < 0:
            raise ValueError("chi, B and C must be nonnegative")
        nb = self.n_B.values if isinstance(self.n_B, ScalarField) else np.asarray(self.n_B)
        if np.any(nb < 0) or np.any(nb > 1):
            raise ValueError("n_B must lie in [0, 1]")
        if np.any(self.nutrient0.values < 0) or np.any(self.nutrient0.values > 1):
            raise ValueError("n0 must lie in [0, 1]")
        if self.base.dt * (self.B + self.C) > 1.0:
            raise ValueError("dt * (B + C) must not exceed 1 (nutrient positivity)")

    @property
    def nutrient0(self) -> ScalarField:
        if self.n0 is None:
            return ScalarField.constant(self.base.grid, 1.0)
        return self.n0

    @property
    def supply(self):
        return self.n_B.values if isinstance(self.n_B, ScalarField) else float(self.n_B)


class TumorStepper:
    def __init__(self, cfg: TumorConfig):
        self.cfg = cfg
        self.phase = PhaseStepper(cfg.base)
        grid = cfg.base.grid
        self.grid = grid
        self.resolvent = 1.0 / (1.0 + cfg.base.dt * grid.k2)

    def nutrient_step(self, phi, n, t=0.0):
        cfg = self.cfg
        tau = cfg.base.dt
        src = cfg.B * (cfg.supply - n) - cfg.C * tumor_interpolant(phi) * n
        n_next = fo.irfft(self.resolvent * fo.rfft(n + tau * src), self.grid)
        lo, hi = float(np.min(n_next)), float(np.max(n_next))
        if lo < -NUTRIENT_SLACK or hi > 1.0 + NUTRIENT_SLACK:
            raise NutrientBoundsBreached(f"nutrient left [0, 1]: min={lo!r}, max={hi!r}", t)
        return n_next

    def advance(self, phi, n, t=0.0):
        """Return (phi_next, n_next, mu, iterations, source) as arrays."""
        n_next = self.nutrient_step(phi, n, t)
        g = -self.cfg.chi * n_next
        src = self.cfg.base.reaction.source_array(phi, n_next)
        u, mu, iters = self.phase.advance(phi, src, g=g, t=t)
        return u, n_next, mu, iters, src


def step_tumor(cfg: TumorConfig, phi: ScalarField, n: ScalarField, t: float = 0.0):
    u, n_next, mu, _, _ = TumorStepper(cfg).advance(phi.values, n.values, t)
    return phi.with_values(u), n.with_values(n_next), phi.with_values(mu)


def run_tumor(cfg: TumorConfig):
    """Evolve from phi = -1 + lambda and n = n0; returns (phi trajectory, nutrient trajectory)."""
    base = cfg.base
    stepper = TumorStepper(cfg)
    phi0 = base.initial_field()
    n0 = cfg.nutrient0
    rec = PhaseRecorder(base, phi0)
    nut = Trajectory(base.grid, columns=NUTRIENT_COLUMNS)

    def record_n(t, n):
        nut.record(t=t, mass=np.mean(n), n_min=np.min(n), n_max=np.max(n))

    g0 = -cfg.chi * n0.values
    rec.record(0.0, phi0, chemical_potential(base, phi0, g=g0), g=g0)
    record_n(0.0, n0.values)
    rec.traj.snapshots.append((0.0, phi0))
    nut.snapshots.append((0.0, n0))
    phi, n = phi0.values, n0.values
    stride = max(1, base.snapshot_stride)
    for k in range(1, base.n_steps + 1):
        t = k * base.dt
        u, n, mu, iters, src = stepper.advance(phi, n, t)
        defect = np.mean(u) - np.mean(phi) - base.dt * np.mean(src)
        phi = u
        pf = ScalarField(base.grid, u)
        rec.record(t, pf, mu, g=-cfg.chi * n, iters=iters, mass_defect=defect)
        record_n(t, n)
        if k % stride == 0:
            rec.traj.snapshots.append((t, pf))
            nut.snapshots.append((t, ScalarField(base.grid, n)))
    rec.traj.final = ScalarField(base.grid, phi)
    nut.final = ScalarField(base.grid, n)
    return rec.traj, nut
