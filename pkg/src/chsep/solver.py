"""Convex-splitting spectral time steppers for local and nonlocal Cahn-Hilliard flows.

One step of size tau solves, for u = phi^{n+1},

    (u - phi)/tau = Delta(mu_imp(u) + mu_exp(phi)) + S(phi)

with the convex part implicit and the rest explicit:

    local:     mu_imp = -Delta u + beta(u) + s u,   mu_exp = pi(phi) + g - s phi
    nonlocal:  mu_imp = a u + beta(u) + s u,       mu_exp = -K*phi + pi(phi) + g - s phi

The spectral Laplacian has an exactly vanishing zero mode, so the mean obeys
mean(u) = mean(phi) + tau mean(S(phi)) up to round-off.  The nonlinear
system is solved in its H^{-1} form, where it is the gradient of a strictly
convex functional: Newton steps with preconditioned CG on the zero-mean
subspace.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import field_ops as fo
from .errors import A4Violated, BoundsBreached, GridMismatch, NewtonDiverged
from .field_ops import Grid, KernelSpec, ScalarField
from .potential import SingularPotential, check_A4_margin, regularized_beta, regularized_beta_prime
from .reaction import ReactionSpec

log = logging.getLogger(__name__)

LOCAL = "local"
NONLOCAL = "nonlocal"

DIAGNOSTIC_COLUMNS = ("t", "mass", "energy", "phi_min", "phi_max", "grad_mu_l2", "dist_h_to_init")


@dataclass(frozen=True, eq=False)
class SolverConfig:
    grid: Grid
    pot: SingularPotential
    reaction: ReactionSpec | None = None
    kernel: KernelSpec | None = None
    g_field: ScalarField | None = None
    lam: float = 1e-3
    dt: float = 1e-3
    t_end: float = 1.0
    stabilization: float = 0.0
    newton_tol: float = 1e-10
    newton_max: int = 50
    clip: float = 1e-9
    model: str = LOCAL
    snapshot_stride: int = 100
    initial: ScalarField | None = None
    cg_rtol: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam}")
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if self.model not in (LOCAL, NONLOCAL):
            raise ValueError(f"unknown model {self.model!r}")
        if self.stabilization < 0:
            raise ValueError("stabilization must be nonnegative")
        for name in ("reaction", "kernel", "g_field", "initial"):
            obj = getattr(self, name)
            if obj is not None and obj.grid != self.grid:
                raise GridMismatch(f"{name} lives on {obj.grid}, solver grid is {self.grid}")
        if self.reaction is not None and self.dt * self.reaction.m_bar >= 1.0:
            raise ValueError("dt * m_bar must be < 1 for the explicit source")
        if self.model == NONLOCAL:
            if self.kernel is None:
                raise ValueError("nonlocal model needs a kernel")
            margin = check_A4_margin(self.pot, self.kernel.a_star)
            if margin <= 0:
                raise A4Violated(f"a_* + inf F'' = {margin} is not positive")
        if self.initial is not None and np.any(np.abs(self.initial.values) >= 1.0):
            raise ValueError("initial field must satisfy |phi| < 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def initial_field(self) -> ScalarField:
        if self.initial is not None:
            return self.initial
        return ScalarField.constant(self.grid, -1.0 + self.lam)

    def replace(self, **changes) -> "SolverConfig":
        from dataclasses import replace
        return replace(self, **changes)


class PhaseStepper:
    """Reusable one-step solver for a fixed configuration."""

    def __init__(self, cfg: SolverConfig, model: str | None = None):
        self.cfg = cfg
        self.model = model or cfg.model
        if self.model == NONLOCAL and cfg.kernel is None:
            raise ValueError("nonlocal step needs a kernel")
        g = cfg.grid
        self.grid = g
        self.k2 = g.k2
        self.inv_k2 = g.inv_k2
        self.tau = cfg.dt
        self.s = cfg.stabilization
        if self.model == LOCAL:
            self.a = 0.0
            self.local_symbol = self.k2
        else:
            self.a = cfg.kernel.a_field.values
            self.local_symbol = 0.0
        self._base_symbol = self.inv_k2 / self.tau + self.local_symbol
        self._nonzero = self.k2 > 0
        self.g_default = cfg.g_field.values if cfg.g_field is not None else np.zeros(g.shape)

    def source(self, phi, aux=None):
        if self.cfg.reaction is None:
            return np.zeros_like(phi)
        return self.cfg.reaction.source_array(phi, aux)

    def _mu_imp_hat(self, u, u_hat):
        pot, clip = self.cfg.pot, self.cfg.clip
        pointwise = regularized_beta(pot, u, clip) + (self.s + self.a) * u
        return self.local_symbol * u_hat + fo.rfft(pointwise)

    def _residual(self, phi_hat, d):
        d_hat = fo.rfft(d)
        u = self._phi + d
        r_hat = self.inv_k2 * (d_hat - self._rhs_hat) / self.tau + self._mu_imp_hat(u, phi_hat + d_hat)
        r_hat[0, 0] = 0.0
        return fo.irfft(r_hat, self.grid)

    def advance(self, phi, source, g=None, t=0.0):
        """Return (u, mu, iterations) for one step from the array ``phi``.

        ``source`` is S(phi) evaluated by the caller; ``g`` overrides the
        configured time-constant g.
        """
        cfg = self.cfg
        pot, tau = cfg.pot, self.tau
        g = self.g_default if g is None else g
        explicit = pot.pi(phi) + g - self.s * phi
        if self.model == NONLOCAL:
            explicit = explicit - fo.convolve_array(cfg.kernel, phi)
        phi_hat = fo.rfft(phi)
        self._phi = phi
        self._rhs_hat = fo.rfft(tau * source) - tau * self.k2 * fo.rfft(explicit)

        d = tau * source
        d += self._rhs_hat[0, 0].real / self.grid.size - np.mean(d)
        shape, n = self.grid.shape, self.grid.size
        r = self._residual(phi_hat, d)
        rnorm = _rms(r)
        iters = 0
        for iters in range(1, cfg.newton_max + 1):
            if rnorm <= cfg.newton_tol:
                break
            coeff = regularized_beta_prime(pot, phi + d, cfg.clip) + self.s + self.a
            coeff = np.broadcast_to(coeff, shape)
            precond_symbol = np.where(self._nonzero, 1.0 / (self._base_symbol + float(np.mean(coeff))), 0.0)

            def hess(v, coeff=coeff):
                v = v.reshape(shape)
                out_hat = self._base_symbol * fo.rfft(v) + fo.rfft(coeff * v)
                out_hat[0, 0] = 0.0
                return fo.irfft(out_hat, self.grid).ravel()

            def precond(v):
                return fo.irfft(precond_symbol * fo.rfft(v.reshape(shape)), self.grid).ravel()

            op = LinearOperator((n, n), matvec=hess, dtype=float)
            pc = LinearOperator((n, n), matvec=precond, dtype=float)
            step, _ = cg(op, -r.ravel(), rtol=cfg.cg_rtol, atol=0.0, maxiter=500, M=pc)
            step = step.reshape(shape)
            step -= np.mean(step)
            # damp by halves while the residual grows
            for _ in range(30):
                trial = d + step
                r_trial = self._residual(phi_hat, trial)
                n_trial = _rms(r_trial)
                if n_trial < rnorm or n_trial <= cfg.newton_tol:
                    break
                step *= 0.5
            d, r, rnorm = trial, r_trial, n_trial
        else:
            if rnorm > cfg.newton_tol:
                raise NewtonDiverged(
                    f"residual {rnorm:.3e} > {cfg.newton_tol:.1e} after {cfg.newton_max} iterations", t
                )
        u = phi + d
        peak = float(np.max(np.abs(u)))
        if not peak < 1.0:
            raise BoundsBreached(f"max|phi| = {peak!r} reached the pure phases", t)
        if self.model == LOCAL:
            lin = fo.irfft(self.k2 * fo.rfft(u), self.grid)
        else:
            lin = self.a * u - fo.convolve_array(cfg.kernel, phi)
        mu = lin + regularized_beta(pot, u, cfg.clip) + pot.pi(phi) + g
        return u, mu, iters


def _rms(a) -> float:
    return float(np.sqrt(np.mean(np.square(a))))


def _step(cfg, phi: ScalarField, t, model):
    stepper = PhaseStepper(cfg, model)
    aux = cfg.g_field.values if cfg.g_field is not None else None
    src = stepper.source(phi.values, aux)
    u, mu, iters = stepper.advance(phi.values, src, t=t)
    return phi.with_values(u), phi.with_values(mu), iters


def step_local(cfg: SolverConfig, phi: ScalarField, t: float = 0.0):
    """One convex-split step of the local system; returns (phi_next, mu, newton_iters)."""
    return _step(cfg, phi, t, LOCAL)


def step_nonlocal(cfg: SolverConfig, phi: ScalarField, t: float = 0.0):
    return _step(cfg, phi, t, NONLOCAL)


def energy_local(pot: SingularPotential, phi: ScalarField, g: ScalarField | None = None) -> float:
    """1/2 ||grad phi||^2 + int F(phi) + int g phi."""
    if np.any(np.abs(phi.values) > 1.0):
        from .errors import DomainError
        raise DomainError("energy needs |phi| <= 1")
    grid = phi.grid
    e = 0.5 * fo.grad_sq_array(grid, phi.values) + fo.integral(pot.F(phi.values), grid)
    if g is not None:
        e += fo.inner(g, phi)
    return float(e)


def energy_nonlocal(pot: SingularPotential, kernel: KernelSpec, phi: ScalarField,
                    g: ScalarField | None = None) -> float:
    """1/4 iint K(x-y)|phi(x)-phi(y)|^2 + int F(phi) + int g phi.

    The interaction is evaluated as 1/2 int a phi^2 - 1/2 int phi (K*phi).
    """
    if np.any(np.abs(phi.values) > 1.0):
        from .errors import DomainError
        raise DomainError("energy needs |phi| <= 1")
    grid = phi.grid
    p = phi.values
    inter = 0.5 * fo.integral(kernel.a_field.values * p * p, grid) \
        - 0.5 * fo.integral(p * fo.convolve_array(kernel, p), grid)
    e = inter + fo.integral(pot.F(p), grid)
    if g is not None:
        e += fo.inner(g, phi)
    return float(e)


@dataclass
class Trajectory:
    """Per-step diagnostics plus strided snapshots of one run."""

    grid: Grid
    columns: tuple = DIAGNOSTIC_COLUMNS
    data: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)
    final: ScalarField | None = None

    def record(self, **values):
        for k, v in values.items():
            self.data.setdefault(k, []).append(float(v))

    def __getattr__(self, name):
        if name.startswith("_") or name in ("data", "grid", "columns", "snapshots", "final"):
            raise AttributeError(name)
        try:
            return np.asarray(self.data["t" if name == "times" else name])
        except KeyError:
            raise AttributeError(name) from None

    def __len__(self):
        return len(self.data.get("t", ()))

    def write_csv(self, path, columns=None):
        columns = columns or self.columns
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in zip(*(self.data[c] for c in columns)):
                w.writerow([repr(x) for x in row])

    def write_snapshots(self, directory, prefix="phi"):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for i, (t, f) in enumerate(self.snapshots):
            fo.write_field(directory / f"{prefix}_{i:05d}.txt", f, t)


def chemical_potential(cfg: SolverConfig, phi: ScalarField, g=None, model=None):
    """mu = A phi + F'(phi) + g at a given state (A = -Delta or a - K*)."""
    model = model or cfg.model
    p = phi.values
    g = (cfg.g_field.values if cfg.g_field is not None else 0.0) if g is None else g
    if model == LOCAL:
        lin = fo.irfft(cfg.grid.k2 * fo.rfft(p), cfg.grid)
    else:
        lin = cfg.kernel.a_field.values * p - fo.convolve_array(cfg.kernel, p)
    return lin + cfg.pot.F_prime(p) + g


class PhaseRecorder:
    """Accumulates phase-field diagnostics against a fixed initial datum."""

    def __init__(self, cfg: SolverConfig, phi0: ScalarField, model=None):
        self.cfg = cfg
        self.model = model or cfg.model
        self.phi0 = phi0
        self.traj = Trajectory(cfg.grid)

    def energy(self, phi: ScalarField, g=None):
        gf = None if g is None else ScalarField(self.cfg.grid, np.broadcast_to(g, self.cfg.grid.shape))
        if gf is None:
            gf = self.cfg.g_field
        if self.model == LOCAL:
            return energy_local(self.cfg.pot, phi, gf)
        return energy_nonlocal(self.cfg.pot, self.cfg.kernel, phi, gf)

    def record(self, t, phi: ScalarField, mu, *, g=None, iters=0, mass_defect=0.0):
        p = phi.values
        diff = phi - self.phi0
        self.traj.record(
            t=t,
            mass=np.mean(p),
            energy=self.energy(phi, g),
            phi_min=np.min(p),
            phi_max=np.max(p),
            grad_mu_l2=np.sqrt(fo.grad_sq_array(self.cfg.grid, mu)),
            dist_h_to_init=fo.hminus1_norm(diff),
            dist_l2_to_init=fo.l2_norm(diff),
            newton_iters=iters,
            mass_defect=mass_defect,
        )


def run(cfg: SolverConfig) -> Trajectory:
    """Integrate from the configured initial datum (default -1 + lambda) to t_end."""
    stepper = PhaseStepper(cfg)
    phi0 = cfg.initial_field()
    rec = PhaseRecorder(cfg, phi0)
    aux = cfg.g_field.values if cfg.g_field is not None else None
    phi = phi0.values
    rec.record(0.0, phi0, chemical_potential(cfg, phi0))
    rec.traj.snapshots.append((0.0, phi0))
    stride = max(1, cfg.snapshot_stride)
    for n in range(1, cfg.n_steps + 1):
        t_old = (n - 1) * cfg.dt
        t = n * cfg.dt
        src = stepper.source(phi, aux)
        u, mu, iters = stepper.advance(phi, src, t=t)
        defect = np.mean(u) - np.mean(phi) - cfg.dt * np.mean(src)
        phi = u
        field_ = ScalarField(cfg.grid, u)
        rec.record(t, field_, mu, iters=iters, mass_defect=defect)
        if n % stride == 0:
            rec.traj.snapshots.append((t, field_))
        log.debug("t=%.4g mass=%.12g iters=%d", t_old, np.mean(u), iters)
    rec.traj.final = ScalarField(cfg.grid, phi)
    return rec.traj
