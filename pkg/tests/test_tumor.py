import math

import numpy as np
import pytest

from chsep import field_ops as fo
from chsep.errors import NutrientBoundsBreached
from chsep.field_ops import Grid, ScalarField
from chsep.mean_dynamics import MeanBounds, verify_mean_confinement
from chsep.potential import SingularPotential
from chsep.reaction import make_oono, make_tumor, tumor_interpolant
from chsep.solver import PhaseStepper, SolverConfig
from chsep.tumor import TumorConfig, TumorStepper, run_tumor, step_tumor

G = Grid(32, 32)
POT = SingularPotential()


def config(t_end=0.5, lam=1e-3, dt=1e-3, **kw):
    base = SolverConfig(G, POT, reaction=make_tumor(1.0, kw.pop("delta_n", 0.2), G), lam=lam, dt=dt, t_end=t_end)
    return TumorConfig(base, **kw)


def test_nutrient_nearly_unchanged_at_pure_phase():
    lam, tau = 1e-4, 1e-3
    cfg = config(lam=lam, dt=tau, C=2.0, B=1.0, n_B=1.0, n0=ScalarField.constant(G, 1.0))
    phi0 = cfg.base.initial_field()
    _, n1, _ = step_tumor(cfg, phi0, cfg.nutrient0)
    drift = np.max(np.abs(n1.values - 1.0))
    assert drift <= 2.0 * lam * tau / 2 + tau**2


def test_nutrient_linear_ode():
    B = 1.5
    cfg = config(t_end=1.0, C=0.0, B=B, n_B=1.0, n0=ScalarField.constant(G, 0.0))
    _, traj_n = run_tumor(cfg)
    exact = 1 - np.exp(-B * traj_n.times)
    assert np.max(np.abs(traj_n.mass - exact)) <= 5 * cfg.base.dt


def test_no_nutrient_reduces_to_oono():
    cfg = config(t_end=1.0, n_B=0.0, n0=ScalarField.constant(G, 0.0))
    traj, traj_n = run_tumor(cfg)
    assert np.all(traj_n.n_max == 0.0)
    exact = (-1 + 1e-3) * np.exp(-traj.times)
    assert np.max(np.abs(traj.mass - exact)) <= 5 * cfg.base.dt


def test_decoupled_phase_matches_plain_stepper():
    rng = np.random.default_rng(0)
    n0 = ScalarField(G, rng.uniform(0.3, 1.0, G.shape))
    cfg = config(chi=0.0, n0=n0)
    ts = TumorStepper(cfg)
    plain = PhaseStepper(cfg.base)
    phi, n = cfg.base.initial_field().values, n0.values
    for k in range(5):
        u, n_next, _, _, src = ts.advance(phi, n)
        v, _, _ = plain.advance(phi, cfg.base.reaction.source_array(phi, n_next), g=np.zeros(G.shape))
        assert np.array_equal(u, v)
        phi, n = u, n_next


def test_default_preset_behaviour():
    cfg = config(t_end=0.5, chi=0.5, B=1.0, C=2.0, n_B=1.0, n0=ScalarField.constant(G, 1.0))
    traj, traj_n = run_tumor(cfg)
    assert np.all(np.diff(traj.mass) > 0)
    assert np.min(traj_n.n_min) >= -1e-8 and np.max(traj_n.n_max) <= 1 + 1e-8
    assert np.max(np.abs(traj.mass_defect)) <= 1e-13
    assert np.max(np.abs(traj.phi_max)) < 1
    b = MeanBounds.from_reaction(cfg.base.reaction, cfg.base.lam, cfg.base.t_end)
    assert b.c0 == pytest.approx(0.2)
    assert verify_mean_confinement(traj, b, 5 * cfg.base.dt).ok


def test_coupled_mass_identity_heterogeneous():
    rng = np.random.default_rng(1)
    base = SolverConfig(G, POT, reaction=make_tumor(1.0, 0.2, G), dt=1e-3, t_end=0.05,
                        initial=ScalarField(G, -0.5 + 0.3 * rng.uniform(-1, 1, G.shape)))
    n_B = ScalarField(G, rng.uniform(0, 1, G.shape))
    cfg = TumorConfig(base, n_B=n_B, n0=ScalarField(G, rng.uniform(0, 1, G.shape)))
    traj, traj_n = run_tumor(cfg)
    assert np.max(np.abs(traj.mass_defect)) <= 1e-13
    assert np.min(traj_n.n_min) >= -1e-8 and np.max(traj_n.n_max) <= 1 + 1e-8
    # the defect is measured against the fresh nutrient
    ts = TumorStepper(cfg)
    phi, n = base.initial.values, cfg.nutrient0.values
    u, n1, _, _, _ = ts.advance(phi, n)
    expect = np.mean(-phi + np.maximum(n1 - 0.2, 0) * tumor_interpolant(phi))
    assert abs(np.mean(u) - np.mean(phi) - base.dt * expect) <= 1e-13


def test_validation():
    base = SolverConfig(G, POT, reaction=make_oono(1.0, 0.0, G))
    with pytest.raises(ValueError):
        TumorConfig(base)
    with pytest.raises(ValueError):
        config(n_B=1.5)
    with pytest.raises(ValueError):
        config(n0=ScalarField.constant(G, -0.1))
    with pytest.raises(ValueError):
        config(dt=0.4, B=2.0, C=2.0)


def test_nutrient_breach_reported():
    ts = TumorStepper(config())
    with pytest.raises(NutrientBoundsBreached):
        ts.nutrient_step(np.zeros(G.shape), np.full(G.shape, 1.5), t=0.2)
