import math

import numpy as np
import pytest

from chsep import field_ops as fo
from chsep.errors import A4Violated, BoundsBreached, GridMismatch, NewtonDiverged
from chsep.field_ops import Grid, ScalarField
from chsep.mean_dynamics import exact_oono_mean
from chsep.potential import CustomParts, SingularPotential
from chsep.reaction import make_oono
from chsep.solver import (
    NONLOCAL, SolverConfig, chemical_potential, energy_local, energy_nonlocal, run, step_local,
    step_nonlocal,
)

POT = SingularPotential(1.0, 2.0)
G = Grid(32, 32)


def noise(grid, amp=1e-2, seed=0, mean=0.0):
    return ScalarField(grid, mean + amp * np.random.default_rng(seed).uniform(-1, 1, grid.shape))


def test_constant_state_stationary():
    phi = ScalarField.constant(G, 0.3)
    cfg = SolverConfig(G, POT, initial=phi)
    u, mu, iters = step_local(cfg, phi)
    assert np.allclose(u.values, 0.3, atol=1e-15)
    assert np.allclose(mu.values, POT.F_prime(0.3), rtol=1e-12)
    assert iters == 1


def test_oono_single_step_mass():
    lam, tau = 1e-3, 1e-3
    cfg = SolverConfig(G, POT, reaction=make_oono(1.0, 0.0, G), lam=lam, dt=tau)
    u, _, _ = step_local(cfg, cfg.initial_field())
    assert abs(fo.mean(u) - (-1 + lam) * (1 - tau)) <= 1e-13


def test_energy_values():
    assert energy_local(POT, ScalarField.constant(G, 0.0)) == 0.0
    e = energy_local(POT, ScalarField.constant(G, -1.0))
    assert e == pytest.approx(G.area * (math.log(2) - 1), rel=1e-13)
    k = fo.gaussian_kernel_with_integral(G, 1.5, 0.5)
    c = ScalarField.constant(G, 0.4)
    assert energy_nonlocal(POT, k, c) == pytest.approx(G.area * POT.F(0.4), rel=1e-12)


def test_nonlocal_energy_matches_double_integral():
    g = Grid(8, 8, 4.0, 4.0)
    k = fo.gaussian_kernel_with_integral(g, 1.0, 1.0)
    rng = np.random.default_rng(4)
    phi = ScalarField(g, rng.uniform(-0.5, 0.5, g.shape))
    p = phi.values.ravel()
    kv = k.k_values.values
    idx = np.indices(g.shape).reshape(2, -1).T
    quad = 0.0
    for a, (i, j) in enumerate(idx):
        for b, (p2, q2) in enumerate(idx):
            quad += kv[(i - p2) % 8, (j - q2) % 8] * (p[a] - p[b]) ** 2
    quad *= 0.25 * g.cell_area**2
    expected = quad + fo.integral(POT.F(phi.values), g)
    assert energy_nonlocal(POT, k, phi) == pytest.approx(expected, rel=1e-12)


def test_energy_dissipation_short_spinodal():
    g = Grid(32, 32, 8 * math.pi, 8 * math.pi)
    cfg = SolverConfig(g, POT, initial=noise(g, seed=3), dt=0.05, t_end=10.0, newton_tol=1e-11)
    traj = run(cfg)
    assert np.max(np.diff(traj.energy)) <= 1e-10
    assert np.max(np.abs(traj.mass - traj.mass[0])) <= 1e-12
    assert traj.energy[-1] < traj.energy[0] - 1e-3  # separation actually started


def test_oono_run_matches_exact_mean():
    cfg = SolverConfig(G, POT, reaction=make_oono(1.0, 0.3, G), lam=1e-3, dt=1e-3, t_end=2.0)
    traj = run(cfg)
    exact = exact_oono_mean(1.0, 0.3, 1e-3, traj.times)
    assert abs(traj.mass[-1] - exact[-1]) <= 5e-3
    assert np.max(np.abs(traj.mass_defect)) <= 1e-13
    assert len(traj.snapshots) == 21 and traj.final is not None


def test_short_time_growth_exponent():
    cfg = SolverConfig(G, POT, reaction=make_oono(1.0, 0.3, G), lam=1e-3, dt=1e-3, t_end=0.01)
    traj = run(cfg)
    t, d = traj.times[1:], traj.dist_l2_to_init[1:]
    slope = np.polyfit(np.log(t), np.log(d), 1)[0]
    assert slope >= 0.45


def test_nonlocal_constant_and_oono():
    k = fo.gaussian_kernel_with_integral(G, 1.5, 0.5)
    phi = ScalarField.constant(G, -0.2)
    cfg = SolverConfig(G, POT, kernel=k, model=NONLOCAL, initial=phi)
    u, mu, iters = step_nonlocal(cfg, phi)
    assert np.allclose(u.values, -0.2, atol=1e-14) and iters == 1
    assert np.allclose(mu.values, POT.F_prime(-0.2), rtol=1e-10)
    cfg = SolverConfig(G, POT, reaction=make_oono(1.0, 0.0, G), kernel=k, model=NONLOCAL, t_end=1.0)
    traj = run(cfg)
    assert np.max(np.abs(traj.mass - exact_oono_mean(1.0, 0.0, 1e-3, traj.times))) <= 5e-3


def test_nonlocal_dissipation_and_conservation():
    g = Grid(32, 32, 4 * math.pi, 4 * math.pi)
    k = fo.gaussian_kernel_with_integral(g, 1.5, 0.8)
    cfg = SolverConfig(g, POT, kernel=k, model=NONLOCAL, initial=noise(g, 0.2, seed=1), dt=0.05, t_end=2.0)
    traj = run(cfg)
    assert np.max(np.abs(traj.mass - traj.mass[0])) <= 1e-12
    assert np.max(np.diff(traj.energy)) <= 1e-10


def test_zero_kernel_needs_convex_potential():
    zk = fo.zero_kernel(G)
    with pytest.raises(A4Violated):
        SolverConfig(G, POT, kernel=zk, model=NONLOCAL)
    convex = SingularPotential.custom(CustomParts(
        beta=POT.beta, beta_prime=POT.beta_prime, beta_hat=POT.beta_hat,
        pi=lambda r: 0.0 * np.asarray(r), pi_hat=lambda r: 0.0 * np.asarray(r),
        pi_prime=lambda r: 0.0 * np.asarray(r), lipschitz=0.0,
    ))
    phi = ScalarField.constant(G, 0.5)
    cfg = SolverConfig(G, convex, kernel=zk, model=NONLOCAL, initial=phi)
    u, _, _ = step_nonlocal(cfg, phi)
    assert np.allclose(u.values, 0.5, atol=1e-15)


def test_failures_carry_time():
    x, _ = G.coordinates()
    sharp = ScalarField(G, 0.95 * np.tanh(5 * np.sin(x)))
    cfg = SolverConfig(G, POT, initial=sharp, clip=0.5, dt=0.1)
    with pytest.raises(BoundsBreached) as err:
        step_local(cfg, sharp, t=0.3)
    assert err.value.t == 0.3
    phi = noise(G)
    cfg = SolverConfig(G, POT, initial=phi, newton_max=1, newton_tol=1e-15, dt=0.1)
    with pytest.raises(NewtonDiverged):
        step_local(cfg, phi)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(G, POT, lam=0.0)
    with pytest.raises(ValueError):
        SolverConfig(G, POT, reaction=make_oono(2000.0, 0.0, G))
    with pytest.raises(ValueError):
        SolverConfig(G, POT, model=NONLOCAL)
    with pytest.raises(GridMismatch):
        SolverConfig(G, POT, reaction=make_oono(1.0, 0.0, Grid(16, 16)))


def test_chemical_potential_consistent_with_step():
    phi = noise(G, 0.3, seed=2)
    cfg = SolverConfig(G, POT, initial=phi, dt=1e-3, newton_tol=1e-12)
    u, mu, _ = step_local(cfg, phi)
    direct = chemical_potential(cfg, u) - POT.pi(u.values) + POT.pi(phi.values)
    assert np.allclose(mu.values, direct, atol=1e-10)


def test_csv_determinism(tmp_path):
    cfg = SolverConfig(G, POT, initial=noise(G, 0.1, seed=8), dt=1e-2, t_end=0.2)
    run(cfg).write_csv(tmp_path / "a.csv")
    run(cfg).write_csv(tmp_path / "b.csv")
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    assert a.split(b"\n")[0] == b"t,mass,energy,phi_min,phi_max,grad_mu_l2,dist_h_to_init"
    assert b"\r" not in a
