"""Experiment configuration, presets and the parameter studies.

Configurations are INI documents with sections [grid], [potential],
[reaction], [kernel], [solver], [tumor] and [experiment].  Every key has a
type and default listed in ``SCHEMA``; unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
import csv
import copy
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import field_ops as fo
from .errors import ConfigError, FitDegenerate, UnknownPreset
from .field_ops import Grid, ScalarField, gaussian_kernel_with_integral
from .mean_dynamics import MeanBounds, verify_mean_confinement
from .potential import SingularPotential, mz_sharp_sides, sharp_constants, INEQUALITY_SLACK
from .reaction import make_inpainting, make_oono, make_tumor
from .solver import LOCAL, NONLOCAL, PhaseStepper, SolverConfig, run
from .tumor import TumorConfig, TumorStepper, run_tumor

TWO_PI = 2 * math.pi

SCHEMA = {
    "grid": {"nx": (int, 128), "ny": (int, 128), "lx": (float, TWO_PI), "ly": (float, TWO_PI)},
    "potential": {"theta": (float, 1.0), "theta0": (float, 2.0)},
    "reaction": {
        "kind": (str, "none"),
        "m": (float, 1.0),
        "c": (float, 0.0),
        "m_bar": (float, 50.0),
        "mask": (str, "half_plane"),
        "image": (str, "stripes"),
        "image_amplitude": (float, 0.4),
        "image_stripes": (int, 3),
        "delta_n": (float, 0.2),
    },
    "kernel": {"kind": (str, "none"), "integral": (float, 1.5), "sigma": (float, 0.3)},
    "solver": {
        "model": (str, LOCAL),
        "lambda": (float, 1e-3),
        "dt": (float, 1e-3),
        "t_end": (float, 2.0),
        "stabilization": (float, 0.0),
        "newton_tol": (float, 1e-10),
        "newton_max": (int, 50),
        "clip": (float, 1e-9),
        "snapshot_stride": (int, 100),
        "g": (float, 0.0),
        "init": (str, "pure"),
        "init_mean": (float, 0.0),
        "init_noise": (float, 1e-2),
        "seed": (int, 0),
    },
    "tumor": {
        "enabled": (bool, False),
        "chi": (float, 0.5),
        "B": (float, 1.0),
        "C": (float, 2.0),
        "n_b": (float, 1.0),
        "n0": (float, 1.0),
    },
    "experiment": {
        "lambdas": (list, [1e-1, 1e-2, 1e-3, 1e-4]),
        "t_probe": (float, 0.5),
        "lambda1": (float, 1e-2),
        "lambda2": (float, 2e-2),
        "t_grid_points": (int, 11),
        "deltas": (list, [0.1, 1 / 3, 0.9]),
        "samples": (int, 10000),
        "seed": (int, 42),
        "workers": (int, 1),
        "slack_steps": (float, 5.0),
    },
}


def _parse_value(kind, text: str, where: str):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError(text)
            return low == "true"
        if kind is list:
            return [float(x) for x in text.split(",") if x.strip()]
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r} as {kind.__name__}") from exc


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(repr(float(x)) for x in value)
    return str(value)


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: {
        s: {k: copy.copy(d) for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()
    })
    base_dir: Path | None = field(default=None, compare=False)

    @classmethod
    def from_text(cls, text: str, base_dir=None) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        cfg = cls(base_dir=Path(base_dir) if base_dir else None)
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                kind = SCHEMA[section][key][0]
                cfg.values[section][key] = _parse_value(kind, raw, f"[{section}] {key}")
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_text(path.read_text(), base_dir=path.parent)

    def to_text(self) -> str:
        out = io.StringIO()
        for section, keys in SCHEMA.items():
            out.write(f"[{section}]\n")
            for key in keys:
                out.write(f"{key} = {_format_value(self.values[section][key])}\n")
            out.write("\n")
        return out.getvalue()

    def __getitem__(self, section):
        return self.values[section]

    def updated(self, section: str, **changes) -> "ExperimentConfig":
        new = ExperimentConfig(copy.deepcopy(self.values), self.base_dir)
        for k, v in changes.items():
            if k not in SCHEMA[section]:
                raise ConfigError(f"unknown key {k!r} in [{section}]")
            new.values[section][k] = v
        return new

    # builders

    def grid(self) -> Grid:
        g = self["grid"]
        return Grid(g["nx"], g["ny"], g["lx"], g["ly"])

    def potential(self) -> SingularPotential:
        p = self["potential"]
        return SingularPotential(p["theta"], p["theta0"])

    def _resolve(self, name):
        path = Path(name)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path

    def _field(self, grid, spec: str, generated):
        if spec in generated:
            return generated[spec]()
        field_, _ = fo.read_field(self._resolve(spec))
        if field_.grid.shape != grid.shape:
            raise ConfigError(f"{spec}: grid {field_.grid.shape} does not match {grid.shape}")
        return ScalarField(grid, field_.values)

    def reaction(self, grid: Grid):
        r = self["reaction"]
        kind = r["kind"]
        if kind == "none":
            return None
        if kind == "oono":
            return make_oono(r["m"], r["c"], grid)
        if kind == "tumor":
            return make_tumor(r["m"], r["delta_n"], grid)
        if kind == "inpainting":
            x, y = grid.coordinates()
            mask = self._field(grid, r["mask"], {
                "half_plane": lambda: ScalarField(grid, (x < grid.lx / 2).astype(float)),
            })
            image = self._field(grid, r["image"], {
                "stripes": lambda: ScalarField(grid, r["image_amplitude"] * np.tanh(
                    4.0 * np.sin(TWO_PI * r["image_stripes"] * y / grid.ly))),
            })
            return make_inpainting(mask, image, r["m_bar"])
        raise ConfigError(f"unknown reaction kind {kind!r}")

    def kernel(self, grid: Grid):
        k = self["kernel"]
        if k["kind"] == "none":
            return None
        if k["kind"] == "gaussian":
            return gaussian_kernel_with_integral(grid, k["integral"], k["sigma"])
        raise ConfigError(f"unknown kernel kind {k['kind']!r}")

    def initial(self, grid: Grid):
        s = self["solver"]
        if s["init"] == "pure":
            return None
        if s["init"] == "noise":
            rng = np.random.default_rng(s["seed"])
            return ScalarField(grid, s["init_mean"] + s["init_noise"] * rng.uniform(-1, 1, grid.shape))
        return self._field(grid, s["init"], {})

    def solver_config(self, lam: float | None = None) -> SolverConfig:
        grid = self.grid()
        s = self["solver"]
        g = None if s["g"] == 0.0 else ScalarField.constant(grid, s["g"])
        return SolverConfig(
            grid=grid,
            pot=self.potential(),
            reaction=self.reaction(grid),
            kernel=self.kernel(grid),
            g_field=g,
            lam=s["lambda"] if lam is None else lam,
            dt=s["dt"],
            t_end=s["t_end"],
            stabilization=s["stabilization"],
            newton_tol=s["newton_tol"],
            newton_max=s["newton_max"],
            clip=s["clip"],
            model=s["model"],
            snapshot_stride=s["snapshot_stride"],
            initial=self.initial(grid),
        )

    @property
    def is_tumor(self) -> bool:
        return bool(self["tumor"]["enabled"])

    def tumor_config(self, lam: float | None = None) -> TumorConfig:
        t = self["tumor"]
        base = self.solver_config(lam)
        return TumorConfig(base, chi=t["chi"], B=t["B"], C=t["C"], n_B=t["n_b"],
                           n0=ScalarField.constant(base.grid, t["n0"]))


PRESETS = ("oono", "inpainting", "spinodal", "tumor_local", "tumor_nonlocal")


def preset(name: str) -> ExperimentConfig:
    """Documented default configurations.

    oono            m=1, c=0.3 from the pure phase, 128^2 on [0,2pi)^2, dt=1e-3, T=2
    inpainting      degenerate m: m_bar=50 on the left half, smooth +-0.4 stripes, T=1
    spinodal        no source, 1e-2 noise around 0 on [0,16pi)^2, dt=1e-2, T=25
    tumor_local     m=1, delta_n=0.2, B=1, C=2, chi=0.5, n0=n_B=1, T=1
    tumor_nonlocal  as tumor_local with a Gaussian kernel of mass 1.5
    """
    cfg = ExperimentConfig()
    if name == "oono":
        return cfg.updated("reaction", kind="oono", m=1.0, c=0.3)
    if name == "inpainting":
        cfg = cfg.updated("reaction", kind="inpainting", m_bar=50.0, image_amplitude=0.4)
        return cfg.updated("solver", t_end=1.0)
    if name == "spinodal":
        cfg = cfg.updated("grid", lx=16 * math.pi, ly=16 * math.pi)
        return cfg.updated("solver", init="noise", init_mean=0.0, init_noise=1e-2, dt=1e-2,
                           t_end=25.0, newton_tol=1e-11, seed=7)
    if name in ("tumor_local", "tumor_nonlocal"):
        cfg = cfg.updated("reaction", kind="tumor", m=1.0, delta_n=0.2)
        cfg = cfg.updated("tumor", enabled=True, chi=0.5, B=1.0, C=2.0, n_b=1.0, n0=1.0)
        cfg = cfg.updated("solver", t_end=1.0)
        if name == "tumor_nonlocal":
            cfg = cfg.updated("solver", model=NONLOCAL, t_end=1.0)
            cfg = cfg.updated("kernel", kind="gaussian", integral=1.5, sigma=0.3)
        return cfg
    raise UnknownPreset(name)


# Runs as steppable systems, so that studies can advance two runs in lock-step.

class _PhaseSystem:
    def __init__(self, cfg: SolverConfig):
        self.cfg = cfg
        self.stepper = PhaseStepper(cfg)
        self.aux = cfg.g_field.values if cfg.g_field is not None else None

    def initial(self):
        return self.cfg.initial_field().values

    def step(self, state, t):
        src = self.stepper.source(state, self.aux)
        return self.stepper.advance(state, src, t=t)[0]

    @staticmethod
    def phi(state):
        return state


class _TumorSystem:
    def __init__(self, cfg: TumorConfig):
        self.cfg = cfg
        self.stepper = TumorStepper(cfg)

    def initial(self):
        return self.cfg.base.initial_field().values, self.cfg.nutrient0.values

    def step(self, state, t):
        u, n, *_ = self.stepper.advance(state[0], state[1], t)
        return u, n

    @staticmethod
    def phi(state):
        return state[0]


def build_system(exp: ExperimentConfig, lam=None):
    if exp.is_tumor:
        return _TumorSystem(exp.tumor_config(lam))
    return _PhaseSystem(exp.solver_config(lam))


def _phi_at(args):
    exp, lam, n_steps = args
    system = build_system(exp, lam)
    dt = exp["solver"]["dt"]
    state = system.initial()
    for k in range(1, n_steps + 1):
        state = system.step(state, k * dt)
    return lam, np.array(system.phi(state))


def pool_size(requested: int | None = None) -> int:
    env = os.environ.get("CHSEP_THREADS")
    if env:
        return max(1, int(env))
    return max(1, requested or 1)


@dataclass
class ContinuationTable:
    lambdas: list
    distances: list
    slope: float
    intercept: float
    used: int

    def rows(self):
        return [(self.lambdas[j], self.lambdas[j + 1], self.distances[j]) for j in range(len(self.distances))]


def lambda_continuation(base: ExperimentConfig, lambdas, t_probe: float,
                        workers: int | None = None) -> ContinuationTable:
    """Distances d_j = ||phi_{lam_j}(t) - phi_{lam_{j+1}}(t)||_{-1} and their log-log slope in lam_j."""
    lambdas = sorted((float(x) for x in lambdas), reverse=True)
    if len(lambdas) < 2:
        raise ValueError("need at least two lambdas")
    dt = base["solver"]["dt"]
    n_steps = int(round(t_probe / dt))
    jobs = [(base, lam, n_steps) for lam in lambdas]
    n_workers = pool_size(workers)
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as ex:
            results = list(ex.map(_phi_at, jobs))
    else:
        results = [_phi_at(j) for j in jobs]
    results.sort(key=lambda item: -item[0])
    grid = base.grid()
    d = [fo.hminus1_norm(ScalarField(grid, results[j][1] - results[j + 1][1]))
         for j in range(len(results) - 1)]
    if any(x == 0.0 for x in d):
        raise FitDegenerate("two runs of the family coincide; cannot fit a rate")
    lam_fit = lambdas[:-1]
    d_fit = d
    floor = 10 * base["solver"]["newton_tol"]
    if len(d_fit) > 2 and d_fit[-1] < floor:
        lam_fit, d_fit = lam_fit[:-1], d_fit[:-1]
    if len(d_fit) < 2:
        slope, intercept = float("nan"), float("nan")
    else:
        slope, intercept = np.polyfit(np.log(lam_fit), np.log(d_fit), 1)
    return ContinuationTable(lambdas, d, float(slope), float(intercept), len(d_fit))


@dataclass
class DependenceTable:
    times: np.ndarray
    lhs: np.ndarray
    rhs0: float
    ratio: np.ndarray

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratio))

    def growth_in_last_half(self) -> bool:
        """True if the ratio increases at every sample of the last half of the grid."""
        tail = self.ratio[len(self.ratio) // 2:]
        return len(tail) > 1 and bool(np.all(np.diff(tail) > 0))

    def bounded(self, limit=1e6) -> bool:
        return bool(np.all(np.isfinite(self.ratio))) and self.max_ratio < limit \
            and not self.growth_in_last_half()


def continuous_dependence_study(base: ExperimentConfig, lambda1: float, lambda2: float,
                                t_grid) -> DependenceTable:
    """LHS(t) = ||d(t)||_{-1}^2 + |mean d(t)| + int_0^t ||d||^2 ds against the initial gap.

    d = phi_2 - phi_1 for the runs started at -1 + lambda_j.  The time
    integral uses the H^1 norm for the local model and L^2 for the nonlocal
    one; it is accumulated with the trapezoid rule over every step.  When the
    initial gap vanishes the ratio is reported as 0.
    """
    grid = base.grid()
    dt = base["solver"]["dt"]
    nonlocal_ = base["solver"]["model"] == NONLOCAL
    t_grid = np.asarray(t_grid, dtype=float)
    sample_steps = np.rint(t_grid / dt).astype(int)
    n_steps = int(sample_steps.max())
    sys1, sys2 = build_system(base, lambda1), build_system(base, lambda2)
    s1, s2 = sys1.initial(), sys2.initial()

    def parts(diff):
        f = ScalarField(grid, diff)
        v_norm = fo.inner(f, f) if nonlocal_ else fo.h1_norm_sq(f)
        return fo.hminus1_norm(f) ** 2 + abs(fo.mean(f)), v_norm

    point0, v_prev = parts(sys2.phi(s2) - sys1.phi(s1))
    rhs0 = point0
    acc = 0.0
    lhs_at = {0: point0}
    for k in range(1, n_steps + 1):
        t = k * dt
        s1, s2 = sys1.step(s1, t), sys2.step(s2, t)
        point, v = parts(sys2.phi(s2) - sys1.phi(s1))
        acc += 0.5 * dt * (v_prev + v)
        v_prev = v
        lhs_at[k] = point + acc
    lhs = np.array([lhs_at[k] for k in sample_steps])
    if rhs0 == 0.0:
        ratio = np.zeros_like(lhs)
    else:
        ratio = lhs / rhs0
    return DependenceTable(sample_steps * dt, lhs, rhs0, ratio)


@dataclass
class SweepRow:
    delta: float
    samples: int
    violations: int
    worst_slack: float


def inequality_sweep(pot: SingularPotential, deltas, samples: int, seed: int,
                     c_scale: float = 1.0, C_scale: float = 1.0):
    """Random (r, r0) checks of the sharp inequality for each delta.

    ``c_scale`` and ``C_scale`` perturb the constants; the harness self-test
    uses c_scale=10, C_scale=0, which must produce violations.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for delta in deltas:
        consts = sharp_constants(delta)
        r = rng.uniform(-1.0, 1.0, samples)
        r = np.where(np.abs(r) < 1.0, r, 0.0)
        r0 = -1.0 + delta * rng.random(samples)
        r0 = np.where(r0 > -1.0, r0, -1.0 + 0.5 * delta)
        lhs, rhs = mz_sharp_sides(pot, r, r0, c_scale * consts.c_beta, C_scale * consts.C_beta)
        slack = rhs - lhs
        rows.append(SweepRow(float(delta), int(samples),
                             int(np.sum(slack < -INEQUALITY_SLACK)), float(np.min(slack))))
    return rows


# Invariant checks shared by the CLI and the acceptance suite.

@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


MASS_IDENTITY_TOL = 1e-13
CONSERVATION_TOL = 1e-12
ENERGY_TOL = 1e-10


def check_phase_trajectory(cfg: SolverConfig, traj, slack_steps: float = 5.0) -> list:
    checks = []
    defect = float(np.max(np.abs(traj.mass_defect)))
    checks.append(Check("mass_identity", defect <= MASS_IDENTITY_TOL, f"max defect {defect:.3e}"))
    peak = float(max(np.max(np.abs(traj.phi_min)), np.max(np.abs(traj.phi_max))))
    checks.append(Check("phi_confined", peak < 1.0, f"max|phi| {peak!r}"))
    if cfg.reaction is None:
        drift = float(np.max(np.abs(traj.mass - traj.mass[0])))
        checks.append(Check("conservation", drift <= CONSERVATION_TOL, f"drift {drift:.3e}"))
        if cfg.g_field is None and cfg.model == LOCAL:
            rise = float(np.max(np.diff(traj.energy))) if len(traj) > 1 else 0.0
            checks.append(Check("energy_dissipation", rise <= ENERGY_TOL, f"max increase {rise:.3e}"))
    elif cfg.initial is None and cfg.lam < 0.5 * cfg.reaction.c0:
        bounds = MeanBounds.from_reaction(cfg.reaction, cfg.lam, cfg.t_end)
        report = verify_mean_confinement(traj, bounds, slack_steps * cfg.dt)
        checks.append(Check("mean_confinement", report.ok, f"{len(report.violations)} violations"))
    return checks


def check_nutrient_trajectory(traj_n) -> list:
    lo, hi = float(np.min(traj_n.n_min)), float(np.max(traj_n.n_max))
    ok = lo >= -1e-8 and hi <= 1 + 1e-8
    return [Check("nutrient_confined", ok, f"n in [{lo!r}, {hi!r}]")]


STEP_COLUMNS = ("t", "newton_iters", "mass_defect", "dist_l2_to_init")


class _CsvTrajectory:
    """Column access over written CSV files, enough for the invariant checks."""

    def __init__(self, *paths):
        self.data = {}
        for path in paths:
            with open(path, newline="") as fh:
                rows = list(csv.reader(fh))
            for j, name in enumerate(rows[0]):
                self.data[name] = np.array([float(r[j]) for r in rows[1:]])

    def __getattr__(self, name):
        if name == "data":
            raise AttributeError(name)
        try:
            return self.data["t" if name == "times" else name]
        except KeyError:
            raise AttributeError(name) from None

    def __len__(self):
        return len(self.data["t"])


def verify_directory(directory) -> list:
    """Re-run the invariant checks on the outputs of ``run_experiment``."""
    out = Path(directory)
    exp = ExperimentConfig.load(out / "config.ini")
    cfg = exp.tumor_config().base if exp.is_tumor else exp.solver_config()
    diag = out / ("diagnostics_phi.csv" if exp.is_tumor else "diagnostics.csv")
    traj = _CsvTrajectory(diag, out / "steps.csv")
    checks = check_phase_trajectory(cfg, traj, exp["experiment"]["slack_steps"])
    if exp.is_tumor:
        checks += check_nutrient_trajectory(_CsvTrajectory(out / "diagnostics_n.csv"))
    return checks


def run_experiment(exp: ExperimentConfig, out_dir=None):
    """Run a configuration; returns (trajectories, checks) and writes outputs if asked."""
    slack = exp["experiment"]["slack_steps"]
    if exp.is_tumor:
        tcfg = exp.tumor_config()
        traj, traj_n = run_tumor(tcfg)
        cfg = tcfg.base
        checks = check_phase_trajectory(cfg, traj, slack) + check_nutrient_trajectory(traj_n)
        trajectories = {"phi": traj, "n": traj_n}
    else:
        cfg = exp.solver_config()
        traj = run(cfg)
        checks = check_phase_trajectory(cfg, traj, slack)
        trajectories = {"phi": traj}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(exp.to_text())
        if exp.is_tumor:
            trajectories["phi"].write_csv(out / "diagnostics_phi.csv")
            trajectories["n"].write_csv(out / "diagnostics_n.csv")
            trajectories["n"].write_snapshots(out / "snapshots", prefix="n")
        else:
            traj.write_csv(out / "diagnostics.csv")
        trajectories["phi"].write_snapshots(out / "snapshots", prefix="phi")
        trajectories["phi"].write_csv(out / "steps.csv", STEP_COLUMNS)
        if cfg.reaction is not None and cfg.initial is None:
            bounds = MeanBounds.from_reaction(cfg.reaction, cfg.lam, cfg.t_end)
            verify_mean_confinement(traj, bounds, slack * cfg.dt).write_csv(out / "mean_report.csv")
    return trajectories, checks
