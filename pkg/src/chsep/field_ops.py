"""Periodic spectral toolbox on a rectangular 2D torus.

All integrals use continuum normalization: sums are weighted by the cell
area so that norms computed at different resolutions are comparable.
Transforms are real FFTs over the full grid, with the half spectrum
weighted by two where Parseval needs it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import fft

from .errors import GridMismatch, MeanNotZero, ResolutionError

ZERO_MEAN_RTOL = 1e-10


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    lx: float = 2 * np.pi
    ly: float = 2 * np.pi

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1 or self.lx <= 0 or self.ly <= 0:
            raise ValueError(f"invalid grid {self}")

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def dx(self):
        return self.lx / self.nx

    @property
    def dy(self):
        return self.ly / self.ny

    @property
    def cell_area(self):
        return self.dx * self.dy

    @property
    def area(self):
        return self.lx * self.ly

    @property
    def size(self):
        return self.nx * self.ny

    def coordinates(self):
        """Cell-corner coordinates (x, y), each of shape (nx, ny)."""
        x = np.arange(self.nx) * self.dx
        y = np.arange(self.ny) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    @cached_property
    def wavenumbers(self):
        kx = 2 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)
        ky = 2 * np.pi * np.fft.rfftfreq(self.ny, d=self.dy)
        return kx[:, None], ky[None, :]

    @cached_property
    def k2(self):
        kx, ky = self.wavenumbers
        return kx**2 + ky**2

    @cached_property
    def inv_k2(self):
        """1/|k|^2 with the zero mode mapped to zero."""
        k2 = self.k2
        out = np.zeros_like(k2)
        np.divide(1.0, k2, out=out, where=k2 > 0)
        return out

    @cached_property
    def gradient_symbols(self):
        """i*k for first derivatives, Nyquist modes removed."""
        kx, ky = self.wavenumbers
        kx = kx.copy()
        ky = ky.copy()
        if self.nx % 2 == 0:
            kx[self.nx // 2] = 0.0
        if self.ny % 2 == 0:
            ky[:, -1] = 0.0
        return 1j * kx, 1j * ky

    @cached_property
    def half_weights(self):
        """Multiplicity of each rfft column in the full spectrum."""
        w = np.full(self.ny // 2 + 1, 2.0)
        w[0] = 1.0
        if self.ny % 2 == 0:
            w[-1] = 1.0
        return w[None, :]


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridMismatch(f"values shape {values.shape} != grid shape {self.grid.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values)

    def __sub__(self, other):
        _same_grid(self, other)
        return ScalarField(self.grid, self.values - other.values)

    def __add__(self, other):
        _same_grid(self, other)
        return ScalarField(self.grid, self.values + other.values)


def _same_grid(a: ScalarField, b: ScalarField):
    if a.grid != b.grid:
        raise GridMismatch(f"{a.grid} vs {b.grid}")


def _values(v):
    return v.values if isinstance(v, ScalarField) else np.asarray(v, dtype=float)


# Array-level kernels used by the steppers.

def rfft(a):
    return fft.rfft2(a)


def irfft(a_hat, grid: Grid):
    return fft.irfft2(a_hat, s=grid.shape)


def spectral_sum(grid: Grid, weights, a_hat):
    """(cell/N) * sum_k weights_k |a_hat_k|^2 over the full spectrum."""
    dens = grid.half_weights * weights * np.abs(a_hat) ** 2
    return float(np.sum(dens)) * grid.cell_area / grid.size


def grad_sq_array(grid: Grid, a):
    return spectral_sum(grid, grid.k2, rfft(a))


# Operations on ScalarField.

def mean(v) -> float:
    return float(np.mean(_values(v)))


def integral(v, grid: Grid | None = None) -> float:
    grid = grid or v.grid
    return float(np.sum(_values(v))) * grid.cell_area


def inner(u: ScalarField, v: ScalarField) -> float:
    _same_grid(u, v)
    return float(np.sum(u.values * v.values)) * u.grid.cell_area


def l2_norm(v: ScalarField) -> float:
    return float(np.sqrt(inner(v, v)))


def grad_norm(v: ScalarField) -> float:
    """||grad v|| computed spectrally."""
    return float(np.sqrt(grad_sq_array(v.grid, v.values)))


def h1_norm_sq(v: ScalarField) -> float:
    return inner(v, v) + grad_sq_array(v.grid, v.values)


def laplacian(v: ScalarField) -> ScalarField:
    return v.with_values(irfft(-v.grid.k2 * rfft(v.values), v.grid))


def _require_zero_mean(v: ScalarField):
    m = np.mean(v.values)
    scale = np.max(np.abs(v.values)) if v.values.size else 0.0
    if abs(m) > ZERO_MEAN_RTOL * scale:
        raise MeanNotZero(f"field mean {m:.3e} is not zero (sup {scale:.3e})")


def inv_laplacian_zero_mean(v: ScalarField) -> ScalarField:
    """(-Delta)^{-1} v for zero-mean v; the result has zero mean."""
    _require_zero_mean(v)
    return v.with_values(irfft(v.grid.inv_k2 * rfft(v.values), v.grid))


def star_norm(v: ScalarField) -> float:
    """||v||_* = ||grad (-Delta)^{-1} v|| on zero-mean fields."""
    _require_zero_mean(v)
    return float(np.sqrt(spectral_sum(v.grid, v.grid.inv_k2, rfft(v.values))))


def hminus1_norm(v: ScalarField) -> float:
    """||v - v_mean||_* + |v_mean|; the zero mode is simply skipped."""
    m = mean(v)
    return float(np.sqrt(spectral_sum(v.grid, v.grid.inv_k2, rfft(v.values)))) + abs(m)


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Kernel K sampled at displacements x_ij = (i dx, j dy), periodically.

    Derived constants: ``a_field`` = K*1, ``a_star`` = min a, ``a_upper`` =
    int |K| and ``b_upper`` = int |grad K|.
    """

    grid: Grid
    k_values: ScalarField
    a_field: ScalarField
    a_star: float
    a_upper: float
    b_upper: float
    k_hat: np.ndarray = field(repr=False)

    @classmethod
    def from_samples(cls, k_values: ScalarField, grad_abs: np.ndarray | None = None):
        grid = k_values.grid
        k_hat = rfft(k_values.values) * grid.cell_area
        ones = np.ones(grid.shape)
        a = irfft(k_hat * rfft(ones), grid)
        if grad_abs is None:
            gx_sym, gy_sym = grid.gradient_symbols
            gx = irfft(gx_sym * rfft(k_values.values), grid)
            gy = irfft(gy_sym * rfft(k_values.values), grid)
            grad_abs = np.hypot(gx, gy)
        return cls(
            grid=grid,
            k_values=k_values,
            a_field=ScalarField(grid, a),
            a_star=float(np.min(a)),
            a_upper=float(np.sum(np.abs(k_values.values)) * grid.cell_area),
            b_upper=float(np.sum(grad_abs) * grid.cell_area),
            k_hat=k_hat,
        )

    def is_symmetric(self, rtol=1e-12) -> bool:
        k = self.k_values.values
        flipped = np.roll(k[::-1, ::-1], shift=(1, 1), axis=(0, 1))
        return bool(np.allclose(k, flipped, rtol=rtol, atol=rtol * np.max(np.abs(k), initial=0.0)))


def convolve_array(kernel: KernelSpec, a):
    return irfft(kernel.k_hat * rfft(a), kernel.grid)


def convolve(kernel: KernelSpec, v: ScalarField) -> ScalarField:
    """(K*v)(x) = int K(x - y) v(y) dy on the torus."""
    _same_grid(kernel.k_values, v)
    return v.with_values(convolve_array(kernel, v.values))


def _displacements(grid: Grid):
    """Minimum-image displacement coordinates of every grid node."""
    x, y = grid.coordinates()
    x = np.where(x >= grid.lx / 2, x - grid.lx, x)
    y = np.where(y >= grid.ly / 2, y - grid.ly, y)
    return x, y


def make_gaussian_kernel(grid: Grid, amplitude: float, sigma: float) -> KernelSpec:
    """Gaussian amplitude*exp(-|x|^2/(2 sigma^2)), periodized over 3x3 images.

    Periodization error is O(exp(-L^2 / (8 sigma^2))).
    """
    if sigma <= 0:
        raise ResolutionError("sigma must be positive")
    if sigma < 2 * max(grid.dx, grid.dy):
        raise ResolutionError(f"sigma={sigma} under-resolved for cell size {max(grid.dx, grid.dy)}")
    x0, y0 = _displacements(grid)
    k = np.zeros(grid.shape)
    gx = np.zeros(grid.shape)
    gy = np.zeros(grid.shape)
    for ix in (-1, 0, 1):
        for iy in (-1, 0, 1):
            x = x0 + ix * grid.lx
            y = y0 + iy * grid.ly
            g = amplitude * np.exp(-(x**2 + y**2) / (2 * sigma**2))
            k += g
            gx -= g * x / sigma**2
            gy -= g * y / sigma**2
    return KernelSpec.from_samples(ScalarField(grid, k), np.hypot(gx, gy))


def gaussian_kernel_with_integral(grid: Grid, total: float, sigma: float) -> KernelSpec:
    """Gaussian kernel scaled so that its grid quadrature equals ``total``."""
    unit = make_gaussian_kernel(grid, 1.0, sigma)
    mass = unit.a_upper
    return make_gaussian_kernel(grid, total / mass, sigma)


def delta_kernel(grid: Grid) -> KernelSpec:
    k = np.zeros(grid.shape)
    k[0, 0] = 1.0 / grid.cell_area
    return KernelSpec.from_samples(ScalarField(grid, k), np.zeros(grid.shape))


def zero_kernel(grid: Grid) -> KernelSpec:
    return KernelSpec.from_samples(ScalarField.constant(grid, 0.0), np.zeros(grid.shape))


# Snapshot text format: header "nx ny Lx Ly t", then nx lines of ny values.

def write_field(path, v: ScalarField, t: float = 0.0):
    g = v.grid
    lines = [f"{g.nx} {g.ny} {g.lx!r} {g.ly!r} {float(t)!r}"]
    for row in v.values:
        lines.append(" ".join(f"{x:.17g}" for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path):
    """Return (ScalarField, t) from a snapshot file."""
    tokens = Path(path).read_text().split()
    nx, ny = int(tokens[0]), int(tokens[1])
    lx, ly, t = float(tokens[2]), float(tokens[3]), float(tokens[4])
    vals = np.array([float(s) for s in tokens[5:]])
    if vals.size != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {vals.size}")
    return ScalarField(Grid(nx, ny, lx, ly), vals.reshape(nx, ny)), t
