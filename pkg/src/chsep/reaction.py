"""Reaction terms S(x, phi, g) = -m(x) phi + h(x, phi, g).

A source is admissible when m >= 0 with positive mean and |h| <= h_bar is
strictly dominated by that mean.  This is what lets the spatial average of
phi leave the pure phase -1 at a linear rate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CompatibilityError, DomainError
from .field_ops import Grid, ScalarField

OONO = "oono"
INPAINTING = "inpainting"
TUMOR = "tumor"
CUSTOM = "custom"

PHI_SLACK = 1e-12


def tumor_interpolant(r):
    """Truncation with value 0 at the healthy phase -1 and 1 at the tumor phase."""
    return np.clip(0.5 * (1.0 + np.asarray(r, dtype=float)), 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class ReactionSpec:
    m_field: ScalarField
    kind: str
    h_bound: float
    c: float = 0.0
    c_image: ScalarField | None = None
    mask: ScalarField | None = None
    delta_n: float = 0.0
    h_func: Callable | None = field(default=None, repr=False)
    lipschitz: float | None = None

    def __post_init__(self):
        m = self.m_field.values
        if np.any(m < 0):
            raise CompatibilityError("m must be nonnegative")
        if self.m_mean <= 0:
            raise CompatibilityError("m must have positive mean")
        if self.h_bound < 0:
            raise CompatibilityError("h_bound must be nonnegative")
        if not self.h_bound < self.m_mean:
            raise CompatibilityError(
                f"need h_bar < m_mean, got h_bar={self.h_bound!r}, m_mean={self.m_mean!r}"
            )

    @property
    def grid(self) -> Grid:
        return self.m_field.grid

    @property
    def m_bar(self) -> float:
        return float(np.max(self.m_field.values))

    @property
    def m_mean(self) -> float:
        return float(np.mean(self.m_field.values))

    @property
    def c0(self) -> float:
        """(m_mean - h_bar) / m_bar, the detachment rate constant."""
        return (self.m_mean - self.h_bound) / self.m_bar

    def h_array(self, phi, aux=None):
        if self.kind == OONO:
            return np.full_like(phi, self.m_bar * self.c)
        if self.kind == INPAINTING:
            return self.m_field.values * self.c_image.values
        if self.kind == TUMOR:
            if aux is None:
                raise ValueError("tumor source needs the nutrient field")
            return np.maximum(aux - self.delta_n, 0.0) * tumor_interpolant(phi)
        return np.asarray(self.h_func(phi, aux), dtype=float)

    def source_array(self, phi, aux=None):
        return -self.m_field.values * phi + self.h_array(phi, aux)


def make_oono(m: float, c: float, grid: Grid) -> ReactionSpec:
    """S(phi) = -m (phi - c), i.e. constant m and h = m c."""
    if m <= 0:
        raise CompatibilityError("m must be positive")
    if not abs(c) < 1:
        raise CompatibilityError(f"Oono needs |c| < 1, got {c}")
    return ReactionSpec(ScalarField.constant(grid, m), OONO, h_bound=m * abs(c), c=float(c))


def make_inpainting(mask: ScalarField, c_image: ScalarField, m_bar: float) -> ReactionSpec:
    """S = -m_bar chi_U (phi - c(x)) with U the undamaged region (mask == 1)."""
    vals = mask.values
    if not np.all((vals == 0) | (vals == 1)):
        raise CompatibilityError("mask must take values in {0, 1}")
    frac = float(np.mean(vals))
    if frac in (0.0, 1.0):
        raise CompatibilityError("mask must cover a proper, nonempty part of the domain")
    if m_bar <= 0:
        raise CompatibilityError("m_bar must be positive")
    c_sup = float(np.max(np.abs(c_image.values)))
    if c_sup > 1:
        raise CompatibilityError("image values must lie in [-1, 1]")
    if not c_sup < frac:
        raise CompatibilityError(f"need sup|c| < |U|/|Omega| = {frac}, got {c_sup}")
    return ReactionSpec(
        ScalarField(mask.grid, m_bar * vals), INPAINTING, h_bound=m_bar * c_sup,
        c_image=c_image, mask=mask,
    )


def make_tumor(m: float, delta_n: float, grid: Grid) -> ReactionSpec:
    """S(phi, n) = -m phi + (n - delta_n)_+ h(phi), for nutrients 0 <= n <= 1."""
    if not 0.0 <= delta_n <= 1.0:
        raise CompatibilityError("delta_n must lie in [0, 1]")
    if m <= 0:
        raise CompatibilityError("m must be positive")
    return ReactionSpec(
        ScalarField.constant(grid, m), TUMOR, h_bound=max(1.0 - delta_n, 0.0),
        delta_n=float(delta_n), lipschitz=0.5,
    )


def make_custom(m_field: ScalarField, h: Callable, h_bound: float,
                lipschitz: float | None = None) -> ReactionSpec:
    """``h(phi, aux)`` is called on arrays; its declared bound is trusted."""
    return ReactionSpec(m_field, CUSTOM, h_bound=float(h_bound), h_func=h, lipschitz=lipschitz)


def eval_S(spec: ReactionSpec, phi: ScalarField, g_or_n: ScalarField | None = None) -> ScalarField:
    if np.any(np.abs(phi.values) > 1.0 + PHI_SLACK):
        raise DomainError("phi must satisfy |phi| <= 1")
    aux = None if g_or_n is None else g_or_n.values
    return phi.with_values(spec.source_array(phi.values, aux))


def compatibility_margin(spec: ReactionSpec) -> float:
    return spec.m_mean - spec.h_bound
