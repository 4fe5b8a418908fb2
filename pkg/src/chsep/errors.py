"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class CompatibilityError(ValueError):
    """A reaction term violates the compatibility condition |h| <= h_bar < m_mean."""


class MeanNotZero(ValueError):
    """An operator defined on zero-mean fields received a field with nonzero mean."""


class GridMismatch(ValueError):
    pass


class ResolutionError(ValueError):
    pass


class SearchFailed(RuntimeError):
    pass


class A4Violated(ValueError):
    """Kernel and potential do not satisfy a_* + F'' >= C0 > 0."""


class FitDegenerate(ValueError):
    pass


class UnknownPreset(KeyError):
    pass


class ConfigError(ValueError):
    pass


class SolverError(RuntimeError):
    """Base class for failures during time stepping; carries the failing time."""

    def __init__(self, message, t=None):
        self.t = t
        if t is not None:
            message = f"{message} (t={t:.6g})"
        super().__init__(message)


class NewtonDiverged(SolverError):
    pass


class BoundsBreached(SolverError):
    pass


class NutrientBoundsBreached(SolverError):
    pass
