"""Exception and warning types shared by every stage.

The CLI maps them to exit codes: ``ConfigError`` -> 2, ``NumericalError`` -> 3.
"""

from __future__ import annotations


class ShbError(Exception):
    """Base class for all simulation and analysis failures."""


class ConfigError(ShbError, ValueError):
    """Invalid parameters, scenario files or inputs."""


class DegenerateInputError(ConfigError):
    """Inputs that leave nothing to compute (empty site list, no peak, ...)."""


class DimensionError(ConfigError):
    """Hilbert-space size beyond the dimension guard."""


class NumericalError(ShbError, ArithmeticError):
    """A computation failed or produced unusable numbers."""


class SingularityError(NumericalError):
    """Division by a vanishing quantity (zero distance, omega_I = 0, kappa_i = kappa_c)."""


class NonFiniteError(NumericalError):
    """NaN or inf in a matrix or result."""


class FitError(NumericalError):
    """Least-squares fit did not converge."""


class DegenerateFitError(FitError):
    """Data carry no information about the model (e.g. constant decay)."""


def with_context(exc: ShbError, **context) -> ShbError:
    """Return a copy of ``exc`` whose message carries ``key=value`` context."""
    tags = ", ".join(f"{k}={v}" for k, v in context.items())
    wrapped = type(exc)(f"{exc} [{tags}]")
    wrapped.context = {**getattr(exc, "context", {}), **context}
    return wrapped


# ── Warnings ──────────────────────────────────────────────────────────────────

class ShbWarning(UserWarning):
    pass


class DegeneracyWarning(ShbWarning):
    """Accidental zero nuclear splitting; eigenbasis picked by continuity."""


class ExtrapolationWarning(ShbWarning):
    """Reference curve evaluated outside its fitted range."""


class DegenerateFitWarning(ShbWarning):
    """Fitted time constants too close to be distinguished."""


class ZeroTemperatureWarning(ShbWarning):
    """Rate evaluated in the T -> 0 limit."""


class InversionWarning(ShbWarning):
    """Linearized |S11|^2 inversion is ill-conditioned at some frequencies."""
