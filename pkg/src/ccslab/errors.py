"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: :class:`InputError` exits with 1,
:class:`NumericsError` (and subclasses) with 2.  Verification failures are
data, not exceptions; the ``verify`` subcommand exits with 3 when the ledger
contains a failed check.
"""


class LabError(Exception):
    """Base class for every error raised deliberately by this package."""


class InputError(LabError, ValueError):
    """A bad argument, configuration value, or out-of-domain request."""


class NumericsError(LabError, ArithmeticError):
    """A numerical procedure produced non-finite or diverging values.

    ``step`` identifies the timestep or grid index at which the failure was
    detected, when known.
    """

    def __init__(self, message: str, *, step: int | None = None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class InversionError(NumericsError):
    """Per-step fixed-point refinement diverged during DDIM inversion."""


class DegenerateGeometryError(NumericsError):
    """Spherical interpolation inputs are numerically collinear."""
