"""Exception types shared across the pipeline.

Exit-code policy for the CLI: validation problems map to 1, simulation
infeasibility to 2, I/O failures to 3.
"""


class ErevTuneError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class TripParseError(ErevTuneError):
    """A trip file cell could not be parsed. Carries the 1-based row index."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class TripValidationError(ErevTuneError):
    """Trip content violates a physical-plausibility rule."""


class EmptyInputError(ErevTuneError):
    """A trip file contained no data rows."""


class PreprocessError(ErevTuneError):
    """Signal reconstruction failed (e.g. distance rescaling did not converge)."""

    def __init__(self, message: str, best_error_m: float | None = None):
        super().__init__(message)
        self.best_error_m = best_error_m


class PowerLimitError(ErevTuneError):
    """Demanded battery power exceeds what the pack can deliver.

    The open-circuit voltage and internal resistance bound deliverable power
    at V_oc^2 / (4 R0); beyond it the discharge current has no real solution.
    """

    exit_code = 2

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class InfeasibleTripError(ErevTuneError):
    """No setpoint keeps the minimum state of charge inside the target band."""

    exit_code = 2


class SearchError(ErevTuneError):
    """Setpoint search failed to converge."""

    exit_code = 2


class StoreError(ErevTuneError):
    """Posterior store I/O failure (lock contention, corrupt document, ...)."""

    exit_code = 3


class ConfigError(ErevTuneError):
    """Configuration file is missing, unreadable, or inconsistent."""
