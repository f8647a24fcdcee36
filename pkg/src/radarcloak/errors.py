"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: validation problems exit with 2,
numerical failures with 3.
"""


class ValidationError(ValueError):
    """Invalid parameters, malformed data, or violated preconditions."""


class NoTargetError(ValidationError):
    """Radargram carries no oscillating target (all-zero slow-time variance)."""


class FormatError(ValidationError):
    """Corrupt or unrecognized file content (bad magic, truncation, ...)."""


class InfeasibleGeometryError(ValidationError):
    """Requested reflector displacement exceeds what the arm can reach."""


class NumericalError(RuntimeError):
    """Non-finite values produced during optimization or training."""
