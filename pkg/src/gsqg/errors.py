"""Exception hierarchy shared by all modules.

Every error raised on purpose by the package derives from :class:`GsqgError`
and carries an ``exit_code`` used by the command-line front end.
"""

from __future__ import annotations

from typing import Any


class GsqgError(Exception):
    exit_code = 1


class ParameterError(GsqgError, ValueError):
    """An argument is outside its admissible range."""

    exit_code = 2


class ScenarioError(ParameterError):
    """A scenario document failed validation; ``path`` names the offending key."""

    def __init__(self, message: str, path: str = "") -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class GeometryError(GsqgError):
    exit_code = 3


class ResolutionError(GeometryError):
    """Too few nodes, degenerate edges or badly graded node spacing."""


class GraphWindowError(GeometryError):
    def __init__(self, message: str, admissible: float) -> None:
        self.admissible = admissible
        super().__init__(f"{message} (largest admissible window {admissible:.6g})")


class DomainError(GsqgError, ValueError):
    exit_code = 3


class AccuracyError(GsqgError):
    """Quadrature or extrapolation did not reach its target."""

    exit_code = 4

    def __init__(self, message: str, estimate: float = float("nan")) -> None:
        self.estimate = estimate
        super().__init__(f"{message} (achieved error estimate {estimate:.3e})")


class PrecisionError(AccuracyError):
    pass


class InsufficientDataError(GsqgError, ValueError):
    exit_code = 4


class UnsupportedModeError(GsqgError):
    exit_code = 2


class StiffnessError(GsqgError):
    exit_code = 4


class SplashDetected(GsqgError):
    """Two boundary points coincide or boundaries became entangled.

    ``witness`` holds whatever identifies the offending pair (a
    ``DistanceWitness`` or a pair of segment indices).
    """

    exit_code = 5

    def __init__(self, message: str, witness: Any = None, step_index: int | None = None) -> None:
        self.witness = witness
        self.step_index = step_index
        super().__init__(message)


class CheckpointError(GsqgError):
    exit_code = 2


class MigrationError(CheckpointError):
    pass


class IntegrityError(CheckpointError):
    pass
