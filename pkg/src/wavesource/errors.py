"""Exception hierarchy.

Each pipeline stage raises its own subclass so the CLI can map failures to
distinct exit codes.
"""

from __future__ import annotations


class WaveSourceError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class GraphValidationError(WaveSourceError, ValueError):
    """Malformed topology: self-loop, duplicate edge or out-of-range node."""


class SpectrumError(WaveSourceError):
    """Eigen-decomposition could not be carried out."""


class PlacementError(WaveSourceError):
    """Observation nodes violate an identifiability condition."""

    exit_code = 2

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report or {}


class IntegrationError(WaveSourceError):
    """The adaptive integrator gave up before reaching the final time."""

    def __init__(self, message: str, t_fail: float):
        super().__init__(f"{message} (t = {t_fail:g})")
        self.t_fail = t_fail


class WindowError(WaveSourceError, ValueError):
    """Fit window is empty, too short, or overlaps the active source."""

    exit_code = 3


class RankDeficiencyError(WaveSourceError):
    """Final-state least squares is not uniquely solvable.

    ``modes`` lists the 1-based mode indices whose eigenvectors vanish on
    every observed node.
    """

    exit_code = 3

    def __init__(self, message: str, rank: int, n_columns: int, modes: list[int]):
        super().__init__(message)
        self.rank = rank
        self.n_columns = n_columns
        self.modes = modes


class SingularSystemError(WaveSourceError):
    """A reduced adjoint system is numerically singular."""

    exit_code = 4

    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


class LocalizationError(WaveSourceError):
    """No single source row could be singled out."""

    exit_code = 4

    def __init__(self, message: str, candidates: list[int], scores: dict[int, float]):
        super().__init__(message)
        self.candidates = candidates
        self.scores = scores


class ReconstructionError(WaveSourceError):
    """Signal reconstruction preconditions failed or the solve diverged."""

    exit_code = 5
