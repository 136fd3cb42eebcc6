"""Exception types raised across the package."""

from __future__ import annotations


class DroneParkingError(Exception):
    """Base class for all package errors."""


class OffStageError(DroneParkingError):
    """A drone body lies entirely outside the stage."""


class InfeasibleActionError(DroneParkingError):
    """An action breaks the speed or acceleration limit.

    ``step_index`` is set when the failure happened inside a plan.
    """

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message if step_index is None else f"step {step_index}: {message}")
        self.step_index = step_index


class HistoryTooShortError(DroneParkingError):
    """A pose history has fewer than two poses."""


class PlannerCapacityError(DroneParkingError):
    """No admissible target was reached for a drone within the planning budget."""

    def __init__(self, drone_id: int, message: str):
        super().__init__(f"drone {drone_id}: {message}")
        self.drone_id = drone_id


class EmptyOccupancyError(DroneParkingError):
    """Every occupancy field is empty, so no incident end time exists."""


class ScenarioError(DroneParkingError):
    """A scenario file is malformed or inconsistent."""
