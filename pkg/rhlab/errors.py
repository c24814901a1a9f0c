# rhlab/errors.py
from __future__ import annotations

from typing import Optional, Sequence, Tuple


class LabError(Exception):
    """
    Root of every failure raised by the lab.
    guard_code travels into AuditResponse so a failed run is a STOP state,
    not a traceback.
    """

    guard_code = "LAB_ERROR"


class GridError(LabError):
    guard_code = "GRID_INVALID"


class FieldError(LabError):
    guard_code = "FIELD_INVALID"


class MetricNotSPDError(FieldError):
    guard_code = "METRIC_NOT_SPD"

    def __init__(self, message: str, index: Optional[Tuple[int, ...]] = None) -> None:
        super().__init__(message)
        self.index = index


class FlowSingularityError(LabError):
    guard_code = "FLOW_SINGULAR"

    def __init__(self, t: float, index: Optional[Tuple[int, ...]], message: str = "") -> None:
        super().__init__(message or f"metric lost positive-definiteness at t={t:.6g}, point {index}")
        self.t = t
        self.index = index
        # filled by evolve() with the snapshots taken before the failure
        self.trajectory = None


class EmptyBallError(LabError):
    guard_code = "BALL_EMPTY"


class MonitorError(LabError):
    guard_code = "MONITOR_INVALID"


class ScenarioError(LabError):
    guard_code = "SCENARIO_INVALID"

    def __init__(self, key: str, constraint: str) -> None:
        super().__init__(f"{key} {constraint}")
        self.key = key
        self.constraint = constraint


class ArtifactError(LabError):
    guard_code = "ARTIFACT_INVALID"

    def __init__(self, message: str, missing: Sequence[str] = ()) -> None:
        super().__init__(message)
        self.missing = tuple(missing)
