# rhlab/gate.py
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .errors import LabError
from .flow import FlowState
from .scenario import MetricKind, Scenario, initial_state


class GateRoute(str, Enum):
    RUNNABLE = "RUNNABLE"      # symmetric initial data, SPD metric -> evolve
    UNTRUSTED = "UNTRUSTED"    # STOP


@dataclass(frozen=True)
class GateDecision:
    route: GateRoute
    state: Optional[FlowState] = None
    guard_code: Optional[str] = None
    guard_state: Optional[str] = None
    guard_action: Optional[str] = None
    reason: Optional[str] = None


class ScenarioGate:
    """
    Admits only initial data the explicit integrator is built for:
    diagonal metrics and a field depending on the first coordinate,
    with the initial metric positive-definite at every lattice point.
    """

    def decide(self, scenario: Scenario) -> GateDecision:
        if scenario.metric.kind is MetricKind.CONFORMAL and scenario.grid.dim != 2:
            return self._stop("SYMMETRY_UNSUPPORTED", "conformal initial metrics are two-dimensional")
        try:
            state = initial_state(scenario)
        except LabError as err:
            return self._stop(err.guard_code, f"initial data rejected: {err}")
        return GateDecision(route=GateRoute.RUNNABLE, state=state)

    def _stop(self, code: str, reason: str) -> GateDecision:
        return GateDecision(
            route=GateRoute.UNTRUSTED,
            guard_code=code,
            guard_state=code,
            guard_action="STOP",
            reason=reason,
        )
