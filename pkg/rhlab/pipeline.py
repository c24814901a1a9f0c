# rhlab/pipeline.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

from .artifact import STATUS_FAILED, STATUS_OK, RunArtifact, build_report, persist_run
from .audit import AuditSettings, audit_run
from .curvature import PointwiseNorms, curvature_pack
from .errors import FlowSingularityError, LabError
from .explainer import AuditExplainer
from .flow import FlowState, evolve
from .gate import GateRoute, ScenarioGate
from .scenario import Scenario, scenario_hash, step_control
from .verifier import AuditVerifier

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AuditResponse:
    ok: bool
    status: str = ""
    text: str = ""
    guard_code: Optional[str] = None
    guard_state: Optional[str] = None
    guard_action: Optional[str] = None
    route: Optional[str] = None
    reason: Optional[str] = None
    artifact: Optional[RunArtifact] = None


class AuditPipeline:
    """
    gate -> evolve -> audit -> verify -> persist -> explain.
    - STOP is a state (guard_code propagates)
    - every run that got past the gate leaves an artifact, failed or not
    """

    def __init__(self) -> None:
        self.gate = ScenarioGate()
        self.verifier = AuditVerifier()
        self.explainer = AuditExplainer()

    def run(self, scenario: Scenario, out_dir: Union[str, Path]) -> AuditResponse:
        decision = self.gate.decide(scenario)
        if decision.route == GateRoute.UNTRUSTED:
            return AuditResponse(
                ok=False,
                status="rejected",
                text=self.explainer.explain_stop(scenario.name, decision.guard_code, decision.reason).text,
                guard_code=decision.guard_code,
                guard_state=decision.guard_state,
                guard_action=decision.guard_action,
                route=decision.route.value,
                reason=decision.reason,
            )
        route = decision.route.value

        norms: List[PointwiseNorms] = []

        def observe(state: FlowState) -> None:
            norms.append(curvature_pack(state.g, state.u).norms())

        try:
            trajectory = evolve(decision.state, step_control(scenario), observers=[observe])
        except FlowSingularityError as err:
            return self._singular(scenario, out_dir, err, route)

        try:
            run = audit_run(trajectory, norms, AuditSettings.from_scenario(scenario))
        except LabError as err:
            return self._stop(scenario, err.guard_code, f"audit failed: {err}", route)
        except Exception as e:
            return self._stop(scenario, "AUDIT_ERROR", f"audit exception: {e!r}", route)

        verify_result = self.verifier.verify(run.verdicts(), run.reasons())
        status = STATUS_OK if verify_result.ok else STATUS_FAILED
        artifact = persist_run(out_dir, scenario, trajectory, run,
                               build_report(scenario, status, run, verify_result))
        text = self.explainer.explain(scenario.name, scenario_hash(scenario), run).text
        return AuditResponse(
            ok=verify_result.ok,
            status=status,
            text=text,
            guard_code=verify_result.guard_code,
            guard_state=verify_result.guard_state,
            guard_action=verify_result.guard_action,
            route=route,
            reason=verify_result.reason,
            artifact=artifact,
        )

    def _singular(self, scenario: Scenario, out_dir: Union[str, Path], err: FlowSingularityError,
                  route: str) -> AuditResponse:
        status = f"singular at t={err.t:.6g}"
        artifact = None
        if err.trajectory is not None and len(err.trajectory):
            report = build_report(scenario, status, None, None, err.guard_code, str(err))
            artifact = persist_run(out_dir, scenario, err.trajectory, None, report)
        return AuditResponse(
            ok=False,
            status=status,
            text=self.explainer.explain_stop(scenario.name, err.guard_code, str(err)).text,
            guard_code=err.guard_code,
            guard_state=err.guard_code,
            guard_action="STOP",
            route=route,
            reason=str(err),
            artifact=artifact,
        )

    def _stop(self, scenario: Scenario, code: str, reason: str, route: str) -> AuditResponse:
        logger.error("%s: %s", scenario.name, reason)
        return AuditResponse(
            ok=False,
            status="error",
            text=self.explainer.explain_stop(scenario.name, code, reason).text,
            guard_code=code,
            guard_state=code,
            guard_action="STOP",
            route=route,
            reason=reason,
        )
