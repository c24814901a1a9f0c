# rhlab/__init__.py
from .pipeline import AuditPipeline, AuditResponse
from .gate import GateDecision, GateRoute
from .scenario import Scenario, load_preset, parse_scenario
