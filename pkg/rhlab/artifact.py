# rhlab/artifact.py
"""
Run artifacts on disk.

    scenario.scn       the scenario actually run (overrides applied)
    trajectory.bin     little-endian float64 snapshots; per snapshot the lattice
                       in row-major order, per point the lower-triangle metric
                       components (numpy.tril_indices order) followed by u
    trajectory.json    header for trajectory.bin (grid, times, layout)
    monitor.csv        one row per snapshot, columns listed in the comment line
    report.json        schema "rhlab.report/1"

verify() recomputes every audit from these files alone and compares the
result with report.json.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .audit import AuditSettings, RunAudit, finish_audit, localize
from .errors import ArtifactError, LabError
from .flow import FlowState, Trajectory, snapshot_norms
from .grid_fields import MetricField, ScalarField, build_grid
from .monitor import MonitorSample, ladder_size
from .scenario import Scenario, parse_scenario, scenario_dict, scenario_hash, serialize_scenario
from .verifier import AuditVerifier, VerifyResult

logger = logging.getLogger(__name__)

REPORT_SCHEMA = "rhlab.report/1"
TRAJECTORY_SCHEMA = "rhlab.trajectory/1"
MONITOR_VERSION = "rhlab monitor v1"

SCENARIO_FILE = "scenario.scn"
TRAJECTORY_BIN = "trajectory.bin"
TRAJECTORY_HEADER = "trajectory.json"
MONITOR_CSV = "monitor.csv"
REPORT_JSON = "report.json"

STATUS_OK = "ok"
STATUS_FAILED = "failed"

# CSV column -> MonitorSample field; T1..Tm are inserted after B2
_SAMPLE_COLUMNS = (
    ("A1", "A1"), ("A2", "A2"), ("A3", "A3"), ("A4", "A4"), ("B1", "B1"), ("B2", "B2"),
)
_TAIL_COLUMNS = (
    ("Tp", "Tp"), ("Tpm1", "Tpm1"), ("S", "S"), ("S_tilde", "S_tilde"), ("RicW", "ric_weighted"),
    ("VolOmega", "vol_omega"), ("VolHalf", "vol_half"), ("PhiMass", "phi_mass"),
    ("GradPhiSup", "grad_phi_sup"), ("RmPOmega", "rm_p_omega"), ("LHS_ball", "lhs_ball"),
)
SERIES_PREFIX = "LHS_ball_p"


@dataclass(frozen=True)
class RunArtifact:
    directory: Path
    status: str

    @property
    def report_path(self) -> Path:
        return self.directory / REPORT_JSON

    @property
    def monitor_path(self) -> Path:
        return self.directory / MONITOR_CSV

    @property
    def trajectory_path(self) -> Path:
        return self.directory / TRAJECTORY_BIN


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _jsonable(obj: object) -> object:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _require(directory: Path, names: Sequence[str]) -> None:
    missing = [n for n in names if not (directory / n).is_file()]
    if missing:
        raise ArtifactError(f"artifact {directory} is incomplete: missing {', '.join(missing)}", missing)


# ---------------------------------------------------------------------------
# trajectory

def write_trajectory(directory: Path, trajectory: Trajectory, status: str = STATUS_OK) -> None:
    first = trajectory.snapshots[0].g
    grid = first.grid
    n = grid.dim
    rows, cols = np.tril_indices(n)
    with open(directory / TRAJECTORY_BIN, "wb") as fh:
        for s in trajectory.snapshots:
            block = np.concatenate([s.g.components[rows, cols], s.u.values[np.newaxis]], axis=0)
            fh.write(np.ascontiguousarray(np.moveaxis(block, 0, -1), dtype="<f8").tobytes())
    header = {
        "schema": TRAJECTORY_SCHEMA,
        "dim": n,
        "extents": list(grid.extents),
        "resolutions": list(grid.shape),
        "components": [f"g{i}{j}" for i, j in zip(rows, cols)] + ["u"],
        "layout": "little-endian float64; snapshot, lattice (row-major), component",
        "times": [float(t) for t in trajectory.times],
        "step_count": trajectory.step_count,
        "dt_max": trajectory.dt_max,
        "status": status,
    }
    (directory / TRAJECTORY_HEADER).write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")


def read_trajectory(directory: Union[str, Path]) -> Trajectory:
    directory = Path(directory)
    _require(directory, (TRAJECTORY_BIN, TRAJECTORY_HEADER))
    header = json.loads((directory / TRAJECTORY_HEADER).read_text(encoding="utf-8"))
    if header.get("schema") != TRAJECTORY_SCHEMA:
        raise ArtifactError(f"unknown trajectory schema {header.get('schema')!r}")
    grid = build_grid(header["dim"], header["extents"], header["resolutions"])
    n = grid.dim
    m = n * (n + 1) // 2
    times = header["times"]
    raw = np.frombuffer((directory / TRAJECTORY_BIN).read_bytes(), dtype="<f8")
    expected = len(times) * grid.size * (m + 1)
    if raw.size != expected:
        raise ArtifactError(f"{TRAJECTORY_BIN} holds {raw.size} values, header implies {expected}")
    data = np.moveaxis(raw.reshape((len(times),) + grid.shape + (m + 1,)), -1, 1)
    rows, cols = np.tril_indices(n)
    snapshots = []
    for t, block in zip(times, data):
        comps = np.empty((n, n) + grid.shape)
        comps[rows, cols] = block[:m]
        comps[cols, rows] = block[:m]
        snapshots.append(FlowState(t=float(t), g=MetricField.from_components(grid, comps),
                                   u=ScalarField(grid, np.array(block[m]))))
    return Trajectory(snapshots, int(header.get("step_count", 0)), float(header.get("dt_max", 0.0)))


# ---------------------------------------------------------------------------
# monitor CSV

def monitor_columns(p: float, p_list: Sequence[float]) -> List[str]:
    names = ["t"] + [c for c, _ in _SAMPLE_COLUMNS]
    names += [f"T{k}" for k in range(1, ladder_size(p) + 1)]
    names += [c for c, _ in _TAIL_COLUMNS]
    names += ["U"] + [f"{SERIES_PREFIX}{q:g}" for q in p_list]
    return names


def write_monitor_csv(directory: Path, samples: Sequence[MonitorSample], U: np.ndarray,
                      series: Mapping[float, Tuple[np.ndarray, np.ndarray]], digest: str) -> None:
    p = samples[0].p
    p_list = sorted(series)
    names = monitor_columns(p, p_list)
    with open(directory / MONITOR_CSV, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {MONITOR_VERSION}; scenario {digest}; p={p:g}; columns: {' '.join(names)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for k, s in enumerate(samples):
            row = [s.t] + [getattr(s, f) for _, f in _SAMPLE_COLUMNS] + list(s.T)
            row += [getattr(s, f) for _, f in _TAIL_COLUMNS]
            row += [U[k]] + [series[q][0][k] for q in p_list]
            writer.writerow([_fmt(v) for v in row])


def read_monitor_csv(directory: Union[str, Path], p: float) -> Tuple[List[MonitorSample], np.ndarray,
                                                                      Dict[float, Tuple[np.ndarray, np.ndarray]]]:
    directory = Path(directory)
    _require(directory, (MONITOR_CSV,))
    with open(directory / MONITOR_CSV, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if not rows:
        raise ArtifactError(f"{MONITOR_CSV} has no samples")
    m = ladder_size(p)
    needed = ["t", "U"] + [c for c, _ in _SAMPLE_COLUMNS + _TAIL_COLUMNS] + [f"T{k}" for k in range(1, m + 1)]
    absent = [c for c in needed if c not in rows[0]]
    if absent:
        raise ArtifactError(f"{MONITOR_CSV} lacks columns {', '.join(absent)}", absent)
    try:
        samples = [
            MonitorSample(
                t=float(r["t"]),
                p=float(p),
                T=tuple(float(r[f"T{k}"]) for k in range(1, m + 1)),
                **{f: float(r[c]) for c, f in _SAMPLE_COLUMNS + _TAIL_COLUMNS},
            )
            for r in rows
        ]
        U = np.array([float(r["U"]) for r in rows])
        vol_half = np.array([s.vol_half for s in samples])
        series = {
            float(name[len(SERIES_PREFIX):]): (np.array([float(r[name]) for r in rows]), vol_half)
            for name in rows[0] if name.startswith(SERIES_PREFIX)
        }
    except (TypeError, ValueError) as err:
        raise ArtifactError(f"{MONITOR_CSV} is malformed: {err}") from err
    return samples, U, series


# ---------------------------------------------------------------------------
# report

def build_report(scenario: Scenario, status: str, run: Optional[RunAudit], verify: Optional[VerifyResult],
                 guard_code: Optional[str] = None, reason: Optional[str] = None) -> Dict[str, object]:
    report: Dict[str, object] = {
        "schema": REPORT_SCHEMA,
        "scenario_name": scenario.name,
        "scenario_hash": scenario_hash(scenario),
        "scenario": scenario_dict(scenario),
        "status": status,
    }
    if verify is not None:
        guard_code = guard_code or verify.guard_code
        reason = reason or verify.reason
    report["guard_code"] = guard_code
    report["reason"] = reason
    if run is not None:
        report.update(run.sections())
        report["verdicts"] = run.verdicts()
    return report


def write_report(directory: Path, report: Mapping[str, object]) -> None:
    text = json.dumps(report, indent=2, default=_jsonable)
    (directory / REPORT_JSON).write_text(text + "\n", encoding="utf-8")


def read_report(directory: Union[str, Path]) -> Dict[str, object]:
    directory = Path(directory)
    _require(directory, (REPORT_JSON,))
    try:
        report = json.loads((directory / REPORT_JSON).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ArtifactError(f"{REPORT_JSON} is not valid JSON: {err}") from err
    if report.get("schema") != REPORT_SCHEMA:
        raise ArtifactError(f"unknown report schema {report.get('schema')!r}")
    return report


def persist_run(directory: Union[str, Path], scenario: Scenario, trajectory: Trajectory,
                run: Optional[RunAudit], report: Mapping[str, object]) -> RunArtifact:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / SCENARIO_FILE).write_text(serialize_scenario(scenario), encoding="utf-8")
    write_trajectory(directory, trajectory, str(report["status"]))
    if run is not None:
        write_monitor_csv(directory, run.samples, run.monitor.U, run.series, str(report["scenario_hash"]))
    write_report(directory, report)
    logger.info("artifact written to %s (%s)", directory, report["status"])
    return RunArtifact(directory, str(report["status"]))


# ---------------------------------------------------------------------------
# verify

def recompute(directory: Union[str, Path]) -> Tuple[Dict[str, object], Scenario, RunAudit, np.ndarray]:
    """Report, scenario, audit recomputed from the files and the U column as stored."""
    directory = Path(directory)
    report = read_report(directory)
    _require(directory, (SCENARIO_FILE,))
    scenario = parse_scenario(directory / SCENARIO_FILE)
    scenario = replace(scenario, name=str(report.get("scenario_name", scenario.name)))
    trajectory = read_trajectory(directory)
    norms = snapshot_norms(trajectory)
    settings = AuditSettings.from_scenario(scenario)
    K_audit, data, flow = localize(trajectory, norms, settings)
    samples, U, series = read_monitor_csv(directory, settings.p)
    if len(samples) != len(trajectory):
        raise ArtifactError(f"{MONITOR_CSV} has {len(samples)} rows for {len(trajectory)} snapshots")
    run = finish_audit(trajectory, norms, settings, K_audit, data, flow, samples, series)
    return report, scenario, run, U


def verify(directory: Union[str, Path], verifier: Optional[AuditVerifier] = None) -> VerifyResult:
    """
    Re-check a run from its artifact without re-simulating.
    Fails on the first recomputed number that differs from report.json,
    then on the first failing verdict.
    """
    verifier = verifier or AuditVerifier()
    directory = Path(directory)
    try:
        report = read_report(directory)
        status = str(report.get("status"))
        if status.startswith("singular"):
            return verifier.stop("FLOW_SINGULAR", "flow", f"run ended {status}: {report.get('reason')}")
        report, scenario, run, U = recompute(directory)
    except LabError as err:
        return verifier.stop(err.guard_code, "artifact", str(err))

    if scenario_hash(scenario) != report.get("scenario_hash"):
        return verifier.stop("VERIFY_FAIL", "scenario",
                              f"scenario hash {scenario_hash(scenario)[:12]} does not match report")
    stored = {k: report.get(k) for k in ("K_audit", "flow", "monitor", "extension", "verdicts")}
    fresh = dict(run.sections())
    fresh["verdicts"] = run.verdicts()
    result = verifier.compare(stored, fresh)
    if not result.ok:
        return result
    if not np.allclose(U, run.monitor.U, rtol=1e-9, atol=0.0):
        k = int(np.argmax(~np.isclose(U, run.monitor.U, rtol=1e-9, atol=0.0)))
        return verifier.stop("VERIFY_FAIL", "gronwall",
                              f"gronwall: stored U at row {k} = {U[k]!r}, recomputed {run.monitor.U[k]!r}")
    return verifier.verify(run.verdicts(), run.reasons())
