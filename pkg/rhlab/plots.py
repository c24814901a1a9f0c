# rhlab/plots.py
from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Union

import matplotlib

matplotlib.use("Agg")  # files only, no display
import matplotlib.pyplot as plt
import numpy as np

from .artifact import MONITOR_CSV, read_monitor_csv, read_report
from .errors import ArtifactError
from .gronwall import ComparisonProblem, comparison_bound
from .monitor import FITTED_INEQUALITIES, InequalityReport, column, fit_inequality_constant

logger = logging.getLogger(__name__)

PLOT_DIR = "plots"
HASH_SALT = "rhlab"


def _tsv(path: Path, t: np.ndarray, values: np.ndarray) -> None:
    lines = ["t\tvalue"] + [f"{a:.17g}\t{b:.17g}" for a, b in zip(t, values)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def fitted_envelope(report: InequalityReport, p: float) -> Optional[np.ndarray]:
    """Right-hand side of the audited inequality at the fitted constant."""
    C = report.C_fit
    if not math.isfinite(C):
        return None
    if report.id == "hessian_top":
        b = report.basis
        return C * b["X"] + C ** (p - 1.0) * b["T1"] - C * b["slope"]
    return C * sum(report.basis.values())


def _inequality_svg(path: Path, report: InequalityReport, p: float) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(report.times, report.lhs, "o-", label="LHS")
    rhs = fitted_envelope(report, p)
    if rhs is not None:
        ax.plot(report.times, rhs, "s--", label=f"RHS, C = {report.C_fit:.4g}")
    ax.set_xlabel("t")
    ax.set_title(report.id)
    ax.legend()
    _save(fig, path)


def _gronwall_svg(path: Path, t: np.ndarray, U: np.ndarray, envelopes: Dict[str, np.ndarray]) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, U, "o-", label="U(t)")
    for label, bound in envelopes.items():
        ax.plot(t, bound, "--", label=label)
    ax.set_xlabel("t")
    ax.set_title("gronwall")
    ax.legend()
    _save(fig, path)


def emit_plots(artifact: Union[str, Path]) -> List[Path]:
    """
    TSV (t, value) per monitor column, an SVG per fitted inequality and
    U(t) against its comparison envelopes. Repeated calls write identical bytes.
    """
    artifact = Path(artifact)
    report = read_report(artifact)
    if "monitor" not in report:
        raise ArtifactError(f"artifact {artifact} has no monitor series (status {report.get('status')})",
                            [MONITOR_CSV])
    monitor = report["monitor"]
    p = float(monitor["p"])
    samples, U, series = read_monitor_csv(artifact, p)
    out_dir = artifact / PLOT_DIR
    out_dir.mkdir(exist_ok=True)
    matplotlib.rcParams["svg.hashsalt"] = HASH_SALT

    written: List[Path] = []
    t = column(samples, "t")
    tables = {name: column(samples, name) for name in (
        "A1", "A2", "A3", "A4", "B1", "B2", "Tp", "Tpm1", "S", "S_tilde", "ric_weighted",
        "vol_omega", "vol_half", "phi_mass", "grad_phi_sup", "rm_p_omega", "lhs_ball")}
    for k in range(len(samples[0].T)):
        tables[f"T{k + 1}"] = np.array([s.T[k] for s in samples])
    tables["U"] = U
    for q, (lhs, _) in sorted(series.items()):
        tables[f"lhs_ball_p{q:g}"] = lhs
    for name, values in tables.items():
        path = out_dir / f"{name}.tsv"
        _tsv(path, t, values)
        written.append(path)

    K, L = float(report["K_audit"]), float(report["flow"]["L"])
    for ineq in FITTED_INEQUALITIES:
        path = out_dir / f"{ineq}.svg"
        _inequality_svg(path, fit_inequality_constant(ineq, samples, K, L), p)
        written.append(path)

    F = column(samples, "vol_omega")
    envelopes = {}
    pairs = {"Lambda": (monitor["gamma"]["lambda1"], monitor["gamma"]["lambda2"]),
             "fitted Lambda": (monitor["fitted_lambdas"]["lambda1"], monitor["fitted_lambdas"]["lambda2"])}
    for label, (lam1, lam2) in pairs.items():
        if math.isfinite(lam1) and math.isfinite(lam2):
            with np.errstate(over="ignore", invalid="ignore"):
                bound = comparison_bound(ComparisonProblem(t, U, lam1, lam2, F))
            envelopes[label] = np.where(np.isfinite(bound), bound, np.nan)
    path = out_dir / "gronwall.svg"
    _gronwall_svg(path, t, U, envelopes)
    written.append(path)
    logger.info("wrote %d plot files to %s", len(written), out_dir)
    return written
