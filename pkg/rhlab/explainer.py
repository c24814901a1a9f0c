# rhlab/explainer.py
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

from .audit import RunAudit

BANNER = "=" * 70


@dataclass(frozen=True)
class Explained:
    text: str


def _num(x: Optional[float]) -> str:
    if x is None:
        return "-"
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return f"{x:.4g}"


class AuditExplainer:
    """One-screen verdict table for a finished run."""

    def explain(self, name: str, scenario_hash: str, run: RunAudit,
                verdicts: Optional[Mapping[str, bool]] = None) -> Explained:
        verdicts = verdicts if verdicts is not None else run.verdicts()
        m, f, e = run.monitor, run.flow, run.extension
        lines = [
            BANNER,
            f"Scenario: {name}  [{scenario_hash[:12]}]",
            BANNER,
            f"  K = {_num(f.K_measured)} (audit {_num(run.K_audit)})   L = {_num(f.L)}   "
            f"p = {m.p:g}   rho = {m.rho:g}   T = {m.T:g}",
            f"  C_in = {_num(m.C_in)}   C_m = {_num(e.C_m)}   "
            f"Lambda = ({_num(m.gamma.lambda1)}, {_num(m.gamma.lambda2)})   "
            f"fitted Lambda = ({_num(m.lambdas.lambda1)}, {_num(m.lambdas.lambda2)})",
            "",
            f"  {'check':<22} {'verdict':<8} detail",
            f"  {'-' * 22} {'-' * 8} {'-' * 34}",
        ]
        details = self._details(run)
        for key, ok in verdicts.items():
            lines.append(f"  {key:<22} {'PASS' if ok else 'FAIL':<8} {details.get(key, '')}")
        lines.append(BANNER)
        passed = sum(1 for ok in verdicts.values() if ok)
        lines.append(f"{passed}/{len(verdicts)} checks passed")
        return Explained(text="\n".join(lines))

    def _details(self, run: RunAudit) -> Mapping[str, str]:
        m, f, e = run.monitor, run.flow, run.extension
        out = {k: f"C_fit = {_num(r.C_fit)}" for k, r in m.fits.items()}
        out.update({
            "gradient_monotone": f"max increase {_num(f.gradient_increase)}",
            "metric_equivalence": f"ratios [{_num(f.equivalence.min_ratio)}, {_num(f.equivalence.max_ratio)}]",
            "hessian_ladder": f"{len(m.ladder_failures)} failures",
            "gronwall": f"min margin {_num(float(m.comparison.margins.min()) if m.comparison.margins.size else None)}",
            "local_lp_bound": f"rhs {_num(m.local_lp.rhs)}",
            "normalized_lp": "C per p: " + ", ".join(f"{p:g}:{_num(c)}" for p, c in m.normalized.constants.items()),
            "rm_heat_bound": f"C = {_num(e.C_heat.C)}",
            "riccati_bound": f"slack {_num(e.riccati.required_slack)} <= {_num(e.riccati.allowed_slack)}",
            "energy_inequality": ", ".join(f"a={x.a:g}:{_num(x.C)}" for x in e.energy)
                                 + f" (ratio {_num(e.energy_growth.ratio)})",
            "extension_bounded": f"sup Phi {_num(e.moser.sup_phi)}",
            "extension_growth": f"rate {_num(e.moser.growth_rate)}, observed {_num(e.moser.observed_rate)}",
        })
        return out

    def explain_stop(self, name: str, guard_code: str, reason: str) -> Explained:
        text = "\n".join([BANNER, f"Scenario: {name}", BANNER, f"  STOP [{guard_code}] {reason}", BANNER])
        return Explained(text=text)
