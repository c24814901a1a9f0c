# rhlab/verifier.py
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Tuple

REPORT_RTOL = 1e-9

Check = Tuple[str, Callable[[], bool]]


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    guard_code: Optional[str] = None
    guard_state: Optional[str] = None
    guard_action: Optional[str] = None
    reason: Optional[str] = None
    failed: Optional[str] = None


def flatten(tree: object, prefix: str = "") -> Dict[str, object]:
    """Nested dicts/lists as dotted keys, leaves untouched."""
    out: Dict[str, object] = {}
    if isinstance(tree, Mapping):
        for k, v in tree.items():
            out.update(flatten(v, f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(tree, (list, tuple)):
        for i, v in enumerate(tree):
            out.update(flatten(v, f"{prefix}.{i}"))
    else:
        out[prefix] = tree
    return out


def same_value(stored: object, recomputed: object, rtol: float = REPORT_RTOL) -> bool:
    if isinstance(stored, bool) or isinstance(recomputed, bool) or stored is None or recomputed is None:
        return stored == recomputed
    if isinstance(stored, (int, float)) and isinstance(recomputed, (int, float)):
        a, b = float(stored), float(recomputed)
        if math.isnan(a) or math.isnan(b):
            return math.isnan(a) and math.isnan(b)
        if math.isinf(a) or math.isinf(b):
            return a == b
        return math.isclose(a, b, rel_tol=rtol, abs_tol=1e-300)
    return stored == recomputed


def inequality_of(key: str) -> str:
    """Report key -> the audited quantity it belongs to (monitor.fits.hessian_top.C_fit -> hessian_top)."""
    parts = key.split(".")
    if len(parts) >= 3 and parts[1] == "fits":
        return parts[2]
    return parts[1] if len(parts) >= 2 else parts[0]


class AuditVerifier:
    """
    Deterministic re-check of a run.

    Rule: ALL checks must PASS. The first failing check names the
    inequality it belongs to.
    """

    def verify(self, verdicts: Mapping[str, bool], reasons: Optional[Mapping[str, str]] = None) -> VerifyResult:
        reasons = reasons or {}
        checks: List[Check] = [(name, (lambda ok=ok: bool(ok))) for name, ok in verdicts.items()]
        return self._run_checks(checks, reasons)

    def compare(self, stored: Mapping[str, object], recomputed: Mapping[str, object],
                rtol: float = REPORT_RTOL) -> VerifyResult:
        """Every recomputed number must match the stored report."""
        flat_stored = flatten(stored)
        flat_new = flatten(recomputed)
        missing = sorted(set(flat_new) - set(flat_stored))
        if missing:
            return self.stop("VERIFY_FAIL", inequality_of(missing[0]),
                              f"{inequality_of(missing[0])}: report lacks {missing[0]}")
        checks: List[Check] = [
            (key, (lambda key=key: same_value(flat_stored[key], flat_new[key], rtol)))
            for key in flat_new
        ]
        reasons = {
            key: f"{inequality_of(key)}: recomputed {key} = {flat_new[key]!r} differs from stored {flat_stored[key]!r}"
            for key in flat_new
        }
        result = self._run_checks(checks, reasons)
        if result.ok:
            return result
        return VerifyResult(False, result.guard_code, result.guard_state, result.guard_action,
                            result.reason, inequality_of(result.failed or ""))

    def _run_checks(self, checks: List[Check], reasons: Mapping[str, str]) -> VerifyResult:
        """Run all checks, return FAIL on first failure"""
        for name, chk in checks:
            try:
                if not chk():
                    return self.stop("VERIFY_FAIL", name, reasons.get(name) or f"{name} failed")
            except Exception as e:
                return self.stop("VERIFY_ERROR", name, f"{name}: verifier exception {e!r}")
        return VerifyResult(ok=True)

    def stop(self, code: str, name: str, reason: str) -> VerifyResult:
        return VerifyResult(
            ok=False,
            guard_code=code,
            guard_state=code,
            guard_action="STOP",
            reason=reason,
            failed=name,
        )
