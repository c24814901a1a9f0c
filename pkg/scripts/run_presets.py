#!/usr/bin/env python3
"""
Run every bundled preset through the audit pipeline, verify each artifact
from disk and print one summary line per preset.
"""

import logging
import sys
import tempfile
from pathlib import Path
from typing import Any, Dict, List

sys.path.insert(0, str(Path(__file__).parent.parent))

from rhlab import AuditPipeline, parse_scenario
from rhlab.artifact import verify
from rhlab.scenario import list_presets


class PresetDemo:
    def __init__(self, out_root: Path) -> None:
        self.pipeline = AuditPipeline()
        self.out_root = out_root

    def run_batch(self) -> List[Dict[str, Any]]:
        results = []
        for path in list_presets():
            scenario = parse_scenario(path)
            res = self.pipeline.run(scenario, self.out_root / scenario.name)
            check = verify(res.artifact.directory) if res.artifact is not None else None
            results.append({
                "name": scenario.name,
                "ok": res.ok,
                "status": res.status,
                "verified": bool(check and check.ok),
                "guard_code": res.guard_code,
                "reason": res.reason,
                "text": res.text,
            })
        return results

    def print_summary(self, results: List[Dict[str, Any]]) -> None:
        for res in results:
            print(res["text"])
        print("\n" + "=" * 70)
        print("Preset summary")
        print("=" * 70)
        for res in results:
            mark = "PASS" if res["ok"] and res["verified"] else "STOP"
            line = f"  {res['name']:<20} {mark:<5} status={res['status']:<10} verified={res['verified']}"
            if res["guard_code"]:
                line += f"  ({res['guard_code']}: {res['reason']})"
            print(line)


if __name__ == "__main__":
    logging.basicConfig(level=logging.WARNING)
    with tempfile.TemporaryDirectory(prefix="rhlab-") as tmp:
        demo = PresetDemo(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tmp))
        results = demo.run_batch()
        demo.print_summary(results)
    sys.exit(0 if all(r["ok"] and r["verified"] for r in results) else 1)
