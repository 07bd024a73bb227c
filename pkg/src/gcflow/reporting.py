"""Report bundles: named, numbered checks with verdicts, tables, ledgers,
and an environment fingerprint.

Every scenario command returns a :class:`ReportBundle`; the bundle renders
to one machine-readable structured-text report (``gcflow-report/1``) plus
delimited tables.  All floating-point output uses a fixed 12-digit
scientific format so a rerun with the same config and seed reproduces the
report byte-for-byte on the same environment.
"""

from __future__ import annotations

import json
import platform
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional

__all__ = ["CheckResult", "ReportBundle", "environment_fingerprint", "fmt"]

REPORT_FORMAT = "gcflow-report/1"


def fmt(x: float) -> str:
    """Fixed-precision float formatting used everywhere in reports."""
    return f"{float(x):.12e}"


def environment_fingerprint() -> Dict[str, str]:
    import numpy
    import scipy

    return {
        "python": sys.version.split()[0],
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "platform": f"{platform.system()}-{platform.machine()}",
    }


@dataclass
class CheckResult:
    """One named check: a measured value against a tolerance."""

    number: int
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""

    def row(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return f"{self.number}\t{self.name}\t{fmt(self.value)}\t{fmt(self.tolerance)}\t{verdict}\t{self.detail}"


@dataclass
class ReportBundle:
    """Scenario outcome: checks, tables, ledgers, fingerprint, config echo."""

    title: str
    config: Dict = field(default_factory=dict)
    checks: List[CheckResult] = field(default_factory=list)
    tables: Dict[str, str] = field(default_factory=dict)
    ledgers: Dict[str, str] = field(default_factory=dict)
    fingerprint: Dict[str, str] = field(default_factory=environment_fingerprint)
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add_check(self, name: str, value: float, tolerance: float, detail: str = "") -> CheckResult:
        """Record ``value < tolerance`` as the next numbered check."""
        res = CheckResult(
            number=len(self.checks) + 1,
            name=name,
            value=float(value),
            tolerance=float(tolerance),
            passed=bool(float(value) < float(tolerance)),
            detail=detail,
        )
        self.checks.append(res)
        return res

    def add_flag(self, name: str, ok: bool, detail: str = "") -> CheckResult:
        """Record a boolean verdict (0 = pass convention: value < 0.5)."""
        return self.add_check(name, 0.0 if ok else 1.0, 0.5, detail)

    def to_text(self) -> str:
        lines = [REPORT_FORMAT, f"title: {self.title}", f"passed: {str(self.passed).lower()}"]
        lines.append("[fingerprint]")
        for k in sorted(self.fingerprint):
            lines.append(f"{k}: {self.fingerprint[k]}")
        lines.append("[config]")
        lines.append(json.dumps(self.config, indent=2, sort_keys=True, default=str))
        if self.notes:
            lines.append("[notes]")
            lines.extend(self.notes)
        lines.append("[checks]")
        lines.append("number\tname\tvalue\ttolerance\tverdict\tdetail")
        for c in self.checks:
            lines.append(c.row())
        for name in sorted(self.ledgers):
            lines.append(f"[ledger {name}]")
            lines.append(self.ledgers[name].rstrip("\n"))
        for name in sorted(self.tables):
            lines.append(f"[table {name}]")
            lines.append(self.tables[name].rstrip("\n"))
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> List[str]:
        """Write ``report.txt`` plus one ``.tsv`` per table/ledger; returns paths."""
        import os

        os.makedirs(out_dir, exist_ok=True)
        paths = []
        rp = os.path.join(out_dir, "report.txt")
        with open(rp, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())
        paths.append(rp)
        for name, text in list(self.ledgers.items()) + list(self.tables.items()):
            tp = os.path.join(out_dir, f"{name}.tsv")
            with open(tp, "w", encoding="utf-8") as fh:
                fh.write(text if text.endswith("\n") else text + "\n")
            paths.append(tp)
        return paths
