"""DiagnosticsReport: ordered check records, verdict, JSON and text renderings."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

from common.logging_utils import log_event
from verifier.diagnostics import CheckRecord, CheckStatus

logger = logging.getLogger(__name__)

REPORT_JSON = "report.json"
REPORT_TEXT = "report.txt"


@dataclass(frozen=True)
class DiagnosticsReport:
    checks: Tuple[CheckRecord, ...]
    metadata: Mapping[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not any(check.gating for check in self.checks)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def by_name(self) -> Dict[str, CheckRecord]:
        return {check.name: check for check in self.checks}

    def counts(self) -> Dict[str, int]:
        out = {status.value: 0 for status in CheckStatus}
        for check in self.checks:
            out[check.status.value] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "counts": self.counts(),
            "checks": [check.to_dict() for check in self.checks],
            "metadata": dict(self.metadata),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n"

    def to_text(self) -> str:
        header = ("check", "status", "worst_residual", "tolerance", "worst_time", "reference")
        rows = [
            (
                c.name,
                c.status.value,
                f"{c.worst_residual:.3e}",
                f"{c.tolerance:.3e}",
                "-" if c.worst_time is None else f"{c.worst_time:.6g}",
                c.reference or "-",
            )
            for c in self.checks
        ]
        widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in [header, *rows]]
        lines.insert(1, "  ".join("-" * w for w in widths))
        lines.append("")
        lines.append(f"verdict: {self.verdict}")
        return "\n".join(lines) + "\n"


def _json_default(value: Any):
    if hasattr(value, "item"):
        return value.item()
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)


def write_report(report: DiagnosticsReport, out_dir: Path) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / REPORT_JSON
    text_path = out_dir / REPORT_TEXT
    json_path.write_text(report.to_json(), encoding="utf-8")
    text_path.write_text(report.to_text(), encoding="utf-8")
    log_event(logger, "report_written", path=str(json_path), verdict=report.verdict, checks=len(report.checks))
    return json_path, text_path
