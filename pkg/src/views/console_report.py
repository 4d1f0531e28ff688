"""
Console report - Human-readable summaries printed by the command-line interface
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional


@dataclass
class InputCheck:
    """Outcome of parsing one input file in check-only mode"""
    name: str
    path: Optional[str]
    records: Optional[int] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class ValidationReport:
    checks: List[InputCheck] = field(default_factory=list)
    problems: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems and all(check.ok for check in self.checks)


def format_validation(report: ValidationReport) -> str:
    lines = []
    for problem in report.problems:
        lines.append(f"  ERROR  {problem}")
    for check in report.checks:
        if check.ok:
            lines.append(f"  ok     {check.name:<12} {check.records:>8} records  {check.path}")
        else:
            lines.append(f"  ERROR  {check.name:<12} {check.error}")
    status = "all inputs valid" if report.ok else "validation failed"
    return "\n".join([f"Validation: {status}"] + lines)


def format_run_summary(manifest: Dict[str, Any], out_dir: str) -> str:
    counts = manifest.get('counts', {})
    lines = [f"Run complete: {len(manifest.get('artifacts', []))} artifacts in {out_dir}"]
    for key in sorted(counts):
        lines.append(f"  {key:<22} {counts[key]}")
    return "\n".join(lines)


def format_stage_summary(stage: str, paths: List[str]) -> str:
    lines = [f"Stage {stage} complete"]
    lines.extend(f"  {path}" for path in paths)
    return "\n".join(lines)
