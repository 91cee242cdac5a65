"""
Verification report schemas.
"""
from typing import List

from pydantic import BaseModel, Field


class CheckResult(BaseModel):
    """One property check with its worst observed violation."""

    name: str
    passed: bool
    max_violation: float = 0.0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} {self.max_violation:.3e}"


class VerificationReport(BaseModel):
    """All checks of one verification run."""

    seed: int
    checks: List[CheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def render(self) -> str:
        return "\n".join(check.line() for check in self.checks) + "\n"
