"""Verification report: named residuals with tolerances, pass flags, and
enough provenance (config echo, environment stamp) to reproduce a run."""

from __future__ import annotations

import json
import os
import platform
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np


@dataclass
class CheckResult:
    residual: float
    tolerance: float
    runtime: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)


@dataclass
class VerificationReport:
    model_id: str
    checks: dict[str, CheckResult] = field(default_factory=dict)
    config_echo: dict = field(default_factory=dict)

    def run(self, name: str, tolerance: float, fn) -> CheckResult:
        """Execute a residual-producing callable and record it once."""
        if name in self.checks:
            raise ValueError(f"check {name!r} already recorded")
        t0 = time.perf_counter()
        residual = float(fn())
        res = CheckResult(residual, float(tolerance), time.perf_counter() - t0)
        self.checks[name] = res
        return res

    def record(self, name: str, residual: float, tolerance: float, runtime: float = 0.0) -> CheckResult:
        if name in self.checks:
            raise ValueError(f"check {name!r} already recorded")
        res = CheckResult(float(residual), float(tolerance), runtime)
        self.checks[name] = res
        return res

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "checks": {
                name: {
                    "residual": c.residual,
                    "tolerance": c.tolerance,
                    "pass": c.passed,
                    "runtime": c.runtime,
                }
                for name, c in sorted(self.checks.items())
            },
            "environment": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "platform": platform.platform(),
            },
            "config": self.config_echo,
        }

    def save(self, path: str) -> None:
        d = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
