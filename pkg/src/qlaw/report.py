"""Residual reports: per-point identity residuals with max/RMS summary."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class ResidualReport:
    name: str
    grid: np.ndarray
    residuals: np.ndarray
    tolerance: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.residuals = np.asarray(self.residuals, dtype=float)

    @property
    def max(self) -> float:
        return float(np.max(np.abs(self.residuals)))

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.residuals**2)))

    @property
    def passed(self) -> bool:
        return bool(np.all(np.isfinite(self.residuals))) and self.max <= self.tolerance

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "grid": self.grid.tolist(),
            "residuals": self.residuals.tolist(),
            "max": self.max,
            "rms": self.rms,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }
        if self.meta:
            out["meta"] = self.meta
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json(indent=1) + "\n", encoding="utf-8")
        return path

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.name}: max={self.max:.3e} rms={self.rms:.3e} "
                f"tol={self.tolerance:.1e} {status}")
