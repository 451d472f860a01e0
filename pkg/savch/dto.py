# savch/dto.py
"""Report and result models shared between the numerical modules and the CLI."""
from __future__ import annotations

import hashlib
import json
import math
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class StepReport(BaseModel):
    """Diagnostics of one SAV step, evaluated at the new state (n, t)."""

    n: int
    t: float
    energy: float
    mass: float
    r: float
    incr_hm1: float
    h1_incr: float = 0.0
    r_incr: float = 0.0
    denom: float
    energy_identity_residual: float
    solver_residual: float = 0.0
    free_energy: float = 0.0
    r_gap: float = 0.0


class ConvergenceRow(BaseModel):
    tau: float
    diff_hm1: float

    @field_validator("diff_hm1")
    @classmethod
    def _nonnegative(cls, v: float) -> float:
        if not v >= 0.0:
            raise ValueError(f"diff_hm1 must be >= 0, got {v}")
        return v


class ConvergenceReport(BaseModel):
    """(tau, ||u_N^(tau) - u_N^(tau/2)||_{h,-1}) rows plus orders between rows."""

    rows: List[ConvergenceRow] = Field(default_factory=list)
    orders: List[float] = Field(default_factory=list)
    flags: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _taus_halving(self) -> "ConvergenceReport":
        for a, b in zip(self.rows, self.rows[1:]):
            if not math.isclose(b.tau, a.tau / 2.0, rel_tol=1e-12):
                raise ValueError(f"taus must halve: {a.tau} -> {b.tau}")
        if self.rows and len(self.orders) != len(self.rows) - 1:
            raise ValueError("expected one order per consecutive pair of rows")
        return self

    @property
    def final_order(self) -> float:
        return self.orders[-1] if self.orders else math.nan


class Polyline(BaseModel):
    points: List[Tuple[float, float]]
    closed: bool = False


class LevelSetPolylines(BaseModel):
    polylines: List[Polyline] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.polylines)


class SpectralProbeResult(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lambda_: float = Field(alias="lambda")
    iterations: int
    residual: float
    eps: float
    shift: float = 0.0


class RunManifest(BaseModel):
    """Content of ``run.json``: what was run and the headline invariants."""

    fingerprint: str
    config: Dict[str, Any]
    n_steps: int
    t_final: float
    energy_initial: float
    energy_final: float
    min_denom: float
    max_energy_identity_residual: float
    max_mass_drift: float
    stability_sums: Dict[str, float] = Field(default_factory=dict)
    snapshots: int = 0
    failure: Optional[str] = None


def hash_text(text: str) -> str:
    return hashlib.sha1(text.encode("utf-8")).hexdigest()


def config_fingerprint(config: BaseModel) -> str:
    """Stable id of a config: SHA-1 over its canonical JSON dump."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return f"run_{hash_text(canonical)[:16]}"
