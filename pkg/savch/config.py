# savch/config.py
"""
Run configuration.

Config files are flat ``key=value`` text; ``#`` starts a comment. Parsing is
fail-closed: an unknown key, a duplicate key or any invalid value rejects
the whole file, with the offending key named in the error.

Minimal file::

    nx = 64
    ny = 64
    eps = 0.05
    tau = 5e-7
    t_end = 5e-5
"""
from __future__ import annotations

import difflib
from pathlib import Path
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from savch.errors import ConfigError
from savch.verbosity import get_logger

_log = get_logger("savch.config")


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    nx: int = Field(ge=2)
    ny: int = Field(ge=2)
    lx: float = Field(1.0, gt=0)
    ly: float = Field(1.0, gt=0)
    eps: float = Field(gt=0)
    tau: float = Field(gt=0)
    t_end: float = Field(gt=0)
    c0: float = Field(1.0, gt=0)
    M: float = Field(2.0, gt=1)
    solver_tol: float = Field(1e-12, gt=0)
    snapshot_times: List[float] = Field(default_factory=list)
    output_dir: Path = Path("./data/runs")
    seed: int = 0

    initial: Literal["two_circles", "constant", "cosine", "random"] = "two_circles"
    initial_value: float = 0.0
    mode_j: int = Field(1, ge=0)
    mode_k: int = Field(0, ge=0)
    potential: Literal["truncated", "null"] = "truncated"
    check_invariants: bool = True

    @field_validator("snapshot_times", mode="before")
    @classmethod
    def _split_times(cls, v):
        if isinstance(v, str):
            return [s.strip() for s in v.split(",") if s.strip()]
        return v

    @model_validator(mode="after")
    def _check_steps(self) -> "RunConfig":
        if round(self.t_end / self.tau) < 1:
            raise ValueError("tau: t_end/tau rounds to zero steps")
        for t in self.snapshot_times:
            if t < 0 or t > self.t_end * (1 + 1e-12):
                raise ValueError(f"snapshot_times: {t} outside [0, t_end]")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.tau))

    def snapshot_steps(self) -> List[int]:
        """Step indices nearest to the configured snapshot times, sorted and unique."""
        return sorted({min(int(round(t / self.tau)), self.n_steps) for t in self.snapshot_times})

    def with_tau(self, tau: float) -> "RunConfig":
        return self.model_copy(update={"tau": tau})

    def with_output_dir(self, out: Optional[str]) -> "RunConfig":
        return self.model_copy(update={"output_dir": Path(out)}) if out else self


KNOWN_KEYS = tuple(RunConfig.model_fields)


def suggest_key(key: str) -> Optional[str]:
    """Nearest known key: close string match first, then a shared prefix."""
    close = difflib.get_close_matches(key, KNOWN_KEYS, n=1, cutoff=0.6)
    if close:
        return close[0]
    prefixed = [k for k in KNOWN_KEYS if key.startswith(k) or k.startswith(key)]
    return max(prefixed, key=len) if prefixed else None


def _read_pairs(text: str, source: str) -> Dict[str, str]:
    pairs: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key not in KNOWN_KEYS:
            hint = suggest_key(key)
            msg = f"{source}:{lineno}: unknown key '{key}'"
            raise ConfigError(msg + (f" (did you mean '{hint}'?)" if hint else ""), key=key)
        if key in pairs:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'", key=key)
        pairs[key] = value
    return pairs


def config_from_pairs(pairs: Dict[str, str], source: str = "<config>") -> RunConfig:
    try:
        return RunConfig.model_validate(pairs)
    except ValidationError as exc:
        err = exc.errors()[0]
        key = str(err["loc"][0]) if err.get("loc") else ""
        if not key:
            # model-level validators prefix their message with the key
            msg = str(err.get("msg", ""))
            key = msg.split("Value error, ", 1)[-1].split(":", 1)[0]
        if err.get("type") == "missing":
            raise ConfigError(f"{source}: missing required key '{key}'", key=key) from exc
        raise ConfigError(f"{source}: invalid value for '{key}': {err.get('msg')}", key=key) from exc


def parse_config(path: str | Path) -> RunConfig:
    p = Path(path)
    _log.debug("Reading config: %s", p)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    cfg = config_from_pairs(_read_pairs(text, str(p)), str(p))
    _log.info("Config %s: %dx%d eps=%g tau=%g t_end=%g (%d steps)", p, cfg.nx, cfg.ny, cfg.eps, cfg.tau, cfg.t_end, cfg.n_steps)
    return cfg
