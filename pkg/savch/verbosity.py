# savch/verbosity.py
"""
Logging for the ``savch`` namespace, driven by the CLI's ``-v`` count.

What a solver run prints at each level:

  0   warnings only: a negative scalar auxiliary variable, an inner solve
      whose backward error exceeds ``solver_tol``, a roundoff-level
      convergence pair.
      The CLI still prints its one ``OK``/``FAIL`` summary line.
  1   adds progress: config summary, potential bound and Hermite residual,
      a step block every tenth of the run, every snapshot, one line per
      convergence run, each spectral eigenvalue.
  2   adds per-step reports (energy, denominator, identity residual),
      stalled inner CG solves and workspace builds, with file:line tags.

``SAVCH_VERBOSITY`` supplies the level when ``-v`` is not given, so batch
scripts can raise it without touching the command line.
"""
from __future__ import annotations

import logging
import os
import sys

_CONFIGURED = False

_LEVELS = {0: logging.WARNING, 1: logging.INFO}
_FMT = "[%(levelname)s] %(name)s: %(message)s"
_FMT_DEBUG = "[%(levelname)s] %(name)s (%(filename)s:%(lineno)d): %(message)s"


def verbosity_from_env(default: int = 0) -> int:
    """Read ``SAVCH_VERBOSITY``; unparsable values fall back to *default*."""
    raw = os.getenv("SAVCH_VERBOSITY", "")
    try:
        return int(raw) if raw.strip() else default
    except ValueError:
        return default


def setup_logging(verbosity: int = 0) -> None:
    """Configure the ``savch`` logger hierarchy. Call once from the CLI."""
    global _CONFIGURED
    if _CONFIGURED:
        return
    _CONFIGURED = True

    level = _LEVELS.get(max(verbosity, 0), logging.DEBUG)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(_FMT_DEBUG if verbosity >= 2 else _FMT))

    root = logging.getLogger("savch")
    root.setLevel(level)
    root.addHandler(handler)
    root.propagate = False


def get_logger(name: str) -> logging.Logger:
    """Return a child logger under the ``savch`` namespace."""
    return logging.getLogger(name)
