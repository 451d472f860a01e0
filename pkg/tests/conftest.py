from __future__ import annotations

from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from savch.grid import Grid, ScalarField
from savch.potential import PotentialSpec, build_truncated_potential


@pytest.fixture(scope="session")
def spec() -> PotentialSpec:
    return build_truncated_potential(M=2.0, c0=1.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def grid8() -> Grid:
    return Grid(8, 8)


@pytest.fixture
def grid16() -> Grid:
    return Grid(16, 16)


@pytest.fixture
def random_field(rng) -> Callable[[Grid, float], ScalarField]:
    def make(grid: Grid, amplitude: float = 0.9) -> ScalarField:
        return ScalarField(grid, rng.uniform(-amplitude, amplitude, grid.shape))

    return make


@pytest.fixture
def write_config(tmp_path) -> Callable[..., Path]:
    """Write a key=value config under tmp_path; output_dir defaults to tmp_path/out."""

    def write(name: str = "run.cfg", **values) -> Path:
        values.setdefault("output_dir", str(tmp_path / "out"))
        path = tmp_path / name
        path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()), encoding="utf-8")
        return path

    return write
