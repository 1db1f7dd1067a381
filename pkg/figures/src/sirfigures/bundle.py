"""Read-only access to experiment output bundles.

A bundle is a directory of CSV/JSON files produced by the experiment
runner: trajectory matrices (``z.csv``, ``r.csv``, ...) with a ``t``
column followed by one column per grid cell, a per-iteration cost log
(``iterations.csv``), agent-ensemble runs under ``abm/``, and the
resolved configuration in ``scenario.json``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Bundle:
    """Handle to one output directory; all reads check file existence."""

    directory: Path

    def __post_init__(self) -> None:
        object.__setattr__(self, "directory", Path(self.directory))

    def path(self, *parts: str) -> Path:
        return self.directory.joinpath(*parts)

    def _require(self, *parts: str) -> Path:
        target = self.path(*parts)
        if not target.exists():
            raise FileNotFoundError(
                f"bundle {self.directory} is missing {'/'.join(parts)}")
        return target

    def series(self, *parts: str) -> tuple[np.ndarray, np.ndarray]:
        """Load a CSV as (times, value matrix), skipping the header."""
        data = np.loadtxt(self._require(*parts), delimiter=",", skiprows=1,
                          ndmin=2)
        return data[:, 0], data[:, 1:]

    def scenario(self) -> dict:
        return json.loads(self._require("scenario.json").read_text())

    def ensemble_run_files(self, controlled: bool = True) -> list[Path]:
        sub = "controlled" if controlled else "uncontrolled"
        root = self._require("abm", sub)
        runs = sorted(root.glob("run_*.csv"),
                      key=lambda p: int(p.stem.split("_")[1]))
        if not runs:
            raise FileNotFoundError(
                f"bundle {self.directory} has no abm/{sub}/run_*.csv files")
        return runs


def stride_between(coarse_times: np.ndarray,
                   fine_times: np.ndarray) -> int:
    """Whole subsampling factor mapping the fine grid onto the coarse."""
    coarse_dt = coarse_times[1] - coarse_times[0]
    fine_dt = fine_times[1] - fine_times[0]
    ratio = coarse_dt / fine_dt
    stride = int(round(ratio))
    if stride < 1 or abs(ratio - stride) > 1e-9:
        raise ValueError(
            f"time grids are incommensurate: dt {fine_dt} vs {coarse_dt}")
    return stride
