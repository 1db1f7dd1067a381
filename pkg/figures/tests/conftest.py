"""Shared fixtures: bundles generated through the experiment CLI.

The figure package consumes bundles only through their files, so the
fixtures produce real bundles by invoking the experiment runner as a
subprocess — the same interface end users go through.
"""

import json
import subprocess
import sys

import pytest

TINY = {"name": "tiny", "T": 40.0, "dt": 0.5, "n_points": 20,
        "max_iter": 8, "agents_per_location": 200, "abm_runs": 3}


def generate_bundle(tmp_dir, config: dict, scenario: str | None = None):
    if scenario is None:
        cfg_file = tmp_dir / "config.json"
        cfg_file.write_text(json.dumps(config))
        scenario = str(cfg_file)
    out_dir = tmp_dir / "bundle"
    proc = subprocess.run(
        [sys.executable, "-m", "kernelsir.cli", "run", scenario,
         "--out", str(out_dir)],
        capture_output=True, text=True)
    # exit 2 (non-convergence) still writes a complete bundle
    assert proc.returncode in (0, 2), proc.stderr
    return out_dir


@pytest.fixture(scope="session")
def tiny_bundle(tmp_path_factory):
    return generate_bundle(tmp_path_factory.mktemp("tiny"), TINY)


@pytest.fixture(scope="session")
def tiny_spacetime_bundle(tmp_path_factory):
    config = {**TINY, "name": "tinyst", "space_dependent_u": True}
    return generate_bundle(tmp_path_factory.mktemp("tinyst"), config)
