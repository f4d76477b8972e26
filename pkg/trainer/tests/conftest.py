import subprocess
import sys

import pytest


def run_engine(*args):
    """Invoke the engine CLI as a subprocess (the only allowed coupling)."""
    return subprocess.run(
        [sys.executable, "-m", "vtr.cli", *args], capture_output=True, text=True
    )


@pytest.fixture(scope="session")
def engine_cli():
    proc = run_engine("--help")
    if proc.returncode != 0:
        pytest.skip("vtr engine CLI not installed")
    return run_engine
