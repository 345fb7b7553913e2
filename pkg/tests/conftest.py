from __future__ import annotations

import pytest

from minicar import load_scenario, simulate


@pytest.fixture(scope="session")
def run_bundled():
    """Memoized bundled-scenario runs shared across the suite."""
    cache = {}

    def _run(name: str, controller: str = "stanley"):
        key = (name, controller)
        if key not in cache:
            cache[key] = simulate(load_scenario(name), controller)
        return cache[key]

    return _run
