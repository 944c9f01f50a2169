import itertools
import json

import numpy as np
import pytest

from poissonbalance.config.settings import configure
from poissonbalance.models.instance_model import JobInstance

RATE_MENU = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Every test starts from built-in settings, with no config document in the environment."""
    monkeypatch.delenv("PB_CONFIG", raising=False)
    configure()
    yield
    monkeypatch.delenv("PB_CONFIG", raising=False)
    configure()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def instance_suite(max_jobs=5, max_machines=3, per_shape=2, seed=7):
    """
    Deterministic slice of the small exhaustive suite

    For each (n, m) with 1 <= n <= max_jobs and 2 <= m <= max_machines, a few
    multisets of rates drawn from RATE_MENU.
    """
    gen = np.random.default_rng(seed)
    out = []
    for n, m in itertools.product(range(1, max_jobs + 1), range(2, max_machines + 1)):
        for _ in range(per_shape):
            sizes = tuple(float(x) for x in gen.choice(RATE_MENU, size=n))
            out.append(JobInstance(machines=m, sizes=sizes))
    return out


@pytest.fixture(scope="session")
def small_instances():
    return instance_suite()


@pytest.fixture
def write_instance_file(tmp_path):
    """Write an instance document and return its path."""

    def write(machines, jobs, name="instance.json"):
        path = tmp_path / name
        path.write_text(json.dumps({"machines": machines, "jobs": jobs}), encoding="utf-8")
        return str(path)

    return write
