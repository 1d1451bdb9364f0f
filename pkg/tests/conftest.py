import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from interfere.profiles import ResourceSpace, from_matrix

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def space():
    return ResourceSpace.default()


@pytest.fixture
def small_space():
    return ResourceSpace(("CPU", "MEM_BW", "DISK_IO_TIME"), (1.0, 1.0, 1.0), ("CPU", "MEM_BW", "DISK_IO_TIME"))


def make_dataset(X, space=None, prefix="a"):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if space is None:
        names = tuple(f"r{j}" for j in range(X.shape[1]))
        space = ResourceSpace(names, (1.0,) * len(names), names[: min(3, len(names))])
    ids = [f"{prefix}{i:03d}" for i in range(len(X))]
    return from_matrix(ids, X, space)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
