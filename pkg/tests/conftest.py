"""Shared fixtures: the figure-eight cloud and a one-time kernel warmup."""
from __future__ import annotations

import numpy as np
import pytest

from topolayer import Frame, PointCloud, warmup

# verdict lines recorded by the acceptance tests, echoed after the run
ACCEPTANCE_VERDICTS: list[tuple[int, str]] = []


def record_verdict(num: int, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE_VERDICTS.append((num, f"criterion {num:2d} [{status}] {detail}"))


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:
    if not ACCEPTANCE_VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_VERDICTS):
        terminalreporter.write_line(line)


# Two unit squares glued along the edge x=0..1 at y=0: a figure eight.
# Every hand-checked number in the suite (barcodes, inner products, loss
# values) derives from this cloud.
FIGURE_EIGHT_POINTS = (
    (0.0, 1.0),
    (0.0, 0.0),
    (1.0, 1.0),
    (0.0, -1.0),
    (1.0, -1.0),
    (1.0, 0.0),
)


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels() -> None:
    """Compile the numba kernels once so no test pays the JIT cost."""
    warmup()


@pytest.fixture()
def figure_eight() -> PointCloud:
    return PointCloud(np.array(FIGURE_EIGHT_POINTS, dtype=np.float64), Frame(28, 28))


def random_cloud(rng: np.random.Generator, n: int, integer: bool = False,
                 lo: float = 0.0, hi: float = 27.0) -> PointCloud:
    """Seeded test cloud; integer grids force filtration-value ties."""
    coords = rng.uniform(lo, hi, size=(n, 2))
    if integer:
        coords = np.floor(coords)
    return PointCloud(np.asarray(coords, dtype=np.float64), Frame(28, 28))
