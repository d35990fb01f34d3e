import numpy as np
import pytest

from pvtree.core import RawDataset, Task, bin_dataset, compute_bin_mapper


def make_binned(n=200, d=4, bins=16, seed=0, task="regression", n_classes=3):
    rng = np.random.default_rng(seed)
    x = rng.random((n, d))
    if task == "regression":
        y = 2.0 * (x[:, 0] > 0.4) + x[:, min(1, d - 1)] + 0.3 * rng.standard_normal(n)
        raw = RawDataset(x, y, Task.regression())
    else:
        y = (np.floor(x[:, 0] * n_classes) + (rng.random(n) < 0.2)) % n_classes
        raw = RawDataset(x, y, Task.classification(n_classes))
    return bin_dataset(raw, compute_bin_mapper(raw, bins))


@pytest.fixture
def small_regression():
    return make_binned()


@pytest.fixture
def small_classification():
    return make_binned(task="classification")


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
