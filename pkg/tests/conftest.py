import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset():
    """A handful of rendered samples shared by fast tests."""
    from flowlab.datagen import GenConfig, gen_dataset

    return gen_dataset(GenConfig(), 12, 71)


# one visible pass/fail line per acceptance criterion at the end of the run
_criterion_reports = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    num = int(name.split("_")[2])
    label = name.split("_", 3)[-1].replace("_", " ")
    if report.when == "call":
        _criterion_reports[num] = (report.outcome, label)
    elif report.outcome != "passed" and num not in _criterion_reports:
        # setup error counts as a failure, not a silent omission
        _criterion_reports[num] = (report.outcome, label)


def pytest_terminal_summary(terminalreporter):
    if not _criterion_reports:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_criterion_reports):
        outcome, label = _criterion_reports[num]
        word = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{word}  criterion {num}: {label}")
