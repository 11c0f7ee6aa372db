import os

import numpy as np
import pytest
from hypothesis import settings

from gtvr import data, graphs, objectives

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def blob_dataset():
    raw = data.make_blobs(240, 6, separation=1.0, noise=1.0, seed=7)
    return data.normalize_unit(data.binarize_classes(raw, 3, 8))


@pytest.fixture(scope="session")
def small_logistic(blob_dataset):
    part = data.partition(blob_dataset, 4, "balanced_homogeneous", seed=0)
    return objectives.LogisticProblem.from_partition(blob_dataset, part)


@pytest.fixture(scope="session")
def small_quadratic():
    return objectives.make_quadratic_problem(4, 5, 3, heterogeneity=1.0, noise=0.5, seed=3)


@pytest.fixture(scope="session")
def ring4_weights():
    return graphs.metropolis_weights(graphs.build_topology("ring", 4))


# -- acceptance reporting ------------------------------------------------------

_CRITERIA: dict[int, tuple[str, list[bool]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.skipped or (report.when != "call" and report.passed):
        return
    number, title = mark.args
    _CRITERIA.setdefault(number, (title, []))[1].append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcomes = _CRITERIA[number]
        verdict = "PASS" if outcomes and all(outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {title}")
