import numpy as np
import pytest

from dgdecomp.mesh import MeshHierarchy, TriMesh, refine_uniform

ACCEPTANCE = {}
TABLES = []


@pytest.fixture
def one_subdomain():
    """Hierarchy whose subdomain and coarse mesh is a single triangle."""
    tri = TriMesh.from_triangles(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                                 np.array([[0, 1, 2]]))
    fine = tri
    for _ in range(2):
        fine, _ = refine_uniform(fine)
    return MeshHierarchy(tri, tri, fine, 0, 2)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    key = mark.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        ok = report.outcome == "passed" and ACCEPTANCE.get(key, ("", True))[1]
        ACCEPTANCE[key] = (mark.args[1], ok)


def pytest_terminal_summary(terminalreporter):
    for title, lines in TABLES:
        terminalreporter.section(title)
        for line in lines:
            terminalreporter.write_line(line)
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        title, ok = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:2d} {'PASS' if ok else 'FAIL'}  {title}")
