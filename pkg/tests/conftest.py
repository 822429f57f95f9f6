import numpy as np
import pytest

from wesbench.potentials import PotentialSpec
from wesbench.propagate import PropagatorConfig, run_reference
from wesbench.tica import FeatureSpec, fit_on_trajectories


@pytest.fixture(scope="session")
def dw_spec():
    return PotentialSpec("DOUBLE_WELL_2D")


@pytest.fixture(scope="session")
def dw_reference(dw_spec):
    cfg = PropagatorConfig(dw_spec, seed_base=11)
    return run_reference(cfg, [[[-1.0, 0.0]], [[1.0, 0.0]]], 50)


@pytest.fixture(scope="session")
def dw_tica(dw_reference):
    return fit_on_trajectories(dw_reference, FeatureSpec("RAW_COORDS_2D"), lag=10, n_components=4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ----------------------------------------------------------------

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    store = item.config._acceptance
    entry = store.setdefault(number, {"title": title, "ok": True, "details": []})
    if rep.failed:
        entry["ok"] = False
    if rep.when == "call":
        entry["details"] = [f"{k}={v}" for k, v in item.user_properties]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = getattr(config, "_acceptance", {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        e = store[number]
        status = "PASS" if e["ok"] else "FAIL"
        detail = f"  [{', '.join(e['details'])}]" if e["details"] else ""
        terminalreporter.write_line(f"criterion {number:2d} {status}  {e['title']}{detail}")
