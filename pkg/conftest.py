# conftest.py
import inspect
import logging
import os
import re
from pathlib import Path

import numpy as np
import pytest

from config_utils.config_manager import ConfigManager
from core.framework_settings import LOGS_DIR, ensure_report_dirs
from msfa.spectral_core import BlockShape, SpectralCube
from msfa.synthetic import synth_hne, uniform_grid
from utils.common.logger import configure_logging
from utils.common.test_data_loader import load_test_data_for

"""
Pytest root configuration for the msfa_forge test suite.

Responsibilities:
- Logging: fresh per-run log under reports/logs (one file per xdist worker)
- Data: auto-parametrize `scenario` from testdata/<category>/<module>/<test_file>.json
- Collection: auto-apply markers/labels from test paths (tests/<category>/<module>/)
- Shared fixtures: small synthetic cubes, wavelength grids, random generators
"""


@pytest.fixture(scope="session", autouse=True)
def configure_logging_once():
    """
    Initialize project-wide logging (once per session).
    Files:
    - reports/logs/test_execution_log_<worker>.log (master in serial; gwN in xdist)
    """
    ensure_report_dirs()
    logs_dir = Path(LOGS_DIR)

    worker_id = os.getenv("PYTEST_XDIST_WORKER") or "master"
    log_file = logs_dir / f"test_execution_log_{worker_id}.log"
    configure_logging("INFO", log_file)
    print(f"Logging to: {log_file}")


@pytest.fixture(autouse=True)
def fresh_config_cache():
    """Property/env overrides made by one test must not leak into the next."""
    ConfigManager.clear_cache()
    yield
    ConfigManager.clear_cache()


def _category_and_module(file_path: Path) -> tuple[str, str]:
    parts = file_path.parts
    if "tests" not in parts:
        raise ValueError(f"Cannot infer module subdir from path: {file_path}")
    i = parts.index("tests")
    if len(parts) <= i + 3:
        raise ValueError(f"Expected tests/<category>/<module>/..., got: {file_path}")
    return parts[i + 1], parts[i + 2]


def pytest_generate_tests(metafunc):
    """
    Auto-parametrize tests that accept a 'scenario' fixture by loading JSON from:
    <TEST_DATA_PATH>/<category>/<module>/<test_file_stem>.json
        Category and module are inferred from tests/<category>/<module>/...
    """
    if "scenario" in metafunc.fixturenames:
        file_path = Path(inspect.getfile(metafunc.function))
        category, module_subdir = _category_and_module(file_path)
        scenarios = load_test_data_for(file_path.stem, metafunc.function.__name__, category, module_subdir)
        ids = [str(s.get("name") or f"case{i + 1}") for i, s in enumerate(scenarios)]
        metafunc.parametrize("scenario", scenarios, ids=ids)


@pytest.fixture
def apply_scenario_metadata(request, scenario):
    """Expose the scenario on the node and log its description."""
    request.node.scenario = scenario
    desc = (scenario.get("description") or "").strip()
    if desc:
        logging.getLogger("msfa_forge.tests").info(f"Scenario {scenario.get('name', request.node.name)}: {desc}")


def _registered_mark_names(config) -> set[str]:
    names = set()
    for m in config.getini("markers"):
        name = re.split(r"[:(]", m.strip())[0].strip()
        if name:
            names.add(name)
    return names


def pytest_collection_modifyitems(config, items):
    """
    Annotate tests with registered markers from their path and infer a module label.

    - Adds markers found in tests/<category>/<module>/ if registered in pytest.ini (e.g. 'unit', 'wiener').
    - If no @pytest.mark.module("..."), derives it from the second-level dir (e.g. 'spectral_core' -> 'Spectral Core').
    """
    registered = _registered_mark_names(config)

    for item in items:
        parts = Path(item.fspath).parts
        if "tests" not in parts:
            continue

        idx = parts.index("tests")
        subdirs = list(parts[idx + 1: -1])

        for d in subdirs:
            if d in registered:
                item.add_marker(getattr(pytest.mark, d))

        if not item.get_closest_marker("module"):
            module_dir = subdirs[1] if len(subdirs) >= 2 else (subdirs[0] if subdirs else None)
            if module_dir:
                item.add_marker(pytest.mark.module(module_dir.replace("_", " ").title()))


@pytest.hookimpl(hookwrapper=True, tryfirst=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call":
        logging.getLogger("msfa_forge.tests").info(f"TEST END: {item.nodeid} - {report.outcome.upper()}")


# ---------------- Shared data fixtures ----------------

@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def wavelengths16():
    """420..720 nm at 20 nm."""
    return uniform_grid(420.0, 720.0, 16)


@pytest.fixture(scope="session")
def make_cube():
    """Factory: cached synth_hne(width, height, uniform 420..720 grid of `bands`, seed)."""
    cache: dict[tuple, SpectralCube] = {}

    def _make(width: int = 16, height: int = 16, bands: int = 4, seed: int = 0) -> SpectralCube:
        key = (width, height, bands, seed)
        if key not in cache:
            cache[key] = synth_hne(width, height, uniform_grid(420.0, 720.0, bands), seed)
        return cache[key]

    return _make


@pytest.fixture
def random_cube(rng):
    """Factory for i.i.d. uniform cubes (no spatial structure)."""
    def _make(width: int, height: int, bands: int) -> SpectralCube:
        return SpectralCube(rng.uniform(0.0, 1.0, (height, width, bands)), uniform_grid(420.0, 720.0, bands))

    return _make


@pytest.fixture(scope="session")
def block2():
    return BlockShape(2, 2)


@pytest.fixture(scope="session")
def block4():
    return BlockShape(4, 4)
