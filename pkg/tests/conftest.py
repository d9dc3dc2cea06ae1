import pathlib

import pytest

from fdtof.signal_model import FrequencySweep, ScenePoint


@pytest.fixture(scope='session')
def fig_sweep():
    """10 MHz to 1 GHz, 256 samples"""
    return FrequencySweep(10e6, 1e9, 256)


@pytest.fixture(scope='session')
def slow_sweep():
    """10 MHz to 1 GHz, 4096 samples"""
    return FrequencySweep(10e6, 1e9, 4096)


@pytest.fixture(scope='function')
def three_objects():
    """Single-return points at 1, 2 and 3 m"""
    return [ScenePoint.at_depths([d]) for d in (1.0, 2.0, 3.0)]


# CONFIGURE PYTEST


def pytest_configure(config):
    config.addinivalue_line("markers", "montecarlo: long Monte Carlo experiments")


def pytest_collection_modifyitems(config, items):
    # If a test is in a subdirectory, add marker which is the directory name
    # To mark a file, you can use pytestmark = pytest.mark.my_mark
    rootdir = pathlib.Path(config.rootdir)
    for item in items:
        rel_path = pathlib.Path(item.fspath).relative_to(rootdir)
        mark_name = next((part for part in rel_path.parts if not part.startswith('test')), '')
        if mark_name:
            mark = getattr(pytest.mark, mark_name)
            item.add_marker(mark)
