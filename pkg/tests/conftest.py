"""Shared pytest fixtures for pmemprims"""

import pytest

from pmemprims.pmem_model import DeviceConfig, SimulatedDevice


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run full-size crash and benchmark tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: full-size run, skipped unless --runslow is given')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def device():
    return SimulatedDevice(DeviceConfig(capacity=4096))


@pytest.fixture(autouse=True)
def isolated_config(monkeypatch, tmp_path):
    """Keep the user's ~/.pmemprims.yaml and $PMEMPRIMS_CONFIG out of tests"""
    monkeypatch.delenv('PMEMPRIMS_CONFIG', raising=False)
    monkeypatch.delenv('PMEMPRIMS_BACKEND_REPORT', raising=False)
    monkeypatch.setenv('HOME', str(tmp_path / 'home'))
