import os
import sys

import pytest

# Ensure repo root on sys.path so the flat packages import from tests
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="Also run full-resolution renders (or set DVR_SLOW_TESTS=1)")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-resolution renders, skipped unless --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow") or os.getenv("DVR_SLOW_TESTS", "").strip() not in ("", "0"):
        return
    skip = pytest.mark.skip(reason="full-resolution render; use --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
