import logging

import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--run-heavy",
        action="store_true",
        default=False,
        help="Run the N=16 sector checks.",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-heavy"):
        return
    skip_heavy = pytest.mark.skip(reason="needs --run-heavy")
    for item in items:
        if "heavy" in item.keywords:
            item.add_marker(skip_heavy)


@pytest.fixture
def info_logs(caplog):
    caplog.set_level(logging.INFO, logger="foel")
    return caplog
