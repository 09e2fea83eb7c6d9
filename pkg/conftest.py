import pytest

# Make fixtures from tests/database available to all tests
pytest_plugins = ["src.tests.database.conftest"]


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run desk-scale acceptance studies"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale run taking minutes")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
