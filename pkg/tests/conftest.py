"""Pytest configuration file for the tests."""

from __future__ import annotations

import sys
import threading
from pathlib import Path

import dotenv
import pytest

pytest.register_assert_rewrite('tests.fixtures')

dotenv.load_dotenv(Path(__file__).parent / '.test.env')

from tests.fixtures import (  # noqa: E402
    ConfigFactory,
    OUSampler,
    experiment_config,
    ou_observations,
    ou_sampler,
    out_dir,
)

fixtures = (
    ConfigFactory,
    OUSampler,
    experiment_config,
    ou_observations,
    ou_sampler,
    out_dir,
)


def pytest_addoption(parser: pytest.Parser) -> None:
    """Add options to the pytest command line."""
    parser.addoption(
        '--run-slow',
        action='store_true',
        help='run the long Monte-Carlo acceptance tests',
    )


def pytest_collection_modifyitems(
    config: pytest.Config,
    items: list[pytest.Item],
) -> None:
    """Skip slow tests unless they are requested."""
    if config.getoption('--run-slow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --run-slow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _monkeypatch(monkeypatch: pytest.MonkeyPatch) -> None:
    """Pin provenance and keep the process hooks intact."""
    monkeypatch.setattr(sys, 'excepthook', sys.excepthook)
    monkeypatch.setattr(threading, 'excepthook', threading.excepthook)

    monkeypatch.setattr(
        'homodrift.harness.runner._now',
        lambda: '2023-01-01T00:00:00+00:00',
    )
    monkeypatch.setattr('homodrift.harness.runner.version', lambda _: '0.0.0')


_ = fixtures, _monkeypatch
