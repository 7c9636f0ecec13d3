from __future__ import annotations

import pytest

from helpers import write_bundle
from tuso.gateway import SOCKET_OPS
from tuso.sandbox import load_bundle


@pytest.fixture()
def bundle_dir(tmp_path):
    write_bundle(tmp_path / "task")
    return tmp_path / "task"


@pytest.fixture()
def bundle(bundle_dir):
    return load_bundle(bundle_dir / "bundle.toml")


@pytest.fixture(autouse=True)
def _no_network_counter():
    # Scripted tests must not touch the network; tests that stub HTTP reset this themselves.
    SOCKET_OPS.reset()
    yield
