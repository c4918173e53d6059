import pytest

from tofsim.config import load_config
from tofsim.radiometry import ApdChain


@pytest.fixture(autouse=True)
def _no_thread_override(monkeypatch):
    monkeypatch.delenv("TOFSIM_THREADS", raising=False)


@pytest.fixture
def cfg():
    return load_config()


@pytest.fixture
def chain():
    return ApdChain()
