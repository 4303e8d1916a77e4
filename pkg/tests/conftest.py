import socket
from importlib import resources

import pytest

from icsthreat.model import parse_model
from icsthreat.nvd import attach_scores, load_bindings, load_feed
from icsthreat.stride import enumerate_threats, load_rules

_LOCAL = ("127.0.0.1", "::1", "localhost")
_real_connect = socket.socket.connect


def _guarded_connect(self, address, *args, **kwargs):
    host = address[0] if isinstance(address, tuple) else address
    if self.family == socket.AF_UNIX or host in _LOCAL:
        return _real_connect(self, address, *args, **kwargs)
    raise OSError(f"test suite runs offline; refused connection to {address!r}")


@pytest.fixture(autouse=True)
def offline(monkeypatch):
    """Only loopback connections are allowed during tests."""
    monkeypatch.setattr(socket.socket, "connect", _guarded_connect)


def case_bytes(case: str, name: str) -> bytes:
    return resources.files("icsthreat.data").joinpath("cases", case, name).read_bytes()


def case_path(case: str, name: str) -> str:
    return str(resources.files("icsthreat.data").joinpath("cases", case, name))


def load_case(case: str):
    """(model, threats, scored threats) for a bundled case study."""
    m = parse_model(case_bytes(case, "model.json"))
    ts = enumerate_threats(m, load_rules(case_bytes(case, "rules.json")))
    sts = attach_scores(ts, load_feed(case_bytes(case, "feed.json")),
                        load_bindings(case_bytes(case, "bindings.json")))
    return m, ts, sts


@pytest.fixture(scope="session")
def iom():
    return load_case("iom")


@pytest.fixture(scope="session")
def iop():
    return load_case("iop")
