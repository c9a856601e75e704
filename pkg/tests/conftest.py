import numpy as np
import pytest

from simtrx.channel import ChannelSet, WidebandConfig
from simtrx.geometry import UePlacement, build_urpa_geometry

LAM = 0.03

_CRITERIA: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion(request):
    """Record an acceptance criterion outcome for the terminal summary."""

    def record(key: str, ok: bool, detail: str = ""):
        _CRITERIA[key] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: (int(k.split()[0].rstrip("abcde")), k)):
        ok, detail = _CRITERIA[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}  {detail}")


def make_channels(counts=(8, 8), L=1, feeds=(1, 2), users=((0.0, 0.0, 0.5),), K=1, model="near_field",
                  spacing=5 * LAM, noise=1e-13, power=1e-3):
    geo = build_urpa_geometry(counts, LAM / 4, (spacing,) * L, feeds, LAM / 2)
    wb = WidebandConfig(1e10, 6e8, K, noise, power)
    return ChannelSet(geo, UePlacement(np.asarray(users, dtype=float)), wb, model=model)


@pytest.fixture
def small_channels():
    return make_channels()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
