import pytest

from fiwi.evaluator import Engine, ModelConfig
from fiwi.topology import build_topology, doubled_spec, fig4_spec, make_plant


def fig4(kind="TDM", **kw):
    plant = None if kind is None else make_plant(kind, 4, **kw)
    return build_topology(fig4_spec(plant))


def fig4x2(kind="WR", **kw):
    kw.setdefault("channels", 2)
    return build_topology(doubled_spec(make_plant(kind, 8, **kw)))


@pytest.fixture(scope="session")
def wmn():
    return fig4(None)


@pytest.fixture(scope="session")
def tdm():
    return fig4("TDM")


@pytest.fixture(scope="session")
def tdm_engine(tdm):
    return Engine(tdm, ModelConfig())


@pytest.fixture(scope="session")
def wmn_engine(wmn):
    return Engine(wmn, ModelConfig())


# -- acceptance verdicts ------------------------------------------------------
_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion, then assert."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])
