from importlib import resources

import pytest

from regrelax.dsl import parse_scene

_ACCEPTANCE: list[tuple[str, bool, str]] = []


def scene_text(name: str) -> str:
    return resources.files("regrelax").joinpath(f"data/scenes/{name}.scene").read_text()


SCENARIO1 = scene_text("scenario1")
SCENARIO2 = scene_text("scenario2")
SCENARIO1_RELAXED = SCENARIO1.replace("hasEmotion CyberCar1 Nervous", "hasEmotion CyberCar1 Relaxed")


@pytest.fixture
def scenario1():
    return parse_scene(SCENARIO1)


@pytest.fixture
def scenario1_relaxed():
    return parse_scene(SCENARIO1_RELAXED)


@pytest.fixture
def scenario2():
    return parse_scene(SCENARIO2)


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome, then assert it."""
    def record(label: str, ok: bool, detail: str = ""):
        _ACCEPTANCE.append((label, bool(ok), detail))
        assert ok, f"{label}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _ACCEPTANCE:
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{status}  {label}" + (f"  ({detail})" if detail else ""))
