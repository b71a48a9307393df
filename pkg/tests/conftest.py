import os
from importlib import resources
from pathlib import Path

import pytest

from fairaudit.ingest import load_dataset

FIXTURES = Path(str(resources.files("fairaudit") / "fixtures"))
RECIPES = Path(str(resources.files("fairaudit") / "recipes"))
DATA_DIR = Path(os.environ.get("FAIRAUDIT_DATA", Path(__file__).resolve().parents[1] / "data"))


@pytest.fixture(scope="session")
def fixture1():
    return load_dataset(FIXTURES / "fixture1.csv", FIXTURES / "fixture1.json")


@pytest.fixture(scope="session")
def fixture2():
    return load_dataset(FIXTURES / "fixture2.csv", FIXTURES / "fixture2.json")


@pytest.fixture(scope="session")
def fixture3():
    return load_dataset(FIXTURES / "fixture3.csv", RECIPES / "law_gender.json")


ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
