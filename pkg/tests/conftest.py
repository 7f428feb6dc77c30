import os
from pathlib import Path

import pytest
from hypothesis import settings

# kernel and tail tables are cached between runs; delete the directory to rebuild them
os.environ.setdefault("FRACMIN_CACHE_DIR", str(Path(__file__).resolve().parent.parent / ".cache" / "kernels"))

settings.register_profile("default", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("default")


@pytest.fixture(scope="session")
def rng():
    import numpy as np
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion; printed at the end of the run."""
    def record(number: int, title: str, passed: bool, detail: str):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
