from pathlib import Path

import hypothesis
import pytest

from llmgi.config import FIXTURES

hypothesis.settings.register_profile("ci", deadline=None, max_examples=200)
hypothesis.settings.load_profile("ci")

FIB_RECURSIVE = FIXTURES.joinpath("fib_time.py").read_text()
FIB_LIST = FIXTURES.joinpath("fib_memory.py").read_text()

# Expected rewrites, in the two-space style of the inputs.
FIB_ITERATIVE = """\
def fibonacci(n):
  if n == 1 or n == 2:
    return 1
  else:
    a = 1
    b = 1
    for i in range(3,n+1):
      c = a + b
      a = b
      b = c
    return c
"""

FIB_PAIRWISE = """\
def fibonacci(n):
  a, b = 1, 1
  for i in range(n-1):
    a, b = b, a+b
  return a
"""


def fib_reference(n: int) -> int:
    """Brute-force recurrence anchored at fib(1) = fib(2) = 1."""
    seq = {1: 1, 2: 1}
    for k in range(3, n + 1):
        seq[k] = seq[k - 1] + seq[k - 2]
    return seq[n]


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


# -- acceptance bookkeeping ----------------------------------------------------

ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


class criterion:
    """Context manager recording one acceptance criterion's outcome."""

    def __init__(self, number: int, title: str):
        self.number, self.title, self.detail = number, title, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        ok = exc_type is None
        detail = self.detail if ok else f"{self.detail} {exc_type.__name__}: {exc}".strip()
        ACCEPTANCE[self.number] = (self.title, ok, detail)
        return False


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {title}: {detail}")
