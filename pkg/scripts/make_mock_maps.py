"""Regenerate the mock-provider maps shipped in src/llmgi/fixtures.

Each map sends the rendered prompt for a fixture to the continuation the
model produced for it. Bodies are stored with the two-space indentation
of the inputs; extraction re-indents them anyway.
"""

import json
from pathlib import Path

from llmgi.llm import build_prompt, find_function
from llmgi.objective import MEMORY, TIME

FIXTURES = Path(__file__).resolve().parent.parent / "src" / "llmgi" / "fixtures"

TIME_BODY = """\
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


print(fibonacci_fast(10))
"""

MEMORY_BODY = """\
  a, b = 1, 1
  for i in range(n-1):
    a, b = b, a+b
  return a
"""


def prompt_for(name, objective):
    code = (FIXTURES / name).read_text()
    fn = find_function(code, "fibonacci")
    return build_prompt(code.encode()[fn.start:fn.end].decode(), "fibonacci", objective)


def main():
    for fixture, objective, body, out in [
        ("fib_time.py", TIME, TIME_BODY, "mock_time.json"),
        ("fib_memory.py", MEMORY, MEMORY_BODY, "mock_memory.json"),
    ]:
        prompt = prompt_for(fixture, objective)
        path = FIXTURES / out
        path.write_text(json.dumps({prompt.digest: body}, indent=2) + "\n")
        print(f"{path}: {prompt.digest}")


if __name__ == "__main__":
    main()
