"""Child-process driver: ``python -m llmgi.call FILE ENTRY [ARGS...]``.

Loads FILE as a module, calls ENTRY with the arguments (Python literals where
they parse, strings otherwise) and prints the result.
"""

import ast
import importlib.util
import sys


def _arg(text):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) < 2:
        print("usage: python -m llmgi.call FILE ENTRY [ARGS...]", file=sys.stderr)
        return 2
    path, entry, *args = argv
    if hasattr(sys, "set_int_max_str_digits"):
        sys.set_int_max_str_digits(0)
    spec = importlib.util.spec_from_file_location("variant", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    fn = getattr(module, entry, None)
    if fn is None:
        print(f"{path} defines no {entry!r}", file=sys.stderr)
        return 2
    print(fn(*[_arg(a) for a in args]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
