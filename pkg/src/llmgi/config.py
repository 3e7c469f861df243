"""TOML experiment configuration.

Sections: ``[target]`` (file, entry_function, language), ``[objective]``
(or a top-level ``objective = "time"``), ``[evolution]``, ``[provider]``,
optional ``[toolchain]`` overrides, ``[[tests]]`` and an optional
``[workload]`` (defaults to the last test). Relative paths resolve against
the config file's directory.
"""

from __future__ import annotations

import dataclasses
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .engine import EvolutionConfig
from .errors import ParseError, ValidationError
from .harness import PROFILES, TestCase, ToolchainProfile
from .llm import DEFAULT_STOP
from .objective import OBJECTIVES

FIXTURES = Path(__file__).resolve().parent / "fixtures"


@dataclass
class ProviderConfig:
    kind: str = "none"  # none | mock | http
    mock_file: str | None = None
    endpoint: str | None = None
    model: str = "code-davinci-002"
    max_tokens: int = 512
    temperature: float = 0.8
    stop: tuple[str, ...] = DEFAULT_STOP
    requests_per_minute: float | None = None
    retries: int = 3
    backoff_s: float = 1.0

    def describe(self) -> dict[str, Any]:
        return {
            "endpoint": "mock" if self.kind == "mock" else (self.endpoint or "none"),
            "model": self.model,
            "parameters": {"max_tokens": self.max_tokens, "temperature": self.temperature,
                           "stop": list(self.stop), "n": 1},
        }


@dataclass
class Experiment:
    evolution: EvolutionConfig
    profile: ToolchainProfile
    tests: list[TestCase]
    workload: TestCase
    target: Path
    entry_function: str
    provider: ProviderConfig
    repeats: int = 5
    source_path: Path | None = None
    raw: dict[str, Any] = field(default_factory=dict)

    def echo(self) -> dict[str, Any]:
        """Everything needed to re-run: the parsed config with defaults applied."""
        return {
            "target": {"file": str(self.target), "entry_function": self.entry_function,
                       "language": self.profile.language_tag},
            "objective": {"name": self.evolution.objective.name, "repeats": self.repeats,
                          "metric_resolution": self.evolution.metric_resolution},
            "evolution": {k: v for k, v in self.evolution.to_dict().items()
                          if k not in ("objective", "metric_resolution")},
            "toolchain": dataclasses.asdict(self.profile),
            "provider": {k: (list(v) if isinstance(v, tuple) else v)
                         for k, v in dataclasses.asdict(self.provider).items()},
            "tests": [_test_dict(t) for t in self.tests],
            "workload": _test_dict(self.workload),
        }


def _test_dict(t: TestCase) -> dict[str, Any]:
    return {"id": t.id, "args": list(t.invocation), "expected_stdout": t.expected_stdout,
            "timeout_ms": t.timeout_ms}


def _typed(section: str, table: dict, name: str, kind, default):
    value = table.get(name, default)
    if value is None:
        return None
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise ValidationError(f"{section}.{name}", f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _parse_test(section: str, d: dict, index: int) -> TestCase:
    if not isinstance(d, dict):
        raise ValidationError(section, "expected a table")
    args = d.get("args", [])
    if not isinstance(args, list):
        raise ValidationError(f"{section}.args", "expected a list")
    expected = d.get("expected_stdout")
    timeout = _typed(section, d, "timeout_ms", int, None)
    if timeout is not None and timeout <= 0:
        raise ValidationError(f"{section}.timeout_ms", "must be > 0")
    return TestCase(str(d.get("id", f"test{index}")), tuple(str(a) for a in args),
                    None if expected is None else str(expected), timeout)


def parse_config(data: dict[str, Any], base_dir: Path) -> Experiment:
    target = data.get("target")
    if not isinstance(target, dict) or "file" not in target:
        raise ValidationError("target.file", "required")
    entry = target.get("entry_function")
    if not isinstance(entry, str) or not entry:
        raise ValidationError("target.entry_function", "required")
    language = target.get("language", "python")
    if language not in PROFILES and "toolchain" not in data:
        raise ValidationError("target.language", f"unknown profile {language!r}; add a [toolchain] section")

    profile = PROFILES.get(language, PROFILES["python"])
    overrides = data.get("toolchain", {})
    known = {f.name for f in dataclasses.fields(ToolchainProfile)}
    for k in overrides:
        if k not in known:
            raise ValidationError(f"toolchain.{k}", "unknown field")
    try:
        profile = dataclasses.replace(profile, language_tag=language, **overrides)
    except ValueError as exc:
        raise ValidationError("toolchain", str(exc)) from exc

    objective = data.get("objective", "time")
    if isinstance(objective, str):
        objective = {"name": objective}
    name = objective.get("name", "time")
    if name not in OBJECTIVES:
        raise ValidationError("objective.name", f"must be one of {sorted(OBJECTIVES)}, got {name!r}")
    repeats = _typed("objective", objective, "repeats", int, 5 if name == "time" else 1)
    if repeats < 1:
        raise ValidationError("objective.repeats", "must be >= 1")

    evo = data.get("evolution", {})
    defaults = EvolutionConfig()
    known = {f.name for f in dataclasses.fields(EvolutionConfig)} - {"objective", "metric_resolution"}
    for k in evo:
        if k not in known:
            raise ValidationError(f"evolution.{k}", "unknown field")
    kinds = {"p_llm": float, "p_crossover": float, "budget_wall_ms": float}
    values = {k: _typed("evolution", evo, k, kinds.get(k, int), getattr(defaults, k)) for k in known}
    values["metric_resolution"] = _typed("objective", objective, "metric_resolution", float,
                                         defaults.metric_resolution)
    evolution = EvolutionConfig(objective=OBJECTIVES[name], **values).validate()

    prov = dict(data.get("provider", {}))
    if "stop" in prov:
        prov["stop"] = tuple(prov["stop"])
    try:
        provider = ProviderConfig(**prov)
    except TypeError as exc:
        raise ValidationError("provider", str(exc)) from exc
    if provider.kind not in ("none", "mock", "http"):
        raise ValidationError("provider.kind", "must be none, mock or http")
    if provider.kind == "mock":
        if not provider.mock_file:
            raise ValidationError("provider.mock_file", "required for the mock provider")
        provider.mock_file = str(base_dir / provider.mock_file)
    if provider.kind == "http" and not provider.endpoint:
        raise ValidationError("provider.endpoint", "required for the http provider")
    if provider.max_tokens < 1:
        raise ValidationError("provider.max_tokens", "must be >= 1")
    if not 0 <= provider.temperature <= 2:
        raise ValidationError("provider.temperature", "must lie in [0, 2]")

    raw_tests = data.get("tests")
    if not isinstance(raw_tests, list) or not raw_tests:
        raise ValidationError("tests", "at least one [[tests]] entry is required")
    tests = [_parse_test(f"tests[{i}]", t, i) for i, t in enumerate(raw_tests)]
    workload = _parse_test("workload", data["workload"], 0) if "workload" in data else tests[-1]

    return Experiment(evolution, profile, tests, workload, base_dir / target["file"], entry, provider,
                      repeats, raw=data)


def load_config(path: str | os.PathLike) -> Experiment:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ParseError(f"{path}: {exc}", int(m.group(1)) if m else None) from exc
    exp = parse_config(data, path.resolve().parent)
    exp.source_path = path
    return exp
