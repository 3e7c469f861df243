"""``gi`` command line: run, eval, minimize.

Exit codes: 0 success (for ``run``: best strictly improves the baseline),
3 ``run`` found no improvement, 1 configuration or input error, 2 toolchain
or provider failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import Experiment, load_config
from .engine import LLMMutator, run
from .errors import BaseMismatch, ConfigError, GIError, ProviderError, SandboxError, ToolchainMissing
from .harness import FitnessOrdering, Harness
from .llm import HttpProvider, MockProvider
from .patch import Patch, apply, minimize, segment
from .report import build_report, new_run_id, now_rfc3339

log = logging.getLogger("llmgi")

EXIT_OK, EXIT_CONFIG, EXIT_TOOLCHAIN, EXIT_NO_IMPROVEMENT = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load(path: str) -> Experiment:
    if not Path(path).is_file():
        raise CliError(f"config file not found: {path}", EXIT_CONFIG)
    try:
        return load_config(path)
    except (ConfigError, ValueError) as exc:
        raise CliError(f"invalid config: {exc}", EXIT_CONFIG) from exc


def _read(path: Path, what: str) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError(f"cannot read {what} {path}: {exc}", EXIT_CONFIG) from exc


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("GI_WORKERS", "1")))
    except ValueError:
        return 1


def _harness(exp: Experiment) -> Harness:
    return Harness(exp.profile, exp.tests, exp.workload, exp.evolution.objective, exp.entry_function,
                   repeats=exp.repeats, workers=_workers())


def _provider(exp: Experiment):
    p = exp.provider
    if p.kind == "mock":
        try:
            return MockProvider.from_file(p.mock_file)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot load mock map: {exc}", EXIT_CONFIG) from exc
    if p.kind == "http":
        return HttpProvider(p.endpoint, retries=p.retries, backoff_s=p.backoff_s,
                            requests_per_minute=p.requests_per_minute)
    return None


def cmd_run(args) -> int:
    exp = _load(args.config)
    if args.seed is not None:
        exp.evolution.seed = args.seed
    if args.mock:
        exp.provider.kind, exp.provider.mock_file = "mock", str(Path(args.mock).resolve())
    try:
        exp.evolution.validate()
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    unit = segment(_read(exp.target, "target").encode("utf-8"), exp.profile.comment_prefix, exp.profile.language_tag)
    provider = _provider(exp)
    llm = None
    if provider is not None:
        p = exp.provider
        llm = LLMMutator(provider, exp.entry_function, exp.evolution.objective, p.max_tokens, p.temperature,
                         tuple(p.stop), p.model)
    harness = _harness(exp)
    started = now_rfc3339()
    result = run(unit, harness, exp.evolution, llm=llm)
    finished = now_rfc3339()

    run_id = new_run_id()
    out = Path(args.out) / run_id
    out.mkdir(parents=True, exist_ok=False)
    report = build_report(
        result, exp, run_id=run_id, started_at=started, finished_at=finished,
        measurement_method=harness.measurement_method,
        calibration={"null_overhead_ms": harness.overhead_ms,
                     "timeouts_ms": {"test": harness.default_timeout_ms, "workload": harness.workload_timeout_ms}},
    )
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    (out / f"best{exp.profile.file_ext}").write_text(apply(unit, result.best.patch), encoding="utf-8")
    print(out)
    return EXIT_OK if result.improved() else EXIT_NO_IMPROVEMENT


def cmd_eval(args) -> int:
    exp = _load(args.config)
    source = _read(Path(args.source), "source")
    harness = _harness(exp)
    baseline = _read(exp.target, "target") if exp.target.is_file() else source
    harness.calibrate(baseline)
    print(json.dumps(harness.evaluate(source).to_dict(), indent=2))
    return EXIT_OK


def cmd_minimize(args) -> int:
    exp = _load(args.config)
    try:
        patch = Patch.from_json(_read(Path(args.patch), "patch"))
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(f"malformed patch file: {exc}", EXIT_CONFIG) from exc
    unit = segment(_read(exp.target, "target").encode("utf-8"), exp.profile.comment_prefix, exp.profile.language_tag)
    if patch.base_hash != unit.hash:
        raise CliError(f"BaseMismatch: patch targets {patch.base_hash[:12]}, {exp.target} is {unit.hash[:12]}",
                       EXIT_CONFIG)
    harness = _harness(exp)
    harness.calibrate(unit.text)
    baseline = harness.evaluate(unit.text)
    ordering = FitnessOrdering(exp.evolution.objective,
                               baseline.metric(exp.evolution.objective) if baseline.all_passed else None,
                               exp.evolution.metric_resolution)

    def oracle(p: Patch):
        try:
            return ordering.key(harness.evaluate(apply(unit, p)))
        except BaseMismatch:
            raise
        except GIError:
            return (1, 0, float("inf"))

    result = minimize(patch, oracle)
    dest = Path(args.out) if args.out else Path(args.patch).with_suffix(".min.json")
    dest.write_text(result.to_json(indent=2) + "\n", encoding="utf-8")
    print(f"{dest}: {len(patch)} -> {len(result)} edits")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gi", description="Genetic improvement with LLM mutations")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="evolve the target and write report.json + best source")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="runs")
    p.add_argument("--mock", help="mock provider map (prompt sha256 -> completion)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="print the FitnessReport of one source file")
    p.add_argument("--source", required=True)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("minimize", help="reduce a patch to a 1-minimal sub-patch")
    p.add_argument("--patch", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_minimize)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"gi: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"gi: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ToolchainMissing, ProviderError, SandboxError) as exc:
        print(f"gi: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_TOOLCHAIN
    except GIError as exc:
        print(f"gi: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
