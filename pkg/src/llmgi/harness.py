"""Variant evaluation: syntax gate, test gate, time and memory measurement.

Every child process runs in a fresh temporary directory that is removed when
the process exits. Peak memory comes from ``wait4`` resource accounting for
that specific child, so concurrent evaluations do not pollute each other.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os
import shlex
import signal
import statistics
import subprocess
import sys
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .errors import SandboxError, TimeoutExceeded, ToolchainMissing, UnsupportedPlatform, WorkloadFailed
from .objective import Objective
from .patch import content_hash

log = logging.getLogger(__name__)

_SRC_ROOT = str(Path(__file__).resolve().parent.parent)


@dataclass(frozen=True)
class ToolchainProfile:
    """Command templates; ``{file}`` is the variant path, ``{args}`` expands to
    the test's argument list, ``{entry}`` the entry function, ``{python}`` the
    running interpreter."""

    syntax_check_cmd: str
    run_cmd: str
    file_ext: str = ".py"
    comment_prefix: str = "#"
    language_tag: str = "python"
    subtract_startup: bool = True

    def __post_init__(self):
        for name in ("syntax_check_cmd", "run_cmd"):
            if "{file}" not in getattr(self, name):
                raise ValueError(f"{name} must contain a {{file}} placeholder")

    def render(self, template: str, file: str, args: Sequence[str] = (), entry: str = "") -> list[str]:
        out: list[str] = []
        subs = {"{file}": file, "{entry}": entry, "{python}": sys.executable}
        for tok in shlex.split(template):
            if tok == "{args}":
                out.extend(str(a) for a in args)
                continue
            for k, v in subs.items():
                tok = tok.replace(k, v)
            out.append(tok)
        return out


PYTHON = ToolchainProfile(
    syntax_check_cmd="{python} -m py_compile {file}",
    run_cmd="{python} -m llmgi.call {file} {entry} {args}",
)
PROFILES = {"python": PYTHON}


@dataclass(frozen=True)
class TestCase:
    id: str
    invocation: tuple[str, ...]
    expected_stdout: str | None = None  # None: only the exit status is checked
    timeout_ms: int | None = None

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.timeout_ms is not None and self.timeout_ms <= 0:
            raise ValueError(f"test {self.id}: timeout_ms must be > 0")

    def matches(self, stdout: str) -> bool:
        return self.expected_stdout is None or stdout.rstrip("\n") == self.expected_stdout.rstrip("\n")


# -- processes ---------------------------------------------------------------


@dataclass
class ProcResult:
    returncode: int
    stdout: str
    stderr: str
    wall_ms: float
    peak_rss_bytes: int | None
    timed_out: bool = False


def _child_env() -> dict[str, str]:
    env = dict(os.environ)
    env["PYTHONPATH"] = os.pathsep.join(p for p in (_SRC_ROOT, env.get("PYTHONPATH")) if p)
    env["PYTHONDONTWRITEBYTECODE"] = "1"
    env["PYTHONHASHSEED"] = "0"
    return env


def _maxrss_bytes(ru_maxrss: int) -> int:
    return ru_maxrss if sys.platform == "darwin" else ru_maxrss * 1024


def run_process(cmd: Sequence[str], cwd: str, timeout_ms: float) -> ProcResult:
    """Spawn ``cmd``, enforce the timeout, and reap it with ``wait4``."""
    with tempfile.TemporaryFile() as out, tempfile.TemporaryFile() as err:
        t0 = time.perf_counter()
        try:
            proc = subprocess.Popen(
                list(cmd), cwd=cwd, stdin=subprocess.DEVNULL, stdout=out, stderr=err,
                env=_child_env(), start_new_session=True,
            )
        except FileNotFoundError as exc:
            raise ToolchainMissing(f"cannot spawn {cmd[0]!r}: {exc}") from exc
        except OSError as exc:
            raise SandboxError(f"spawn failed for {cmd[0]!r}: {exc}") from exc

        lock = threading.Lock()
        state = {"done": False, "timed_out": False}

        def kill():
            with lock:
                if state["done"]:
                    return
                state["timed_out"] = True
                try:
                    os.killpg(proc.pid, signal.SIGKILL)
                except (ProcessLookupError, PermissionError):
                    pass

        timer = threading.Timer(timeout_ms / 1000.0, kill)
        timer.start()
        try:
            if hasattr(os, "wait4"):
                _, status, usage = os.wait4(proc.pid, 0)
                wall = (time.perf_counter() - t0) * 1000.0
                proc.returncode = os.waitstatus_to_exitcode(status)
                peak = _maxrss_bytes(usage.ru_maxrss)
            else:  # pragma: no cover - non-POSIX
                proc.wait()
                wall = (time.perf_counter() - t0) * 1000.0
                peak = None
        finally:
            with lock:
                state["done"] = True
            timer.cancel()
        out.seek(0)
        err.seek(0)
        return ProcResult(
            proc.returncode,
            out.read().decode("utf-8", "replace"),
            err.read().decode("utf-8", "replace"),
            wall,
            peak,
            state["timed_out"],
        )


def run_variant(variant: str, profile: ToolchainProfile, args: Sequence[str] = (), entry: str = "",
                timeout_ms: float = 10_000, template: str | None = None) -> ProcResult:
    with tempfile.TemporaryDirectory(prefix="gi-eval-") as workdir:
        path = os.path.join(workdir, "variant" + profile.file_ext)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(variant)
        cmd = profile.render(template or profile.run_cmd, path, args, entry)
        return run_process(cmd, workdir, timeout_ms)


# -- gates -------------------------------------------------------------------


def syntax_check(variant: str, profile: ToolchainProfile, timeout_ms: float = 30_000) -> bool:
    res = run_variant(variant, profile, timeout_ms=timeout_ms, template=profile.syntax_check_cmd)
    return res.returncode == 0 and not res.timed_out


@dataclass
class TestResult:
    id: str
    status: str  # pass | fail | timeout | crash
    stdout: str
    stderr: str
    wall_ms: float

    __test__ = False

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def run_test(variant: str, test: TestCase, profile: ToolchainProfile, entry: str = "",
             default_timeout_ms: float = 1000) -> TestResult:
    timeout = test.timeout_ms or default_timeout_ms
    res = run_variant(variant, profile, test.invocation, entry, timeout)
    if res.timed_out:
        status = "timeout"
    elif res.returncode != 0:
        status = "crash"
    else:
        status = "pass" if test.matches(res.stdout) else "fail"
    return TestResult(test.id, status, res.stdout, res.stderr, res.wall_ms)


def run_tests(variant: str, tests: Iterable[TestCase], profile: ToolchainProfile, entry: str = "",
              default_timeout_ms: float = 1000) -> list[TestResult]:
    return [run_test(variant, t, profile, entry, default_timeout_ms) for t in tests]


# -- measurement -------------------------------------------------------------

Runner = Callable[[], ProcResult]


def _workload_runner(variant: str, workload: TestCase, profile: ToolchainProfile, entry: str,
                     timeout_ms: float) -> Runner:
    def run() -> ProcResult:
        res = run_variant(variant, profile, workload.invocation, entry, workload.timeout_ms or timeout_ms)
        if res.timed_out:
            raise TimeoutExceeded(f"workload {workload.id} exceeded {workload.timeout_ms or timeout_ms:.0f} ms")
        if res.returncode != 0 or not workload.matches(res.stdout):
            raise WorkloadFailed(f"workload {workload.id} failed (exit {res.returncode}): {res.stderr[-300:]}")
        return res
    return run


def measure_time(variant: str, workload: TestCase, profile: ToolchainProfile, repeats: int = 5, *,
                 entry: str = "", timeout_ms: float = 60_000, overhead_ms: float = 0.0,
                 runner: Runner | None = None) -> float:
    """Median wall-clock ms over ``repeats`` runs, less a fixed startup overhead."""
    run = runner or _workload_runner(variant, workload, profile, entry, timeout_ms)
    samples = [run().wall_ms for _ in range(repeats)]
    return max(0.0, statistics.median(samples) - overhead_ms)


def measure_memory(variant: str, workload: TestCase, profile: ToolchainProfile, *, entry: str = "",
                   timeout_ms: float = 60_000, runner: Runner | None = None) -> int:
    if not hasattr(os, "wait4"):
        raise UnsupportedPlatform("peak memory needs wait4() child accounting")
    run = runner or _workload_runner(variant, workload, profile, entry, timeout_ms)
    res = run()
    if res.peak_rss_bytes is None:
        raise UnsupportedPlatform("child accounting reported no peak RSS")
    return res.peak_rss_bytes


def null_overhead_ms(profile: ToolchainProfile, workload: TestCase, entry: str, repeats: int = 5,
                     timeout_ms: float = 30_000) -> float:
    """Median wall-clock of running an empty program through ``run_cmd``."""
    samples = [run_variant("", profile, workload.invocation, entry, timeout_ms).wall_ms for _ in range(repeats)]
    return statistics.median(samples)


# -- reports and ordering ----------------------------------------------------


@dataclass(frozen=True)
class FitnessReport:
    valid: bool
    tests_passed: int
    tests_total: int
    time_ms: float | None
    peak_mem_bytes: int | None
    measurement_method: str
    variant_hash: str

    def __post_init__(self):
        if self.tests_passed > self.tests_total:
            raise ValueError("tests_passed exceeds tests_total")
        if not self.valid and self.tests_passed:
            raise ValueError("invalid variants cannot pass tests")

    @property
    def all_passed(self) -> bool:
        return self.valid and self.tests_passed == self.tests_total

    def metric(self, objective: Objective) -> float | None:
        return getattr(self, objective.metric)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FitnessReport":
        return cls(**{f.name: d[f.name] for f in dataclasses.fields(cls)})

    @classmethod
    def invalid(cls, variant_hash: str, tests_total: int, reason: str = "syntax gate") -> "FitnessReport":
        return cls(False, 0, tests_total, None, None, f"not measured: {reason}", variant_hash)


@dataclass(frozen=True)
class FitnessOrdering:
    """Lexicographic preference: valid, tests passed, objective metric.

    With ``resolution > 0`` and a baseline metric, metrics are compared on a
    grid of step ``resolution * baseline`` centred on the baseline, so
    measurement noise smaller than half a step cannot reorder candidates and
    equal cells fall through to the patch-length tiebreak.
    """

    objective: Objective
    baseline: float | None = None
    resolution: float = 0.0

    def metric_key(self, value: float | None) -> float:
        if value is None:
            return math.inf
        if self.resolution > 0 and self.baseline:
            return math.floor((value - self.baseline) / (self.baseline * self.resolution) + 0.5)
        return float(value)

    def key(self, r: FitnessReport) -> tuple:
        metric = self.metric_key(r.metric(self.objective)) if r.all_passed else math.inf
        return (0 if r.valid else 1, -r.tests_passed, metric)

    def full_key(self, r: FitnessReport, patch_len: int) -> tuple:
        return self.key(r) + (patch_len, r.variant_hash)


def compare(a: FitnessReport, b: FitnessReport, objective: Objective, patch_len_a: int, patch_len_b: int,
            ordering: FitnessOrdering | None = None) -> int:
    """-1 if ``a`` is preferred, 1 if ``b`` is, 0 if they are equivalent."""
    ordering = ordering or FitnessOrdering(objective)
    ka, kb = ordering.full_key(a, patch_len_a), ordering.full_key(b, patch_len_b)
    return (ka > kb) - (ka < kb)


# -- harness -----------------------------------------------------------------


class Harness:
    """Evaluates variant sources for one target, caching reports by content hash."""

    def __init__(self, profile: ToolchainProfile, tests: Sequence[TestCase], workload: TestCase,
                 objective: Objective, entry: str = "", repeats: int = 5, workers: int = 1,
                 default_timeout_ms: float = 1000.0, workload_timeout_ms: float = 60_000.0):
        self.profile = profile
        self.tests = list(tests)
        self.workload = workload
        self.objective = objective
        self.entry = entry
        self.repeats = repeats
        self.workers = max(1, workers)
        self.default_timeout_ms = default_timeout_ms
        self.workload_timeout_ms = workload_timeout_ms
        self.overhead_ms = 0.0
        self.cache: dict[str, FitnessReport] = {}
        self.cache_hits = 0
        self.evaluations = 0
        self._lock = threading.Lock()

    @property
    def measurement_method(self) -> str:
        if self.objective.name == "time":
            net = "_net" if self.profile.subtract_startup else ""
            return f"wall_clock_median{net}(repeats={self.repeats});peak_rss=wait4.ru_maxrss"
        return "peak_rss=wait4.ru_maxrss;wall_clock(repeats=1)"

    def calibrate(self, baseline_source: str) -> None:
        """Derive timeouts from the unpatched program and the startup overhead."""
        if self.objective.name == "time" and self.profile.subtract_startup:
            self.overhead_ms = null_overhead_ms(self.profile, self.workload, self.entry, self.repeats)
        results = run_tests(baseline_source, self.tests, self.profile, self.entry, 60_000)
        slowest = max((r.wall_ms for r in results), default=0.0)
        self.default_timeout_ms = max(1000.0, 10 * slowest)
        res = run_variant(baseline_source, self.profile, self.workload.invocation, self.entry, 600_000)
        self.workload_timeout_ms = max(1000.0, 10 * res.wall_ms)
        log.info("calibrated: test timeout %.0f ms, workload timeout %.0f ms, overhead %.1f ms",
                 self.default_timeout_ms, self.workload_timeout_ms, self.overhead_ms)

    def _measure(self, variant: str) -> FitnessReport:
        h = content_hash(variant)
        total = len(self.tests)
        if not syntax_check(variant, self.profile):
            return FitnessReport.invalid(h, total)
        results = run_tests(variant, self.tests, self.profile, self.entry, self.default_timeout_ms)
        passed = sum(r.passed for r in results)
        if passed < total:
            return FitnessReport(True, passed, total, None, None, "not measured: failing tests", h)
        samples: list[ProcResult] = []
        run = _workload_runner(variant, self.workload, self.profile, self.entry, self.workload_timeout_ms)

        def recorded() -> ProcResult:
            samples.append(run())
            return samples[-1]

        try:
            if self.objective.name == "time":
                t = measure_time(variant, self.workload, self.profile, self.repeats,
                                 overhead_ms=self.overhead_ms, runner=recorded)
                mem = max(s.peak_rss_bytes or 0 for s in samples)
            else:
                mem = measure_memory(variant, self.workload, self.profile, runner=recorded)
                t = samples[0].wall_ms
        except (TimeoutExceeded, WorkloadFailed) as exc:
            return FitnessReport(True, passed, total, None, None, f"not measured: {exc}", h)
        return FitnessReport(True, passed, total, round(t, 3), int(mem), self.measurement_method, h)

    def evaluate(self, variant: str) -> FitnessReport:
        """Report for ``variant``; a cached report is returned as the same object."""
        return self.evaluate_many([variant])[0]

    def _store(self, h: str, report: FitnessReport) -> None:
        with self._lock:
            self.evaluations += 1
            self.cache.setdefault(h, report)

    def evaluate_many(self, variants: Sequence[str]) -> list[FitnessReport]:
        """Evaluate a batch; cached and repeated variants are not re-executed."""
        hashes = [content_hash(v) for v in variants]
        todo: dict[str, str] = {}
        with self._lock:
            for h, v in zip(hashes, variants):
                if h in self.cache or h in todo:
                    self.cache_hits += 1
                else:
                    todo[h] = v
        if self.workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                reports = list(pool.map(self._measure, todo.values()))
        else:
            reports = [self._measure(v) for v in todo.values()]
        for h, r in zip(todo, reports):
            self._store(h, r)
        return [self.cache[h] for h in hashes]
