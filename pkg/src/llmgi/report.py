"""Run report assembly, schema, and the measurement-free view used for diffs."""

from __future__ import annotations

import copy
import uuid
from datetime import datetime, timezone
from typing import Any

from .config import Experiment
from .engine import RunResult

_FITNESS = {
    "type": "object",
    "required": ["valid", "tests_passed", "tests_total", "time_ms", "peak_mem_bytes",
                 "measurement_method", "variant_hash"],
    "additionalProperties": False,
    "properties": {
        "valid": {"type": "boolean"},
        "tests_passed": {"type": "integer", "minimum": 0},
        "tests_total": {"type": "integer", "minimum": 0},
        "time_ms": {"type": ["number", "null"], "minimum": 0},
        "peak_mem_bytes": {"type": ["integer", "null"], "minimum": 0},
        "measurement_method": {"type": "string"},
        "variant_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
    },
}

_GENERATION = {
    "type": "object",
    "required": ["generation", "best_hash", "best_patch_len", "best_fitness", "mean_metric", "n_valid",
                 "n_passing", "operator_counts", "cache_hits", "evaluations", "llm_calls", "population"],
    "properties": {
        "generation": {"type": "integer", "minimum": 0},
        "best_fitness": _FITNESS,
        "mean_metric": {"type": ["number", "null"]},
        "operator_counts": {"type": "object", "additionalProperties": {"type": "integer"}},
        "population": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["variant_hash", "parents", "operator", "generation", "patch_len", "valid"],
                "properties": {
                    "operator": {"enum": ["init", "delete", "insert", "swap", "llm", "crossover", "elite"]},
                    "parents": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
    },
}

REPORT_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "GI run report",
    "type": "object",
    "required": ["run_id", "started_at", "finished_at", "config", "baseline", "best", "generations",
                 "provider", "measurement_method"],
    "properties": {
        "run_id": {"type": "string", "format": "uuid"},
        "started_at": {"type": "string", "format": "date-time"},
        "finished_at": {"type": "string", "format": "date-time"},
        "config": {"type": "object", "required": ["target", "objective", "evolution", "tests"]},
        "baseline": _FITNESS,
        "best": {
            "type": "object",
            "required": ["patch", "fitness", "minimized"],
            "properties": {
                "patch": {"type": "object", "required": ["base_hash", "edits"]},
                "fitness": _FITNESS,
                "minimized": {"type": "boolean"},
            },
        },
        "generations": {"type": "array", "items": _GENERATION},
        "provider": {"type": "object", "required": ["endpoint", "model", "parameters"]},
        "measurement_method": {"type": "string"},
    },
}

# fields that carry wall-clock or memory readings
MEASURED = {"time_ms", "peak_mem_bytes", "measurement_method", "mean_metric"}
VOLATILE = {"run_id", "started_at", "finished_at", "null_overhead_ms", "timeouts_ms"}


def now_rfc3339() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def new_run_id() -> str:
    return str(uuid.uuid4())


def build_report(result: RunResult, exp: Experiment, *, run_id: str, started_at: str, finished_at: str,
                 measurement_method: str, calibration: dict[str, Any] | None = None) -> dict[str, Any]:
    report = {
        "run_id": run_id,
        "started_at": started_at,
        "finished_at": finished_at,
        "config": exp.echo(),
        "baseline": result.baseline.to_dict(),
        "best": {
            "patch": result.best.patch.to_dict(),
            "fitness": result.best.fitness.to_dict(),
            "minimized": result.minimized,
            "variant_hash": result.best.variant_hash,
            "lineage": {"parents": list(result.best.lineage.parents), "operator": result.best.lineage.operator,
                        "generation": result.best.lineage.generation},
        },
        "improved": result.improved(),
        "stop_reason": result.stop_reason,
        "llm_calls": result.llm_calls,
        "generations": [g.to_dict() for g in result.history],
        "provider": exp.provider.describe(),
        "measurement_method": measurement_method,
    }
    if calibration:
        report.update(calibration)
    return report


def strip_measurements(obj: Any) -> Any:
    """Copy of a report with every timing/memory reading and run identity removed."""
    obj = copy.deepcopy(obj)

    def walk(x):
        if isinstance(x, dict):
            for k in list(x):
                if k in MEASURED or k in VOLATILE:
                    del x[k]
                else:
                    walk(x[k])
        elif isinstance(x, list):
            for item in x:
                walk(item)

    walk(obj)
    return obj
