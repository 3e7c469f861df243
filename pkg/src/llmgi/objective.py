from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Objective:
    name: str
    inefficient_adjective: str
    efficient_adjective: str
    fast_suffix: str

    @property
    def metric(self) -> str:
        """FitnessReport field this objective minimizes."""
        return "time_ms" if self.name == "time" else "peak_mem_bytes"

    @classmethod
    def named(cls, name: str) -> "Objective":
        try:
            return OBJECTIVES[name]
        except KeyError:
            raise ValueError(f"unknown objective {name!r}; expected one of {sorted(OBJECTIVES)}") from None


TIME = Objective("time", "time-inefficient", "time-efficient", "_fast")
MEMORY = Objective("memory", "memory-inefficient", "memory-efficient", "_efficient")
OBJECTIVES = {"time": TIME, "memory": MEMORY}
