"""GenProg-style edit operators and one-point crossover over edit lists."""

from __future__ import annotations

import hashlib
import random

from .errors import BaseMismatch, EmptyUnit, TooFewSpans
from .patch import Delete, EditOp, InsertCopy, Patch, SourceUnit, Swap

CLASSIC_OPERATORS = ("delete", "insert", "swap")


class RngStream:
    """Seeded generator; distinct ``stream_id`` values give independent streams."""

    def __init__(self, seed: int, stream_id: str = "main"):
        self.seed = seed
        self.stream_id = stream_id
        digest = hashlib.sha256(f"{seed}:{stream_id}".encode()).digest()
        self._rng = random.Random(int.from_bytes(digest[:8], "big"))

    def randrange(self, n: int) -> int:
        return self._rng.randrange(n)

    def random(self) -> float:
        return self._rng.random()

    def pair(self, n: int) -> tuple[int, int]:
        a, b = self._rng.sample(range(n), 2)
        return (a, b) if a < b else (b, a)

    def child(self, stream_id: str) -> "RngStream":
        return RngStream(self.seed, f"{self.stream_id}/{stream_id}")


def mutate_delete(rng: RngStream, unit: SourceUnit) -> EditOp:
    if not unit.spans:
        raise EmptyUnit("cannot delete from a unit with no statements")
    return Delete(rng.randrange(len(unit.spans)))


def mutate_insert(rng: RngStream, unit: SourceUnit) -> EditOp:
    if not unit.spans:
        raise EmptyUnit("cannot insert into a unit with no statements")
    n = len(unit.spans)
    position = rng.randrange(n)
    donor = rng.randrange(n)
    return InsertCopy(position, donor)


def mutate_swap(rng: RngStream, unit: SourceUnit) -> EditOp:
    if len(unit.spans) < 2:
        raise TooFewSpans(f"swap needs two statements, unit has {len(unit.spans)}")
    a, b = rng.pair(len(unit.spans))
    return Swap(a, b)


MUTATORS = {"delete": mutate_delete, "insert": mutate_insert, "swap": mutate_swap}


def classic_mutation(rng: RngStream, unit: SourceUnit) -> tuple[str, EditOp]:
    """Pick one classic operator uniformly (swap only when legal) and apply it."""
    if not unit.spans:
        raise EmptyUnit("unit has no statements")
    names = CLASSIC_OPERATORS if len(unit.spans) >= 2 else ("delete", "insert")
    name = names[rng.randrange(len(names))]
    return name, MUTATORS[name](rng, unit)


def crossover(a: Patch, b: Patch, rng: RngStream) -> Patch:
    if a.base_hash != b.base_hash:
        raise BaseMismatch("parents target different sources")
    cut_a = rng.randrange(len(a.edits) + 1)
    cut_b = rng.randrange(len(b.edits) + 1)
    return a.with_edits(a.edits[:cut_a] + b.edits[cut_b:])
