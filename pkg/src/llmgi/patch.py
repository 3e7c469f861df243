"""Line-granular source segmentation and the patch algebra.

A :class:`SourceUnit` lists every non-blank, non-comment physical line of a
program as a byte span. Edits refer to spans by their index in that original
table, so an edit list keeps its meaning no matter which other edits precede
it; this is what makes one-point crossover over edit lists well defined.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Union

from .errors import BaseMismatch, EncodingError, IndexOutOfBounds, OverlappingReplace


def content_hash(text: str | bytes) -> str:
    if isinstance(text, str):
        text = text.encode("utf-8")
    return hashlib.sha256(text).hexdigest()


@dataclass(frozen=True)
class Span:
    start: int
    end: int  # exclusive; excludes the line terminator
    indent: int  # leading whitespace width in bytes


@dataclass(frozen=True)
class SourceUnit:
    text: str
    spans: tuple[Span, ...]
    language_tag: str = "python"
    data: bytes = field(default=b"", repr=False, compare=False)

    def __post_init__(self):
        if not self.data:
            object.__setattr__(self, "data", self.text.encode("utf-8"))

    @property
    def hash(self) -> str:
        return content_hash(self.data)

    def line(self, i: int) -> bytes:
        s = self.spans[i]
        return self.data[s.start:s.end]

    def __len__(self) -> int:
        return len(self.spans)


def segment(source: str | bytes, comment_prefix: str = "#", language_tag: str = "python") -> SourceUnit:
    if isinstance(source, bytes):
        try:
            text = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EncodingError(f"source is not valid UTF-8: {exc}") from exc
    else:
        text = source
    data = text.encode("utf-8")
    prefix = comment_prefix.encode("utf-8")
    spans = []
    pos = 0
    n = len(data)
    while pos < n:
        nl = data.find(b"\n", pos)
        line_end = n if nl < 0 else nl
        end = line_end - 1 if line_end > pos and data[line_end - 1:line_end] == b"\r" else line_end
        line = data[pos:end]
        stripped = line.lstrip(b" \t")
        body = stripped.strip()
        if body and not (prefix and body.startswith(prefix)):
            spans.append(Span(pos, end, len(line) - len(stripped)))
        pos = line_end + 1
    return SourceUnit(text=text, spans=tuple(spans), language_tag=language_tag, data=data)


# -- edits -------------------------------------------------------------------


@dataclass(frozen=True)
class Delete:
    target: int
    kind = "delete"


@dataclass(frozen=True)
class InsertCopy:
    position: int
    donor: int
    kind = "insert_copy"


@dataclass(frozen=True)
class Swap:
    a: int
    b: int
    kind = "swap"


@dataclass(frozen=True)
class Replace:
    start: int
    end: int
    new_text: str
    provenance: str = "llm"
    prompt_sha256: str | None = None
    kind = "replace"

    def __post_init__(self):
        if not self.new_text:
            raise ValueError("Replace.new_text must be non-empty")
        if self.provenance not in ("llm", "manual"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if not 0 <= self.start <= self.end:
            raise ValueError(f"bad region ({self.start}, {self.end})")


EditOp = Union[Delete, InsertCopy, Swap, Replace]


def edit_to_dict(e: EditOp) -> dict[str, Any]:
    if isinstance(e, Delete):
        return {"kind": "delete", "target": e.target}
    if isinstance(e, InsertCopy):
        return {"kind": "insert_copy", "position": e.position, "donor": e.donor}
    if isinstance(e, Swap):
        return {"kind": "swap", "a": e.a, "b": e.b}
    d = {"kind": "replace", "start": e.start, "end": e.end, "new_text": e.new_text, "provenance": e.provenance}
    if e.prompt_sha256 is not None:
        d["prompt_sha256"] = e.prompt_sha256
    return d


def edit_from_dict(d: dict[str, Any]) -> EditOp:
    kind = d.get("kind")
    if kind == "delete":
        return Delete(int(d["target"]))
    if kind == "insert_copy":
        return InsertCopy(int(d["position"]), int(d["donor"]))
    if kind == "swap":
        return Swap(int(d["a"]), int(d["b"]))
    if kind == "replace":
        return Replace(int(d["start"]), int(d["end"]), d["new_text"], d.get("provenance", "llm"), d.get("prompt_sha256"))
    raise ValueError(f"unknown edit kind {kind!r}")


@dataclass(frozen=True)
class Patch:
    base_hash: str
    edits: tuple[EditOp, ...] = ()

    @classmethod
    def identity(cls, unit: SourceUnit) -> "Patch":
        return cls(unit.hash, ())

    def __len__(self) -> int:
        return len(self.edits)

    def with_edits(self, edits: Iterable[EditOp]) -> "Patch":
        return Patch(self.base_hash, tuple(edits))

    def to_dict(self) -> dict[str, Any]:
        return {"base_hash": self.base_hash, "edits": [edit_to_dict(e) for e in self.edits]}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Patch":
        return cls(d["base_hash"], tuple(edit_from_dict(e) for e in d["edits"]))

    @classmethod
    def from_json(cls, s: str) -> "Patch":
        return cls.from_dict(json.loads(s))


# -- application -------------------------------------------------------------


def _check_indices(unit: SourceUnit, e: EditOp) -> None:
    n = len(unit.spans)
    if isinstance(e, Replace):
        if e.end > len(unit.data):
            raise IndexOutOfBounds(f"replace region ({e.start}, {e.end}) beyond {len(unit.data)} bytes")
        return
    idx = {Delete: ("target",), InsertCopy: ("position", "donor"), Swap: ("a", "b")}[type(e)]
    for name in idx:
        v = getattr(e, name)
        if not 0 <= v < n:
            raise IndexOutOfBounds(f"{e.kind}.{name}={v} not in [0, {n})")


def apply(unit: SourceUnit, patch: Patch) -> str:
    """Materialize ``patch`` against ``unit`` and return the variant text.

    Line edits run in list order over the original span table; a later edit
    touching the same line wins. Lines intersecting a Replace region are
    owned by that Replace and ignore line edits.
    """
    if patch.base_hash != unit.hash:
        raise BaseMismatch(f"patch targets {patch.base_hash[:12]}, unit is {unit.hash[:12]}")
    if not patch.edits:
        return unit.text

    data = unit.data
    spans = unit.spans
    content: list[bytes | None] = [data[s.start:s.end] for s in spans]
    inserts: list[list[bytes]] = [[] for _ in spans]
    regions: list[Replace] = []
    for e in patch.edits:
        _check_indices(unit, e)
        if isinstance(e, Delete):
            content[e.target] = None
        elif isinstance(e, InsertCopy):
            s = spans[e.position]
            lead = data[s.start:s.start + s.indent]
            inserts[e.position].append(lead + unit.line(e.donor).lstrip(b" \t"))
        elif isinstance(e, Swap):
            content[e.a], content[e.b] = content[e.b], content[e.a]
        else:
            regions.append(e)

    regions.sort(key=lambda r: (r.start, r.end))
    for r1, r2 in zip(regions, regions[1:]):
        if r2.start < r1.end or (r1.start == r2.start):
            raise OverlappingReplace(f"regions ({r1.start}, {r1.end}) and ({r2.start}, {r2.end}) intersect")

    def covered(s: Span) -> bool:
        return any(r.start < s.end and s.start < r.end for r in regions)

    # regions sort before a line starting at the same byte
    events: list[tuple[int, int, Any]] = [(r.start, 0, r) for r in regions]
    events += [(s.start, 1, i) for i, s in enumerate(spans) if not covered(s)]
    events.sort(key=lambda ev: (ev[0], ev[1]))

    out = bytearray()
    pos = 0
    for start, is_line, item in events:
        if not is_line:
            out += data[pos:start]
            out += item.new_text.encode("utf-8")
            pos = item.end
            continue
        s = spans[item]
        out += data[pos:s.start]
        for line in inserts[item]:
            out += line + b"\n"
        if content[item] is None:
            nl = data.find(b"\n", s.end)
            pos = len(data) if nl < 0 else nl + 1
        else:
            out += content[item]
            pos = s.end
    out += data[pos:]
    return out.decode("utf-8")


def compose(first: Patch, second: Patch) -> Patch:
    if first.base_hash != second.base_hash:
        raise BaseMismatch("cannot compose patches over different bases")
    return first.with_edits(first.edits + second.edits)


# -- minimization ------------------------------------------------------------


def _ddmin(edits: list, ok: Callable[[list], bool]) -> list:
    n = 2
    while len(edits) >= 2:
        chunk = max(1, len(edits) // n)
        parts = [edits[i:i + chunk] for i in range(0, len(edits), chunk)]
        reduced = False
        for i in range(len(parts)):
            complement = [e for j, p in enumerate(parts) if j != i for e in p]
            if ok(complement):
                edits = complement
                n = max(n - 1, 2)
                reduced = True
                break
        if not reduced:
            if n >= len(edits):
                break
            n = min(2 * n, len(edits))
    return edits


def minimize(
    patch: Patch,
    oracle: Callable[[Patch], Any],
    exhaustive_limit: int = 8,
) -> Patch:
    """Return a 1-minimal sub-patch whose fitness is no worse than ``patch``'s.

    ``oracle`` maps a patch to a sortable fitness key (smaller is better,
    validity folded in). Runs ddmin followed by single-edit sweeps until no
    edit can be dropped. For patches of at most ``exhaustive_limit`` edits the
    result is then tightened to the shortest acceptable sub-list, ties broken
    by the lexicographically smallest retained indices.
    """
    edits = list(patch.edits)
    if not edits:
        return patch
    memo: dict[tuple[int, ...], bool] = {}
    target = oracle(patch)

    def ok_idx(idx: tuple[int, ...]) -> bool:
        if idx not in memo:
            memo[idx] = oracle(patch.with_edits(edits[i] for i in idx)) <= target
        return memo[idx]

    def ok(sub: list[int]) -> bool:
        return ok_idx(tuple(sub))

    keep = _ddmin(list(range(len(edits))), ok)
    changed = True
    while changed:
        changed = False
        for i in range(len(keep)):
            trial = keep[:i] + keep[i + 1:]
            if ok(trial):
                keep = trial
                changed = True
                break

    if len(edits) <= exhaustive_limit:
        for k in range(len(keep) + 1):
            hit = next((c for c in itertools.combinations(range(len(edits)), k) if ok_idx(c)), None)
            if hit is not None:
                keep = list(hit)
                break
    if len(keep) == len(edits):
        return patch
    return patch.with_edits(edits[i] for i in keep)

