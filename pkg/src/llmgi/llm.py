"""Objective-tailored LLM mutation: prompt rendering, providers, extraction.

The prompt puts the original function under an "original, <x>-inefficient
code" comment, follows it with a "fixed, <x>-efficient code" comment and a
fresh signature whose name carries the objective suffix, and lets the model
write the body. The body is then spliced back over the original function
under the original name.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import httpx

from .errors import EmptyCompletion, FunctionNotFound, ProviderError, UnparsableBody
from .objective import Objective
from .patch import Replace, SourceUnit

log = logging.getLogger(__name__)

API_KEY_ENV = "GI_LLM_API_KEY"
DEFAULT_STOP = ("\n\n#", "\n\ndef ")


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


# -- locating functions ------------------------------------------------------


@dataclass(frozen=True)
class FunctionSpan:
    start: int  # byte offset of the def line
    end: int  # byte offset just past the last body line (terminator excluded)
    indent: str
    params: str
    body_indent: str


def _indent_of(line: str) -> str:
    return line[: len(line) - len(line.lstrip(" \t"))]


def find_function(code: str, fn_name: str) -> FunctionSpan:
    """Locate ``def fn_name(...)`` and the indented block that follows it."""
    m = re.search(rf"^([ \t]*)def[ \t]+{re.escape(fn_name)}[ \t]*\(", code, re.MULTILINE)
    if m is None:
        raise FunctionNotFound(f"no definition of {fn_name!r}")
    indent = m.group(1)
    depth, i = 1, m.end()
    while i < len(code) and depth:
        depth += {"(": 1, ")": -1}.get(code[i], 0)
        i += 1
    if depth:
        raise FunctionNotFound(f"unterminated parameter list for {fn_name!r}")
    params = code[m.end(): i - 1]
    header_end = code.find("\n", i)
    header_end = len(code) if header_end < 0 else header_end
    end = header_end
    body_indent = ""
    pos = header_end + 1
    while header_end < len(code):
        nl = code.find("\n", pos)
        line_end = len(code) if nl < 0 else nl
        line = code[pos:line_end]
        if line.strip():
            ws = _indent_of(line)
            if len(ws) <= len(indent):
                break
            if not body_indent:
                body_indent = ws
            end = len(line.rstrip("\r")) + pos
        if nl < 0:
            break
        pos = nl + 1
    to_bytes = lambda k: len(code[:k].encode("utf-8"))  # noqa: E731
    return FunctionSpan(to_bytes(m.start()), to_bytes(end), indent, params, body_indent or indent + "    ")


# -- prompts -----------------------------------------------------------------


@dataclass(frozen=True)
class PromptSpec:
    original_code: str
    function_name: str
    objective: Objective
    rendered: str
    signature: str
    base_offset: int = 0  # byte offset of original_code inside the unit

    @property
    def generated_name(self) -> str:
        return self.function_name + self.objective.fast_suffix

    @property
    def digest(self) -> str:
        return prompt_digest(self.rendered)


def build_prompt(code: str, fn_name: str, objective: Objective, base_offset: int = 0) -> PromptSpec:
    fn = find_function(code, fn_name)
    signature = f"def {fn_name}{objective.fast_suffix}({fn.params}):"
    rendered = (
        f"# original, {objective.inefficient_adjective} code\n"
        f"{code.rstrip(chr(10))}\n"
        f"\n"
        f"# fixed, {objective.efficient_adjective} code\n"
        f"{signature}\n"
    )
    return PromptSpec(code, fn_name, objective, rendered, signature, base_offset)


def extract_replacement(completion: str, prompt: PromptSpec) -> Replace:
    """Turn the model's continuation into a Replace over the original function.

    The body ends at the first non-empty, unindented line after at least one
    indented line. The body is shifted to the original function's body
    indentation and the generated name is renamed back to the original one.
    """
    if not completion or not completion.strip():
        raise EmptyCompletion("provider returned an empty completion")
    body: list[str] = []
    for line in completion.split("\n"):
        line = line.rstrip("\r")
        if not line.strip():
            body.append("")
            continue
        if not _indent_of(line):
            break
        body.append(line)
    while body and not body[-1]:
        body.pop()
    while body and not body[0]:
        body.pop(0)
    if not body:
        raise UnparsableBody("completion has no indented body line")

    fn = find_function(prompt.original_code, prompt.function_name)
    shift = min(len(_indent_of(line)) for line in body if line)
    lines = [fn.indent + prompt.signature]
    lines += [fn.body_indent + line[shift:] if line else "" for line in body]
    new_text = re.sub(rf"\b{re.escape(prompt.generated_name)}\b", prompt.function_name, "\n".join(lines))
    return Replace(
        prompt.base_offset + fn.start,
        prompt.base_offset + fn.end,
        new_text,
        provenance="llm",
        prompt_sha256=prompt.digest,
    )


# -- providers ---------------------------------------------------------------


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_tokens: int = 512
    temperature: float = 0.8
    stop: tuple[str, ...] = DEFAULT_STOP
    model: str = "code-davinci-002"

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")

    def body(self) -> dict:
        return {
            "model": self.model,
            "prompt": self.prompt,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
            "stop": list(self.stop),
        }


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    provider_id: str
    raw: str = ""


class Provider(Protocol):
    calls: int

    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


def truncate_at_stop(text: str, stop: tuple[str, ...]) -> str:
    cut = min((i for s in stop if (i := text.find(s)) >= 0), default=len(text))
    return text[:cut]


class MockProvider:
    """Replays completions from a ``{prompt-sha256: completion}`` map."""

    provider_id = "mock"

    def __init__(self, completions: dict[str, str], source: str = "<memory>"):
        self.completions = dict(completions)
        self.source = source
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "MockProvider":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict) or not all(isinstance(v, str) for v in data.values()):
            raise ValueError(f"{path}: mock map must be a JSON object of strings")
        return cls(data, source=str(path))

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            self.calls += 1
        key = prompt_digest(request.prompt)
        if key not in self.completions:
            raise ProviderError(f"mock map {self.source} has no completion for prompt {key[:12]}")
        text = truncate_at_stop(self.completions[key], request.stop)
        return CompletionResponse(text, self.provider_id, json.dumps({"digest": key}))


class RateLimiter:
    def __init__(self, requests_per_minute: float | None, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self.clock = clock
        self.sleep = sleep
        self._next = 0.0
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = self.clock()
            wait = self._next - now
            if wait > 0:
                self.sleep(wait)
                now += wait
            self._next = now + self.interval


@dataclass
class HttpProvider:
    """Completions-style endpoint: POST JSON, read ``choices[0].text``."""

    endpoint: str
    api_key: str | None = None
    retries: int = 3
    backoff_s: float = 1.0
    requests_per_minute: float | None = None
    timeout_s: float = 60.0
    client: httpx.Client | None = None
    sleep: Callable[[float], None] = time.sleep
    calls: int = 0
    limiter: RateLimiter = field(init=False)

    provider_id = "http"

    def __post_init__(self):
        if self.api_key is None:
            self.api_key = os.environ.get(API_KEY_ENV)
        self.limiter = RateLimiter(self.requests_per_minute, sleep=self.sleep)
        if self.client is None:
            self.client = httpx.Client(timeout=self.timeout_s)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last = "no attempt made"
        for attempt in range(1, self.retries + 1):
            self.limiter.acquire()
            self.calls += 1
            try:
                resp = self.client.post(self.endpoint, json=request.body(), headers=headers)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        text = resp.json()["choices"][0]["text"]
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise ProviderError(f"malformed response: {exc!r}", attempt) from exc
                    return CompletionResponse(text, self.endpoint, resp.text)
                last = f"HTTP {resp.status_code}"
                if resp.status_code != 429 and resp.status_code < 500:
                    raise ProviderError(last, attempt)
            if attempt < self.retries:
                delay = self.backoff_s * 2 ** (attempt - 1)
                log.warning("completion attempt %d failed (%s); retrying in %.1fs", attempt, last, delay)
                self.sleep(delay)
        raise ProviderError(last, self.retries)


def llm_propose(
    unit: SourceUnit,
    fn_name: str,
    objective: Objective,
    client: Provider,
    *,
    max_tokens: int = 512,
    temperature: float = 0.8,
    stop: tuple[str, ...] = DEFAULT_STOP,
    model: str = "code-davinci-002",
) -> Replace:
    fn = find_function(unit.text, fn_name)
    code = unit.data[fn.start:fn.end].decode("utf-8")
    prompt = build_prompt(code, fn_name, objective, base_offset=fn.start)
    request = CompletionRequest(prompt.rendered, max_tokens, temperature, tuple(stop), model)
    response = client.complete(request)
    return extract_replacement(response.text, prompt)

