"""Generational GI loop over patches: init, tournament selection, variation,
evaluation, termination, and final minimization of the best patch."""

from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from . import operators
from .errors import ConfigError, EmptyUnit, GIError, UnevaluatedCandidate, ValidationError
from .harness import FitnessOrdering, FitnessReport, Harness
from .llm import DEFAULT_STOP, Provider, llm_propose
from .objective import TIME, Objective
from .operators import RngStream
from .patch import Patch, Replace, SourceUnit, apply, content_hash, minimize

log = logging.getLogger(__name__)

OPERATORS = ("init", "delete", "insert", "swap", "llm", "crossover", "elite")


@dataclass
class EvolutionConfig:
    objective: Objective = TIME
    population_size: int = 16
    max_generations: int = 10
    tournament_k: int = 2
    elitism: int = 1
    p_llm: float = 0.2
    p_crossover: float = 0.5
    seed: int = 0
    budget_wall_ms: float | None = None
    plateau_generations: int | None = None
    llm_call_budget: int | None = None
    metric_resolution: float = 0.2

    def validate(self) -> "EvolutionConfig":
        def need(ok: bool, name: str, msg: str):
            if not ok:
                raise ValidationError(name, msg)

        need(self.population_size >= 2, "population_size", "must be >= 2")
        need(self.max_generations >= 1, "max_generations", "must be >= 1")
        need(self.tournament_k >= 2, "tournament_k", "must be >= 2")
        need(0 <= self.elitism < self.population_size, "elitism", "must satisfy 0 <= elitism < population_size")
        need(0.0 <= self.p_llm <= 1.0, "p_llm", "must lie in [0, 1]")
        need(0.0 <= self.p_crossover <= 1.0, "p_crossover", "must lie in [0, 1]")
        need(0 <= self.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
        need(self.budget_wall_ms is None or self.budget_wall_ms > 0, "budget_wall_ms", "must be > 0")
        need(self.plateau_generations is None or self.plateau_generations >= 1, "plateau_generations", "must be >= 1")
        need(self.llm_call_budget is None or self.llm_call_budget >= 0, "llm_call_budget", "must be >= 0")
        need(self.metric_resolution >= 0, "metric_resolution", "must be >= 0")
        return self

    def to_dict(self) -> dict[str, Any]:
        d = dict(vars(self))
        d["objective"] = self.objective.name
        return d


@dataclass(frozen=True)
class Lineage:
    parents: tuple[str, ...]
    operator: str
    generation: int

    def __post_init__(self):
        if self.operator not in OPERATORS:
            raise ValueError(f"unknown operator {self.operator!r}")


@dataclass
class Candidate:
    patch: Patch
    variant_hash: str
    fitness: FitnessReport | None
    lineage: Lineage
    error: str | None = None

    def record(self) -> dict[str, Any]:
        f = self.fitness
        return {
            "variant_hash": self.variant_hash,
            "parents": list(self.lineage.parents),
            "operator": self.lineage.operator,
            "generation": self.lineage.generation,
            "patch_len": len(self.patch),
            "valid": bool(f and f.valid),
            "tests_passed": f.tests_passed if f else 0,
            "error": self.error,
        }


@dataclass
class LLMMutator:
    """Calls the provider for an objective-tailored rewrite of ``entry``."""

    provider: Provider
    entry: str
    objective: Objective
    max_tokens: int = 512
    temperature: float = 0.8
    stop: tuple[str, ...] = DEFAULT_STOP
    model: str = "code-davinci-002"
    budget: int | None = None
    calls: int = 0

    def available(self) -> bool:
        return self.budget is None or self.calls < self.budget

    def propose(self, unit: SourceUnit) -> Replace:
        self.calls += 1
        return llm_propose(unit, self.entry, self.objective, self.provider, max_tokens=self.max_tokens,
                           temperature=self.temperature, stop=self.stop, model=self.model)

    def settings(self) -> dict[str, Any]:
        return {"model": self.model, "max_tokens": self.max_tokens, "temperature": self.temperature,
                "stop": list(self.stop)}


class PatchEvaluator:
    """Materializes patches against one unit and scores them with a harness."""

    def __init__(self, unit: SourceUnit, harness: Harness):
        self.unit = unit
        self.harness = harness

    def evaluate(self, patches: Sequence[Patch]) -> list[tuple[str, FitnessReport, str | None]]:
        out: list[Any] = [None] * len(patches)
        sources, slots = [], []
        for i, p in enumerate(patches):
            try:
                sources.append(apply(self.unit, p))
                slots.append(i)
            except GIError as exc:
                h = content_hash("unmaterialized:" + p.to_json())
                out[i] = (h, FitnessReport.invalid(h, len(self.harness.tests), type(exc).__name__), str(exc))
        for i, src, rep in zip(slots, sources, self.harness.evaluate_many(sources)):
            out[i] = (rep.variant_hash, rep, None)
        return out

    def report(self, patch: Patch) -> FitnessReport:
        return self.evaluate([patch])[0][1]


@dataclass
class GenerationStats:
    generation: int
    best_hash: str
    best_patch_len: int
    best_fitness: dict[str, Any]
    mean_metric: float | None
    n_valid: int
    n_passing: int
    operator_counts: dict[str, int]
    cache_hits: int
    evaluations: int
    llm_calls: int
    population: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return dict(vars(self))


def _rank(ordering: FitnessOrdering) -> Callable[[Candidate], tuple]:
    def key(c: Candidate) -> tuple:
        if c.fitness is None:
            raise UnevaluatedCandidate(f"candidate {c.variant_hash[:12]} has no fitness")
        return ordering.full_key(c.fitness, len(c.patch))
    return key


def init_population(unit: SourceUnit, config: EvolutionConfig, rng: RngStream) -> list[Candidate]:
    """Identity anchor at index 0, then single random classic edits."""
    if config.population_size < 2:
        raise ConfigError("population_size must be >= 2")
    if not unit.spans:
        raise EmptyUnit("target has no statements to mutate")
    identity = Patch.identity(unit)
    pop = [Candidate(identity, content_hash(unit.text), None, Lineage((), "init", 0))]
    for _ in range(config.population_size - 1):
        name, edit = operators.classic_mutation(rng, unit)
        pop.append(Candidate(identity.with_edits([edit]), "", None, Lineage((), name, 0)))
    return pop


def select(population: Sequence[Candidate], rng: RngStream, k: int, ordering: FitnessOrdering) -> Candidate:
    key = _rank(ordering)
    for c in population:
        key(c)
    drawn = [population[rng.randrange(len(population))] for _ in range(k)]
    return min(drawn, key=key)


def _evaluate_into(cands: list[Candidate], evaluator: PatchEvaluator) -> None:
    todo = [c for c in cands if c.fitness is None]
    for c, (h, rep, err) in zip(todo, evaluator.evaluate([c.patch for c in todo])):
        c.variant_hash, c.fitness, c.error = h, rep, err


def _stats(gen: int, population: list[Candidate], ordering: FitnessOrdering, harness: Harness,
           hits0: int, evals0: int, llm_calls: int) -> GenerationStats:
    best = min(population, key=_rank(ordering))
    metrics = [c.fitness.metric(ordering.objective) for c in population if c.fitness.all_passed]
    metrics = [m for m in metrics if m is not None]
    counts: dict[str, int] = {}
    for c in population:
        counts[c.lineage.operator] = counts.get(c.lineage.operator, 0) + 1
    return GenerationStats(
        generation=gen,
        best_hash=best.variant_hash,
        best_patch_len=len(best.patch),
        best_fitness=best.fitness.to_dict(),
        mean_metric=statistics.fmean(metrics) if metrics else None,
        n_valid=sum(c.fitness.valid for c in population),
        n_passing=sum(c.fitness.all_passed for c in population),
        operator_counts=dict(sorted(counts.items())),
        cache_hits=harness.cache_hits - hits0,
        evaluations=harness.evaluations - evals0,
        llm_calls=llm_calls,
        population=[c.record() for c in population],
    )


def _mutate(base: Patch, unit: SourceUnit, config: EvolutionConfig, rng: RngStream,
            llm: LLMMutator | None) -> tuple[str, Patch]:
    if llm is not None and config.p_llm > 0 and rng.random() < config.p_llm and llm.available():
        edit = llm.propose(unit)
        # a fresh rewrite supersedes any earlier rewrite of the same region
        kept = [e for e in base.edits
                if not (isinstance(e, Replace) and e.start < edit.end and edit.start < e.end)]
        return "llm", base.with_edits(kept + [edit])
    name, edit = operators.classic_mutation(rng, unit)
    return name, base.with_edits(base.edits + (edit,))


def step(population: list[Candidate], unit: SourceUnit, evaluator: PatchEvaluator, config: EvolutionConfig,
         rng: RngStream, gen_index: int, ordering: FitnessOrdering,
         llm: LLMMutator | None = None) -> tuple[list[Candidate], GenerationStats]:
    harness = evaluator.harness
    hits0, evals0 = harness.cache_hits, harness.evaluations
    calls0 = llm.calls if llm else 0
    ranked = sorted(population, key=_rank(ordering))
    nxt = [Candidate(c.patch, c.variant_hash, c.fitness, Lineage((c.variant_hash,), "elite", gen_index), c.error)
           for c in ranked[: config.elitism]]
    offspring: list[Candidate] = []
    for _ in range(config.population_size - config.elitism):
        if config.p_crossover > 0 and rng.random() < config.p_crossover:
            a = select(population, rng, config.tournament_k, ordering)
            b = select(population, rng, config.tournament_k, ordering)
            base = operators.crossover(a.patch, b.patch, rng)
            parents, op = (a.variant_hash, b.variant_hash), "crossover"
        else:
            a = select(population, rng, config.tournament_k, ordering)
            base, parents, op = a.patch, (a.variant_hash,), None
        try:
            name, child = _mutate(base, unit, config, rng, llm)
        except GIError as exc:
            name = "llm"
            h = content_hash(f"failed:{type(exc).__name__}:{base.to_json()}")
            rep = FitnessReport.invalid(h, len(harness.tests), type(exc).__name__)
            offspring.append(Candidate(base, h, rep, Lineage(parents, op or name, gen_index), str(exc)))
            log.warning("generation %d: mutation failed: %s", gen_index, exc)
            continue
        offspring.append(Candidate(child, "", None, Lineage(parents, op or name, gen_index)))
    _evaluate_into(offspring, evaluator)
    nxt += offspring
    calls = (llm.calls if llm else 0) - calls0
    return nxt, _stats(gen_index, nxt, ordering, harness, hits0, evals0, calls)


@dataclass
class RunResult:
    best: Candidate
    baseline: FitnessReport
    history: list[GenerationStats]
    minimized: bool
    ordering: FitnessOrdering
    llm_calls: int
    stop_reason: str

    def improved(self) -> bool:
        """Strictly better than the baseline on validity, tests, or objective."""
        return self.ordering.key(self.best.fitness) < self.ordering.key(self.baseline)


def run(unit: SourceUnit, harness: Harness, config: EvolutionConfig, *, llm: LLMMutator | None = None,
        clock: Callable[[], float] = time.monotonic) -> RunResult:
    config.validate()
    t0 = clock()
    rng = RngStream(config.seed, "evolution")
    if llm is not None and config.llm_call_budget is not None:
        llm.budget = config.llm_call_budget
    evaluator = PatchEvaluator(unit, harness)

    harness.calibrate(unit.text)
    baseline = harness.evaluate(unit.text)
    if baseline.all_passed:
        ordering = FitnessOrdering(config.objective, baseline.metric(config.objective), config.metric_resolution)
    else:
        log.warning("unpatched program fails its tests; metric grid disabled")
        ordering = FitnessOrdering(config.objective)
    rank = _rank(ordering)

    hits0, evals0 = harness.cache_hits, harness.evaluations
    population = init_population(unit, config, rng)
    _evaluate_into(population, evaluator)
    history = [_stats(0, population, ordering, harness, hits0, evals0, 0)]
    best = min(population, key=rank)
    stagnant = 0
    stop_reason = "max_generations"
    for gen in range(1, config.max_generations + 1):
        population, stats = step(population, unit, evaluator, config, rng, gen, ordering, llm)
        history.append(stats)
        gen_best = min(population, key=rank)
        if rank(gen_best) < rank(best):
            best, stagnant = gen_best, 0
        else:
            stagnant += 1
        log.info("generation %d: best %s (%s)", gen, best.variant_hash[:12], best.fitness.metric(config.objective))
        if config.budget_wall_ms is not None and (clock() - t0) * 1000.0 >= config.budget_wall_ms:
            stop_reason = "wall_budget"
            break
        if config.plateau_generations is not None and stagnant >= config.plateau_generations:
            stop_reason = "plateau"
            break
        if llm is not None and config.p_llm > 0 and not llm.available() and stagnant >= 1:
            stop_reason = "llm_budget"
            break

    shrunk = minimize(best.patch, lambda p: ordering.key(evaluator.report(p)))
    minimized = len(shrunk) < len(best.patch)
    if minimized:
        (h, rep, err), = evaluator.evaluate([shrunk])
        best = Candidate(shrunk, h, rep, best.lineage, err)
    return RunResult(best, baseline, history, minimized, ordering, llm.calls if llm else 0, stop_reason)
