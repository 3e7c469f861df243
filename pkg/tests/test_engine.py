import sys

import pytest

from llmgi.engine import (Candidate, EvolutionConfig, LLMMutator, Lineage, PatchEvaluator, init_population, run,
                          select, step)
from llmgi.errors import ConfigError, EmptyUnit, UnevaluatedCandidate, ValidationError
from llmgi.harness import PYTHON, FitnessOrdering, FitnessReport, Harness, TestCase
from llmgi.llm import MockProvider
from llmgi.objective import TIME
from llmgi.operators import RngStream
from llmgi.patch import Delete, InsertCopy, Patch, Replace, Swap, apply, content_hash, segment

from conftest import FIB_RECURSIVE, FIB_ITERATIVE, fib_reference
from test_operators import StubRng

TESTS = [TestCase(f"fib{n}", (str(n),), str(fib_reference(n))) for n in (10, 1, 2)]


class InProcessHarness(Harness):
    """Scores variants without subprocesses; 'time' is the number of Python
    calls made while computing fib(15), which is deterministic."""

    def __init__(self):
        super().__init__(PYTHON, TESTS, TestCase("w", ("15",)), TIME, "fibonacci")

    def calibrate(self, baseline_source):
        pass

    def _measure(self, variant):
        h = content_hash(variant)
        try:
            code = compile(variant, "variant", "exec")
        except SyntaxError:
            return FitnessReport.invalid(h, len(self.tests))
        ns = {}
        passed = 0
        try:
            exec(code, ns)
            fn = ns["fibonacci"]
            for t in self.tests:
                try:
                    passed += str(fn(int(t.invocation[0]))) == t.expected_stdout
                except (RecursionError, Exception):
                    pass
        except Exception:
            fn = None
        if passed < len(self.tests):
            return FitnessReport(True, passed, len(self.tests), None, None, "not measured", h)
        calls = 0

        def prof(frame, event, arg):
            nonlocal calls
            calls += event == "call"

        sys.setprofile(prof)
        try:
            fn(15)
        finally:
            sys.setprofile(None)
        return FitnessReport(True, passed, len(self.tests), float(calls), 1, "calls", h)


@pytest.fixture
def unit():
    return segment(FIB_RECURSIVE)


@pytest.fixture
def mock(fixtures_dir):
    return MockProvider.from_file(fixtures_dir / "mock_time.json")


def evaluated(unit, patches):
    ev = PatchEvaluator(unit, InProcessHarness())
    out = []
    for p, (h, r, err) in zip(patches, ev.evaluate(patches)):
        out.append(Candidate(p, h, r, Lineage((), "init", 0), err))
    return out


def test_config_validation():
    EvolutionConfig().validate()
    for bad in (dict(population_size=1), dict(elitism=16), dict(tournament_k=1), dict(p_llm=1.5),
                dict(max_generations=0)):
        with pytest.raises(ValidationError):
            EvolutionConfig(**bad).validate()


class TestInit:
    def test_stubbed(self, unit):
        rng = StubRng(ints=[0, 3, 1, 1, 4, 2], pairs=[(0, 2)])
        pop = init_population(unit, EvolutionConfig(population_size=4), rng)
        assert [c.patch.edits for c in pop] == [(), (Delete(3),), (InsertCopy(1, 4),), (Swap(0, 2),)]
        assert [c.lineage.operator for c in pop] == ["init", "delete", "insert", "swap"]

    def test_two(self, unit):
        pop = init_population(unit, EvolutionConfig(population_size=2), RngStream(1))
        assert len(pop) == 2 and pop[0].patch.edits == () and len(pop[1].patch) == 1

    def test_one_rejected(self, unit):
        with pytest.raises(ConfigError):
            init_population(unit, EvolutionConfig(population_size=1), RngStream(1))

    def test_empty_unit(self):
        with pytest.raises(EmptyUnit):
            init_population(segment("# nothing\n"), EvolutionConfig(), RngStream(1))


class TestSelect:
    def test_tournament_returns_best(self, unit):
        ident = Patch.identity(unit)
        worst, best = evaluated(unit, [ident.with_edits([Delete(4)]), ident])
        ordering = FitnessOrdering(TIME)
        assert select([worst, best], StubRng([0, 1]), 2, ordering) is best
        assert select([worst, best], StubRng([0, 0]), 2, ordering) is worst
        assert select([best], RngStream(5), 2, ordering) is best

    def test_unevaluated(self, unit):
        c = Candidate(Patch.identity(unit), "", None, Lineage((), "init", 0))
        with pytest.raises(UnevaluatedCandidate):
            select([c], RngStream(1), 2, FitnessOrdering(TIME))


class TestStep:
    def setup_pop(self, unit, cfg):
        ev = PatchEvaluator(unit, InProcessHarness())
        rng = RngStream(cfg.seed)
        pop = init_population(unit, cfg, rng)
        from llmgi.engine import _evaluate_into
        _evaluate_into(pop, ev)
        return ev, rng, pop

    def test_llm_offspring(self, unit, mock):
        cfg = EvolutionConfig(population_size=4, p_llm=1.0, p_crossover=0.0, seed=3)
        ev, rng, pop = self.setup_pop(unit, cfg)
        llm = LLMMutator(mock, "fibonacci", TIME)
        nxt, stats = step(pop, unit, ev, cfg, rng, 1, FitnessOrdering(TIME), llm)
        llm_kids = [c for c in nxt if c.lineage.operator == "llm"]
        assert len(llm_kids) == 3 and stats.llm_calls == 3
        assert all(isinstance(c.patch.edits[-1], Replace) for c in llm_kids)
        assert any(apply(unit, c.patch) == FIB_ITERATIVE for c in llm_kids)

    def test_classic_only(self, unit):
        cfg = EvolutionConfig(population_size=6, p_llm=0.0, p_crossover=0.0, seed=9)
        ev, rng, pop = self.setup_pop(unit, cfg)
        nxt, stats = step(pop, unit, ev, cfg, rng, 1, FitnessOrdering(TIME))
        assert {c.lineage.operator for c in nxt[cfg.elitism:]} <= {"delete", "insert", "swap"}
        assert sum(stats.operator_counts.values()) == 6

    def test_elite_carried_unchanged(self, unit):
        cfg = EvolutionConfig(population_size=5, elitism=1, seed=4)
        ev, rng, pop = self.setup_pop(unit, cfg)
        ordering = FitnessOrdering(TIME)
        best = min(pop, key=lambda c: ordering.full_key(c.fitness, len(c.patch)))
        nxt, _ = step(pop, unit, ev, cfg, rng, 1, ordering)
        assert nxt[0].patch == best.patch and nxt[0].fitness is best.fitness
        assert nxt[0].lineage.operator == "elite"

    def test_provider_failure_recorded_not_raised(self, unit):
        cfg = EvolutionConfig(population_size=4, p_llm=1.0, p_crossover=0.0, seed=3)
        ev, rng, pop = self.setup_pop(unit, cfg)
        llm = LLMMutator(MockProvider({}), "fibonacci", TIME)
        nxt, stats = step(pop, unit, ev, cfg, rng, 1, FitnessOrdering(TIME), llm)
        failed = [c for c in nxt if c.error]
        assert len(failed) == 3 and all(not c.fitness.valid for c in failed)
        assert "ProviderError" in failed[0].fitness.measurement_method


class TestRun:
    def test_finds_llm_rewrite(self, unit, mock):
        cfg = EvolutionConfig(population_size=8, max_generations=5, p_llm=0.3, seed=42)
        res = run(unit, InProcessHarness(), cfg, llm=LLMMutator(mock, "fibonacci", TIME))
        assert apply(unit, res.best.patch) == FIB_ITERATIVE
        assert res.improved()
        assert len(res.best.patch) == 1

    def test_identity_when_nothing_better(self, unit):
        cfg = EvolutionConfig(population_size=6, max_generations=1, p_llm=0.0, seed=1)
        res = run(unit, InProcessHarness(), cfg)
        assert res.best.patch.edits == ()
        assert not res.improved()

    def test_deterministic_history(self, unit, mock, fixtures_dir):
        cfg = EvolutionConfig(population_size=6, max_generations=4, p_llm=0.3, seed=7)
        runs = []
        for _ in range(2):
            llm = LLMMutator(MockProvider.from_file(fixtures_dir / "mock_time.json"), "fibonacci", TIME)
            runs.append(run(unit, InProcessHarness(), cfg, llm=llm))
        a, b = runs
        assert [g.to_dict() for g in a.history] == [g.to_dict() for g in b.history]
        assert a.best.patch == b.best.patch

    def test_global_best_never_worsens(self, unit, mock):
        cfg = EvolutionConfig(population_size=6, max_generations=6, p_llm=0.2, seed=11)
        res = run(unit, InProcessHarness(), cfg, llm=LLMMutator(mock, "fibonacci", TIME))
        ordering = res.ordering
        keys = [ordering.full_key(FitnessReport.from_dict(g.best_fitness), g.best_patch_len)
                for g in res.history]
        running = keys[0]
        for k in keys[1:]:
            running = min(running, k)
        assert ordering.full_key(res.best.fitness, len(res.best.patch)) <= running

    def test_llm_budget(self, unit, mock):
        cfg = EvolutionConfig(population_size=6, max_generations=5, p_llm=1.0, llm_call_budget=2, seed=2)
        llm = LLMMutator(mock, "fibonacci", TIME)
        res = run(unit, InProcessHarness(), cfg, llm=llm)
        assert llm.calls <= 2 and res.llm_calls <= 2

    def test_plateau_stops_early(self, unit):
        cfg = EvolutionConfig(population_size=4, max_generations=10, p_llm=0.0, plateau_generations=2, seed=5)
        res = run(unit, InProcessHarness(), cfg)
        assert res.stop_reason == "plateau" and len(res.history) <= 11

    def test_wall_budget(self, unit):
        ticks = iter(range(0, 10 ** 6, 1000))
        cfg = EvolutionConfig(population_size=4, max_generations=10, p_llm=0.0, budget_wall_ms=1500, seed=5)
        res = run(unit, InProcessHarness(), cfg, clock=lambda: next(ticks) / 1000.0)
        assert res.stop_reason == "wall_budget"
