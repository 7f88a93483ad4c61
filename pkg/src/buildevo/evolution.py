"""Generational search over heuristics with LLM operators, elite archive and reflections."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from buildevo.dsl import DslError, HeuristicProgram, Lineage, Num, parse
from buildevo.dsl.edit import append_segment, fresh_name, perturb_literal, with_segment_body
from buildevo.evaluation import OBJECTIVES, EvaluationResult, ForecastWindow, score_heuristic
from buildevo.llm.base import ProviderError, ProviderUnavailable, ResponseEmpty
from buildevo.llm.prompts import crossover_prompt, init_prompt, mutation_prompt
from buildevo.pifl import NonExecutable, PiflReport, analyze
from buildevo.reflection import ReflectionMemory, generation_summary, reflect_long_term, reflect_short_term

logger = logging.getLogger(__name__)

SEED_SOURCE = "segment base {\n  1 * lag(24)\n}"
MAX_RESAMPLE = 10


class EvolutionError(RuntimeError):
    pass


class NotEnoughExecutable(EvolutionError):
    pass


class EmptyArchive(EvolutionError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvolutionConfig:
    n: int = 20
    generations: int = 10
    t_obs: int = 168
    t_pred: int = 24
    stride: int = 24
    objective: str = "rmse"
    tau: float = 1.0
    mutation_count: int | None = None
    archive_capacity: int = 64
    explore_frac: float = 0.70
    elite_frac: float = 0.30
    elite_subset: float = 0.20
    rng_seed: int = 0
    use_pifl: bool = True
    retries: int = 2
    train_frac: float = 0.8

    def __post_init__(self):
        if self.n < 1 or self.generations < 0:
            raise ConfigError("n must be >= 1 and generations >= 0")
        if abs(self.explore_frac + self.elite_frac - 1.0) > 1e-12:
            raise ConfigError("explore_frac + elite_frac must equal 1")
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}")
        if self.mutation_count is not None and self.mutation_count < 0:
            raise ConfigError("mutation_count must be >= 0")
        if self.archive_capacity < 1:
            raise ConfigError("archive_capacity must be >= 1")
        if min(self.t_obs, self.t_pred, self.stride) < 1:
            raise ConfigError("t_obs, t_pred and stride must be positive")

    @property
    def mutations(self) -> int:
        """Mutation offspring per generation; the population keeps one slot for the carried best."""
        m = math.ceil(self.n / 4) if self.mutation_count is None else self.mutation_count
        return min(m, self.n - 1)

    @classmethod
    def from_dict(cls, data: Mapping, **overrides) -> EvolutionConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**{**data, **overrides})
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Member:
    program: HeuristicProgram
    result: EvaluationResult

    @property
    def id(self) -> str:
        return self.program.id

    @property
    def J(self) -> float:
        return self.result.J

    @property
    def pair(self) -> tuple[HeuristicProgram, EvaluationResult]:
        return self.program, self.result


def _rank(m: Member):
    return (m.J, m.id)


@dataclass
class Population:
    generation: int
    members: list[Member] = field(default_factory=list)

    def executable(self) -> list[Member]:
        return [m for m in self.members if m.result.executable]

    def best(self) -> Member:
        return min(self.members, key=_rank)


@dataclass(frozen=True)
class ArchiveEntry:
    heuristic_id: str
    source: str
    J: float
    generation: int

    def to_dict(self) -> dict:
        return asdict(self)


class EliteArchive:
    """Best heuristics across generations, sorted by J, unique by source, finite J only."""

    def __init__(self, capacity: int = 64):
        self.capacity = capacity
        self.entries: list[ArchiveEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, member: Member, generation: int) -> bool:
        if not member.result.executable:
            return False
        if any(e.source == member.program.source for e in self.entries):
            return False
        entry = ArchiveEntry(member.id, member.program.source, float(member.J), generation)
        if len(self.entries) >= self.capacity:
            worst = self.entries[-1]
            if (entry.J, entry.heuristic_id) >= (worst.J, worst.heuristic_id):
                return False
            self.entries.pop()
        self.entries.append(entry)
        self.entries.sort(key=lambda e: (e.J, e.heuristic_id))
        return True

    def update(self, members: Sequence[Member], generation: int) -> int:
        return sum(self.add(m, generation) for m in members)

    @property
    def min_j(self) -> float:
        return self.entries[0].J if self.entries else math.inf

    def to_list(self) -> list[dict]:
        return [e.to_dict() for e in self.entries]


# ---------------------------------------------------------------------------
# selection


def elite_subset(members: Sequence[Member], frac: float = 0.20) -> list[Member]:
    ranked = sorted(members, key=_rank)
    return ranked[: max(1, math.ceil(frac * len(ranked)))]


def select_parents(
    population,
    rng: np.random.Generator,
    explore_frac: float = 0.70,
    elite_share: float = 0.20,
    trace: list | None = None,
) -> tuple[Member, Member]:
    """Two distinct parents. Each is drawn uniformly from all executable members with
    probability ``explore_frac``, otherwise uniformly from the lowest-J ``elite_share``.

    ``trace`` (if given) receives "explore" or "elite" for every draw made.
    """
    members = population.members if isinstance(population, Population) else list(population)
    pool = [m for m in members if m.result.executable]
    if len(pool) < 2:
        raise NotEnoughExecutable(f"need 2 executable members, have {len(pool)}")
    elites = elite_subset(pool, elite_share)

    def draw() -> Member:
        if rng.random() < explore_frac:
            branch, group = "explore", pool
        else:
            branch, group = "elite", elites
        if trace is not None:
            trace.append(branch)
        return group[int(rng.integers(len(group)))]

    a = draw()
    for _ in range(MAX_RESAMPLE):
        b = draw()
        if b.program.source != a.program.source:
            return a, b
    ranked = sorted(pool, key=_rank)
    first = ranked[0]
    second = next((m for m in ranked[1:] if m.program.source != first.program.source), ranked[1])
    return first, second


def elite_probabilities(js, tau: float = 1.0) -> np.ndarray:
    """Softmax of negated z-scored J at temperature ``tau``."""
    j = np.asarray(js, dtype=float)
    if j.size == 0:
        raise EmptyArchive("archive is empty")
    sd = j.std()
    if j.size == 1 or sd == 0 or not np.isfinite(sd):
        return np.full(j.size, 1.0 / j.size)
    logits = -((j - j.mean()) / sd) / tau
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def sample_elite(archive: EliteArchive, tau: float, rng: np.random.Generator) -> ArchiveEntry:
    if not archive.entries:
        raise EmptyArchive("archive is empty")
    p = elite_probabilities([e.J for e in archive.entries], tau)
    idx = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
    return archive.entries[min(idx, len(p) - 1)]


# ---------------------------------------------------------------------------
# operators


def _attempt(provider, make_bundle, retries: int, operator: str):
    """Ask for a program up to 1 + retries times. Returns (ast or None, attempts made).

    ProviderUnavailable propagates; other provider errors and unusable answers are retried.
    """
    note = None
    for attempt in range(1 + retries):
        try:
            resp = provider.complete(make_bundle(note))
        except ProviderUnavailable:
            raise
        except (ResponseEmpty, ProviderError) as exc:
            note = f"the request failed ({exc}); answer with one fenced program"
            continue
        if resp.extracted is None:
            note = "no fenced code block containing a program was found"
            continue
        try:
            return parse(resp.extracted), attempt + 1
        except DslError as exc:
            note = f"the program did not parse: {exc}"
    logger.info("%s: no valid program after %d attempts", operator, 1 + retries)
    return None, 1 + retries


def _perturbed(ast, rng):
    out = perturb_literal(ast, rng)
    if out is None:
        ast = append_segment(ast, fresh_name(ast, "nudge"), Num(0.0))
        out = perturb_literal(ast, rng)
    return out[0]


def initialize(
    config: EvolutionConfig,
    seed_source: str,
    provider,
    rng: np.random.Generator,
    scorer: Callable[[list[HeuristicProgram]], list[EvaluationResult]],
) -> Population:
    seed = parse(seed_source)
    programs = []
    for i in range(1, config.n + 1):
        def bundle(note, i=i):
            return init_prompt(i, config.n, seed_source, config.t_obs, config.t_pred, config.objective, note)

        ast, _ = _attempt(provider, bundle, config.retries, "init")  # ProviderUnavailable is fatal here
        fallback = ast is None
        if fallback:
            ast = _perturbed(seed, rng)
        lineage = Lineage("init", ("seed",), fallback)
        programs.append(HeuristicProgram.from_ast(ast, f"g000-c{i:02d}", lineage, 0))
    return Population(0, [Member(p, r) for p, r in zip(programs, scorer(programs))])


def splice(better, other, rng):
    """Mechanical crossover: one segment of ``other`` replaces its namesake in ``better`` or is appended."""
    seg = other.segments[int(rng.integers(len(other.segments)))]
    if seg.name in better.names:
        child = with_segment_body(better, seg.name, seg.body)
    else:
        child = append_segment(better, seg.name, seg.body)
    if child == better:
        child = _perturbed(better, rng)
    return child


def crossover(
    parent_a: Member,
    parent_b: Member,
    reflection: str,
    provider,
    rng: np.random.Generator,
    child_id: str = "",
    generation: int = 0,
    retries: int = 2,
) -> HeuristicProgram:
    def desc(m):
        return {"id": m.id, "source": m.program.source, "J": m.J if math.isfinite(m.J) else None}

    def bundle(note):
        return crossover_prompt(desc(parent_a), desc(parent_b), reflection, note)

    try:
        ast, _ = _attempt(provider, bundle, retries, "crossover")
    except ProviderUnavailable as exc:
        logger.warning("crossover provider unavailable, splicing: %s", exc)
        ast = None
    fallback = ast is None
    if fallback:
        better, other = sorted((parent_a, parent_b), key=_rank)
        ast = splice(better.program.ast, other.program.ast, rng)
    lineage = Lineage("crossover", (parent_a.id, parent_b.id), fallback)
    return HeuristicProgram.from_ast(ast, child_id, lineage, generation)


def mutate(
    elite: ArchiveEntry,
    insights: Sequence[str],
    pifl_report: PiflReport | None,
    provider,
    rng: np.random.Generator,
    child_id: str = "",
    generation: int = 0,
    retries: int = 2,
) -> HeuristicProgram:
    desc = {"id": elite.heuristic_id, "source": elite.source, "J": elite.J}
    rows = pifl_report.rows() if pifl_report is not None else None

    def bundle(note):
        return mutation_prompt(desc, list(insights), rows, note)

    try:
        ast, _ = _attempt(provider, bundle, retries, "mutation")
    except ProviderUnavailable as exc:
        logger.warning("mutation provider unavailable, perturbing: %s", exc)
        ast = None
    fallback = ast is None
    if fallback:
        ast = _perturbed(parse(elite.source), rng)
    lineage = Lineage("mutation", (elite.heuristic_id,), fallback)
    return HeuristicProgram.from_ast(ast, child_id, lineage, generation)


# ---------------------------------------------------------------------------
# loop


def make_scorer(windows: Sequence[ForecastWindow], metadata: Mapping, objective: str, threads: int = 1):
    def score(programs: list[HeuristicProgram]) -> list[EvaluationResult]:
        if threads > 1 and len(programs) > 1:
            with ThreadPoolExecutor(threads) as pool:
                return list(pool.map(lambda p: score_heuristic(p, windows, metadata, objective), programs))
        return [score_heuristic(p, windows, metadata, objective) for p in programs]

    return score


def run_evolution(
    config: EvolutionConfig,
    windows: Sequence[ForecastWindow],
    metadata: Mapping,
    provider,
    seed_source: str = SEED_SOURCE,
    ledger=None,
    threads: int = 1,
):
    """Run the search and return the ledger that recorded it."""
    from buildevo.ledger import RunLedger

    if not windows:
        raise EvolutionError("no windows to evolve on")
    ledger = ledger if ledger is not None else RunLedger(None, config)
    rng = np.random.default_rng(config.rng_seed)
    scorer = make_scorer(windows, metadata, config.objective, threads)

    pop = initialize(config, seed_source, provider, rng, scorer)
    archive = EliteArchive(config.archive_capacity)
    archive.update(pop.members, 0)
    best = pop.best()
    memory = ReflectionMemory()
    ledger.record_generation(0, pop.members, archive, best)

    reports: dict[str, PiflReport | None] = {}

    def pifl_for(program: HeuristicProgram, generation: int) -> PiflReport | None:
        if not config.use_pifl:
            return None
        if program.source not in reports:
            try:
                rep = analyze(program, windows, metadata, config.objective, threads)
            except NonExecutable:
                rep = None
            reports[program.source] = rep
            if rep is not None:
                ledger.record_pifl(generation, rep)
        return reports[program.source]

    for g in range(1, config.generations + 1):
        best_report = pifl_for(best.program, g)
        summary = generation_summary(g - 1, [m.pair for m in pop.members], best_report)
        memory = reflect_long_term(memory, summary, provider)
        for text in memory.latest:
            ledger.record_reflection(g, "long", text)

        n_off = config.n - 1
        can_cross = len({m.program.source for m in pop.executable()}) >= 2
        n_mut = config.mutations if can_cross else n_off
        children: list[HeuristicProgram] = []
        for _ in range(n_off - n_mut):
            cid = f"g{g:03d}-c{len(children) + 1:02d}"
            a, b = select_parents(pop, rng, config.explore_frac, config.elite_subset)
            text = reflect_short_term(a.pair, b.pair, provider, reports.get(a.program.source), reports.get(b.program.source))
            ledger.record_reflection(g, "short", text, [a.id, b.id])
            children.append(crossover(a, b, text, provider, rng, cid, g, config.retries))
        for _ in range(n_mut):
            cid = f"g{g:03d}-c{len(children) + 1:02d}"
            if archive.entries:
                entry = sample_elite(archive, config.tau, rng)
            else:
                entry = ArchiveEntry(best.id, best.program.source, best.J, best.program.generation)
            target = HeuristicProgram.from_source(entry.source, entry.heuristic_id)
            report = pifl_for(target, g)
            children.append(mutate(entry, memory.long_term, report, provider, rng, cid, g, config.retries))

        offspring = [Member(p, r) for p, r in zip(children, scorer(children))]
        archive.update(offspring, g)
        pop = Population(g, offspring + [best])
        best = pop.best()
        ledger.record_generation(g, offspring, archive, best)

    if config.use_pifl:
        pifl_for(best.program, config.generations)
    ledger.finish(best, archive, memory, reports.get(best.program.source))
    return ledger
