"""Short-term (pairwise) and long-term (accumulated) reflections that steer the operators."""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field

from buildevo.dsl import Call, HeuristicProgram
from buildevo.dsl.nodes import walk
from buildevo.evaluation import EvaluationResult
from buildevo.llm.base import ProviderError
from buildevo.llm.prompts import fmt_j, reflect_long_prompt, reflect_short_prompt

logger = logging.getLogger(__name__)

LONG_TERM_CAPACITY = 10
MAX_NEW_INSIGHTS = 3


@dataclass
class ReflectionMemory:
    long_term: list[str] = field(default_factory=list)
    generation_updated: int = -1
    capacity: int = LONG_TERM_CAPACITY
    latest: list[str] = field(default_factory=list)  # insights added by the last update

    def add(self, insights, generation: int) -> ReflectionMemory:
        """New memory with up to three insights appended; the oldest entries fall off."""
        fresh = [s.strip() for s in insights if s and s.strip()][:MAX_NEW_INSIGHTS]
        merged = (self.long_term + fresh)[-self.capacity:]
        return ReflectionMemory(merged, generation, self.capacity, fresh)


def _describe(program: HeuristicProgram, result: EvaluationResult, pifl=None) -> dict:
    return {
        "id": program.id,
        "source": program.source,
        "J": result.J if math.isfinite(result.J) else None,
        "segments": program.segment_names,
        "per_building": result.per_building,
        "pifl": pifl.rows() if pifl is not None else None,
    }


def fallback_short(a: HeuristicProgram, ja: float, b: HeuristicProgram, jb: float) -> str:
    if ja == jb or (not math.isfinite(ja) and not math.isfinite(jb)):
        return (
            f"Parents {a.id} and {b.id} tie (J={fmt_j(ja)}); both segment sets "
            f"{{{', '.join(a.segment_names)}}} and {{{', '.join(b.segment_names)}}} are equally viable"
        )
    if jb < ja:
        a, ja, b, jb = b, jb, a, ja
    return (
        f"Parent {a.id} (J={fmt_j(ja)}) outperforms Parent {b.id} (J={fmt_j(jb)}); "
        f"prefer {a.id}'s segments {{{', '.join(a.segment_names)}}}"
    )


def reflect_short_term(parent_a, parent_b, provider, pifl_a=None, pifl_b=None) -> str:
    """``parent_a``/``parent_b`` are (HeuristicProgram, EvaluationResult) pairs."""
    (pa, ra), (pb, rb) = parent_a, parent_b
    bundle = reflect_short_prompt(_describe(pa, ra, pifl_a), _describe(pb, rb, pifl_b))
    try:
        text = provider.complete(bundle).extracted
    except ProviderError as exc:
        logger.warning("short-term reflection fell back: %s", exc)
        text = None
    return text or fallback_short(pa, ra.J, pb, rb.J)


def builtins_used(program: HeuristicProgram) -> set[str]:
    return {n.name for s in program.ast.segments for n in walk(s.body) if isinstance(n, Call)}


def fallback_long(top: list[HeuristicProgram]) -> list[str]:
    """Rule-derived insights: the builtins most common among the top heuristics."""
    counts = Counter(name for p in top for name in builtins_used(p))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:MAX_NEW_INSIGHTS]
    if not ranked:
        return ["no heuristic was executable; prefer simple lag-based segments that avoid division and log"]
    return [f"segments using {name}() appear in {k} of top-{len(top)} heuristics" for name, k in ranked]


_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


def parse_insights(text: str | None) -> list[str]:
    if not text:
        return []
    lines = [_BULLET.sub("", ln).strip() for ln in text.splitlines()]
    return [ln for ln in lines if ln][:MAX_NEW_INSIGHTS]


def generation_summary(generation: int, members, pifl=None, top_k: int = 5) -> dict:
    """Prompt context for the long-term reflection. ``members`` are (program, result) pairs."""
    ranked = sorted(members, key=lambda m: (m[1].J, m[0].id))
    best, worst = ranked[0], ranked[-1]
    return {
        "generation": generation,
        "best": _describe(*best) | {"pifl": None},
        "worst": _describe(*worst) | {"pifl": None},
        "top": [m[0] for m in ranked[:top_k] if m[1].executable],
        "pifl": pifl.rows() if pifl is not None else None,
    }


def reflect_long_term(memory: ReflectionMemory, summary: dict, provider) -> ReflectionMemory:
    ctx = {k: v for k, v in summary.items() if k != "top"}
    ctx["top_sources"] = [p.source for p in summary.get("top", [])]
    bundle = reflect_long_prompt(memory.long_term, ctx)
    try:
        insights = parse_insights(provider.complete(bundle).extracted)
    except ProviderError as exc:
        logger.warning("long-term reflection fell back: %s", exc)
        insights = []
    if not insights:
        insights = fallback_long(summary.get("top", []))
    return memory.add(insights, summary["generation"])
