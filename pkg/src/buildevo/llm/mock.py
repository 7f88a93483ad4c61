"""Deterministic offline provider.

Every reply is a pure function of (operator, sha256 of the user prompt, seed), so runs
using it are exactly reproducible.
"""

from __future__ import annotations

import hashlib

import numpy as np

from buildevo.dsl import Binary, DslError, Num, Program, parse, print_canonical, validate
from buildevo.dsl.edit import append_segment, fresh_name, literal_paths, perturb_literal, replace_at, round_sig, with_segment_body
from buildevo.llm.base import PromptBundle, ProviderResponse, ProviderUnavailable, extract
from buildevo.llm.prompts import fmt_j

LIBRARY = (
    "segment base { lag(1) }",
    "segment base { lag(24) }",
    "segment base { lag(168) }",
    "segment base { 0.5 * lag(24) + 0.5 * lag(168) }",
    "segment base { lag(24) }\nsegment weather { 2.5 * (cdd(18) - max(temp_lag(24) - 18, 0)) }",
    "segment base { roll_min(168) }\nsegment cooling { 3 * cdd(18) }\nsegment heating { 0.5 * hdd(15) }",
    "segment base { roll_mean(168) }\nsegment weekend { if(is_weekend(), -0.15 * roll_mean(168), 0.06 * roll_mean(168)) }",
    'segment base { lag(168) }\nsegment occupancy { if(usage_is("Office") && hour() >= 8 && hour() < 18, 0.05 * roll_mean(24), 0) }',
    "segment base { roll_mean(24) }\nsegment weather { 2 * (temp() - temp_lag(24)) }",
    "segment base { lag(168) }\nsegment weather { 2 * (cdd(18) - max(temp_lag(168) - 18, 0)) }",
)


def _rng(seed: int, operator: str, user: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}|{operator}|{user}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _fenced(program: Program, note: str) -> str:
    return f"{note}\n```\n{print_canonical(program)}\n```\n"


def jitter(program: Program, rng: np.random.Generator, low: float = 0.8, high: float = 1.25) -> Program:
    """Scale every non-structural, non-zero literal by its own U(low, high) factor."""
    segs = []
    for s in program.segments:
        body = s.body
        for path, value in literal_paths(body):
            if value != 0:
                body = replace_at(body, path, Num(round_sig(value * float(rng.uniform(low, high)))))
        segs.append(type(s)(s.name, body))
    return Program(tuple(segs))


def _valid(program: Program) -> bool:
    try:
        validate(program)
    except DslError:
        return False
    return True


class MockProvider:
    """Scripted stand-in for an LLM.

    init: cycles ``LIBRARY`` with seed-derived constant jitter.
    crossover: the lower-J parent plus one segment of the other (same-named segments are
    blended with complementary weights).
    mutation: rescales one literal; when segment statistics are in the prompt and
    ``exploit_pifl`` is set, zeroes the segment whose removal helps most instead.
    reflections: templates built from the prompt context.

    ``broken`` lists operators for which it answers with prose and no program;
    ``unavailable`` makes every call raise ProviderUnavailable.
    """

    def __init__(self, seed: int = 0, exploit_pifl: bool = True, broken=(), unavailable: bool = False):
        self.seed = int(seed)
        self.exploit_pifl = exploit_pifl
        self.broken = frozenset(broken)
        self.unavailable = unavailable
        self.calls = 0

    def complete(self, bundle: PromptBundle) -> ProviderResponse:
        self.calls += 1
        if self.unavailable:
            raise ProviderUnavailable("mock provider configured as unavailable")
        rng = _rng(self.seed, bundle.operator, bundle.user)
        if bundle.operator in self.broken:
            text = "I am not able to produce a program for this request."
        else:
            text = getattr(self, f"_{bundle.operator}")(bundle.context, rng)
        return ProviderResponse(text, extract(bundle, text), 0.0, 1)

    def _init(self, ctx, rng) -> str:
        offset = self.seed % len(LIBRARY)
        src = LIBRARY[(int(ctx.get("index", 1)) - 1 + offset) % len(LIBRARY)]
        return _fenced(jitter(parse(src), rng), "Here is a candidate heuristic:")

    def _crossover(self, ctx, rng) -> str:
        a, b = sorted(ctx["parents"], key=lambda p: p["J"] if p["J"] is not None else float("inf"))
        better, other = parse(a["source"]), parse(b["source"])
        child = self._splice(better, other, rng)
        if child is None or not _valid(child) or child == better:
            child = self._nudge(better, rng)
        return _fenced(child, f"Child built on {a['id']}:")

    @staticmethod
    def _splice(better: Program, other: Program, rng) -> Program | None:
        present = {s.body for s in better.segments}
        donors = [s for s in other.segments if s.body not in present]
        if not donors:
            return None
        donor = donors[int(rng.integers(len(donors)))]
        if donor.name in better.names:
            w = round(float(rng.uniform(0.3, 0.7)), 2)
            mine = better.segment(donor.name).body
            child = with_segment_body(better, donor.name, Binary("*", Num(w), mine))
            return append_segment(child, fresh_name(child, donor.name), Binary("*", Num(round(1 - w, 2)), donor.body))
        return append_segment(better, donor.name, donor.body)

    @staticmethod
    def _nudge(program: Program, rng) -> Program:
        out = perturb_literal(program, rng)
        if out is not None:
            return out[0]
        return append_segment(program, "bias", Num(round_sig(float(rng.uniform(-1, 1)))))

    def _mutation(self, ctx, rng) -> str:
        elite = parse(ctx["elite"]["source"])
        rows = ctx.get("pifl") if self.exploit_pifl else None
        if rows:
            harmful = [
                r for r in rows
                if r["delta_j"] is not None and r["delta_j"] < 0
                and r["name"] in elite.names and elite.segment(r["name"]).body != Num(0.0)
            ]
            if harmful:
                worst = min(harmful, key=lambda r: (r["delta_j"], r["name"]))
                return _fenced(with_segment_body(elite, worst["name"], Num(0.0)), f"Removed {worst['name']}:")
        out = perturb_literal(elite, rng)
        if out is None:
            mutant = append_segment(elite, "bias", Num(round_sig(float(rng.uniform(-1, 1)))))
        else:
            mutant = out[0]
        return _fenced(mutant, "Mutated heuristic:")

    def _reflect_short(self, ctx, rng) -> str:
        a, b = ctx["parents"]
        ja = a["J"] if a["J"] is not None else float("inf")
        jb = b["J"] if b["J"] is not None else float("inf")
        if ja == jb:
            return (
                f"Heuristics {a['id']} and {b['id']} tie; combine segments "
                f"{{{', '.join(a['segments'])}}} with {{{', '.join(b['segments'])}}}."
            )
        good, bad = (a, b) if ja < jb else (b, a)
        return (
            f"Heuristic {good['id']} is better than {bad['id']}; keep its segments "
            f"{{{', '.join(good['segments'])}}} and borrow from {bad['id']} only terms that add weather or calendar information."
        )

    def _reflect_long(self, ctx, rng) -> str:
        best = ctx["best"]
        lines = [f"- The best heuristic so far (J={fmt_j(best['J'])}) is built from segments {{{', '.join(best.get('segments', []))}}}."]
        rows = ctx.get("pifl") or []
        weak = [r["name"] for r in rows if r["delta_j"] is not None and r["delta_j"] <= 0]
        if weak:
            lines.append(f"- Segments {{{', '.join(weak)}}} do not reduce error; simplify or remove them.")
        strong = [r["name"] for r in rows if r["delta_j"] is not None and r["delta_j"] > 0]
        if strong:
            lines.append(f"- Segments {{{', '.join(strong)}}} carry the forecast; refine their constants.")
        return "\n".join(lines[:3])
