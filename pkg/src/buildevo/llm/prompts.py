"""Prompt assembly from the versioned templates shipped in ``templates/``."""

from __future__ import annotations

import math
from functools import lru_cache
from importlib import resources
from string import Template

from buildevo.dsl import builtin_reference
from buildevo.llm.base import PromptBundle

DEFAULT_CHAR_BUDGET = 16_000


@lru_cache(maxsize=None)
def _template(name: str) -> Template:
    text = resources.files("buildevo.llm").joinpath("templates", f"{name}.txt").read_text()
    lines = [ln for ln in text.splitlines() if not ln.startswith("# template version")]
    return Template("\n".join(lines))


def system_prompt() -> str:
    return _template("system").substitute(builtins=builtin_reference())


def fmt_j(j) -> str:
    if j is None or not math.isfinite(j):
        return "inf"
    return f"{j:.6g}"


def _retry(note: str | None) -> str:
    return f"\nYour previous answer was rejected: {note}\n" if note else ""


def render_pifl(rows) -> str:
    if not rows:
        return "(none)"
    return "\n".join(
        f"- {r['name']}: removing it changes J by {fmt_j(r['delta_j'])}, share of |output| {r['share']:.3f}"
        for r in rows
    )


def _insights(items) -> str:
    return "\n".join(f"- {s}" for s in items) if items else "(none yet)"


def _fit(render, insights: list[str], budget: int) -> tuple[str, list[str]]:
    """Render with as many of the newest insights as fit; hard-truncate as a last resort."""
    system_len = len(system_prompt())
    kept = list(insights)
    user = render(kept)
    while kept and system_len + len(user) > budget:
        kept = kept[1:]
        user = render(kept)
    if system_len + len(user) > budget:
        user = user[: max(0, budget - system_len)]
    return user, kept


def init_prompt(index, total, seed_source, t_obs, t_pred, objective, retry_note=None, budget=DEFAULT_CHAR_BUDGET):
    user = _template("init").substitute(
        index=index, total=total, seed_source=seed_source, t_obs=t_obs, t_pred=t_pred,
        objective=objective.upper(), retry_note=_retry(retry_note),
    )
    user, _ = _fit(lambda _: user, [], budget)
    ctx = {"index": index, "total": total, "seed_source": seed_source}
    return PromptBundle(system_prompt(), user, "init", context=ctx)


def crossover_prompt(parent_a: dict, parent_b: dict, reflection: str, retry_note=None, budget=DEFAULT_CHAR_BUDGET):
    """Parents are dicts with ``id``, ``source`` and ``J``."""
    user = _template("crossover").substitute(
        id_a=parent_a["id"], j_a=fmt_j(parent_a["J"]), source_a=parent_a["source"],
        id_b=parent_b["id"], j_b=fmt_j(parent_b["J"]), source_b=parent_b["source"],
        reflection=reflection, retry_note=_retry(retry_note),
    )
    user, _ = _fit(lambda _: user, [], budget)
    ctx = {"parents": [parent_a, parent_b], "reflection": reflection}
    return PromptBundle(system_prompt(), user, "crossover", context=ctx)


def mutation_prompt(elite: dict, insights: list[str], pifl_rows=None, retry_note=None, budget=DEFAULT_CHAR_BUDGET):
    pifl_section = (
        "\nSegment statistics (ablation and output share), worst offenders first to fix:\n" + render_pifl(pifl_rows) + "\n"
        if pifl_rows
        else ""
    )

    def render(items):
        return _template("mutation").substitute(
            j_elite=fmt_j(elite["J"]), source=elite["source"], insights=_insights(items),
            pifl_section=pifl_section, retry_note=_retry(retry_note),
        )

    user, kept = _fit(render, list(insights), budget)
    ctx = {"elite": elite, "insights": kept, "pifl": list(pifl_rows) if pifl_rows else None}
    return PromptBundle(system_prompt(), user, "mutation", context=ctx)


def _errors(per_building: dict | None) -> str:
    if not per_building:
        return "n/a"
    return ", ".join(f"{b} rmse {fmt_j(m.get('rmse'))}" for b, m in sorted(per_building.items()))


def reflect_short_prompt(a: dict, b: dict, budget=DEFAULT_CHAR_BUDGET):
    """``a``/``b`` carry id, source, J, segments, and optionally per_building and pifl rows."""
    user = _template("reflect_short").substitute(
        id_a=a["id"], j_a=fmt_j(a["J"]), source_a=a["source"], errors_a=_errors(a.get("per_building")),
        pifl_a="Segment statistics:\n" + render_pifl(a["pifl"]) + "\n" if a.get("pifl") else "",
        id_b=b["id"], j_b=fmt_j(b["J"]), source_b=b["source"], errors_b=_errors(b.get("per_building")),
        pifl_b="Segment statistics:\n" + render_pifl(b["pifl"]) + "\n" if b.get("pifl") else "",
    )
    user, _ = _fit(lambda _: user, [], budget)
    return PromptBundle(system_prompt(), user, "reflect_short", context={"parents": [a, b]})


def reflect_long_prompt(insights: list[str], summary: dict, budget=DEFAULT_CHAR_BUDGET):
    """``summary`` holds generation, best, worst (dicts with source and J), top_sources and pifl rows."""

    def render(items):
        return _template("reflect_long").substitute(
            generation=summary["generation"], insights=_insights(items),
            j_best=fmt_j(summary["best"]["J"]), best_source=summary["best"]["source"],
            j_worst=fmt_j(summary["worst"]["J"]), worst_source=summary["worst"]["source"],
            pifl=render_pifl(summary.get("pifl")),
        )

    user, kept = _fit(render, list(insights), budget)
    ctx = dict(summary, insights=kept)
    return PromptBundle(system_prompt(), user, "reflect_long", context=ctx)
