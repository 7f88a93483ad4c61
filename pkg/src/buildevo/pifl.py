"""Per-segment contribution analysis: zero-ablation delta J and magnitude share."""

from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from buildevo.dsl import HeuristicProgram, Num, Program
from buildevo.dsl.edit import with_segment_body
from buildevo.dsl.interpreter import group_by_shape, run_batch
from buildevo.evaluation import ForecastWindow, score_predictions
from buildevo.llm.prompts import fmt_j


class UnknownSegment(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name


class NonExecutable(ValueError):
    pass


@dataclass(frozen=True)
class SegmentStat:
    name: str
    delta_j: float
    abs_share: float
    windows_used: int

    @property
    def flagged(self) -> bool:
        return not self.delta_j > 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "ablation_delta_J": self.delta_j if math.isfinite(self.delta_j) else None,
            "abs_share": self.abs_share,
            "windows_used": self.windows_used,
        }


@dataclass(frozen=True)
class PiflReport:
    heuristic_id: str
    J: float
    segments: tuple[SegmentStat, ...]
    rendered_text: str
    scoring_passes: int = 0

    def rows(self) -> list[dict]:
        """Compact rows for prompt assembly, in rendered order."""
        return [{"name": s.name, "delta_j": s.delta_j if math.isfinite(s.delta_j) else None, "share": s.abs_share}
                for s in _ordered(self.segments)]

    def to_dict(self) -> dict:
        return {
            "heuristic_id": self.heuristic_id,
            "J": self.J,
            "segments": [s.to_dict() for s in self.segments],
            "rendered_text": self.rendered_text,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _ast(program) -> Program:
    return program.ast if isinstance(program, HeuristicProgram) else program


def ablate_segment(program, name: str):
    """Same program with segment ``name`` contributing a literal 0."""
    ast = _ast(program)
    if name not in ast.names:
        raise UnknownSegment(name)
    ablated = with_segment_body(ast, name, Num(0.0))
    if isinstance(program, HeuristicProgram):
        return HeuristicProgram.from_ast(ablated, program.id, program.lineage, program.generation)
    return ablated


def _run(ast: Program, windows, metadata):
    """Predictions, failure kinds and per-segment values for every window."""
    n = len(windows)
    preds: list = [None] * n
    kinds: list = [None] * n
    segs: list = [None] * n
    for idx in group_by_shape(windows).values():
        res = run_batch(ast, [windows[i] for i in idx], metadata)
        for j, i in enumerate(idx):
            if res.failures[j] is None:
                preds[i] = res.predictions[j]
                segs[i] = res.segments[j]
            else:
                kinds[i] = res.failures[j].kind
    return preds, kinds, segs


def _ordered(stats):
    return sorted(stats, key=lambda s: (-s.delta_j if not math.isnan(s.delta_j) else math.inf, s.name))


def render(heuristic_id: str, J: float, stats) -> str:
    lines = [f"Segment analysis for {heuristic_id or 'heuristic'} (J={fmt_j(J)})", "segment | delta_J if removed | share of |output| | note"]
    for s in _ordered(stats):
        note = "removal candidate: does not improve J" if s.flagged else "helps"
        lines.append(f"{s.name} | {fmt_j(s.delta_j)} | {s.abs_share:.4f} | {note}")
    return "\n".join(lines)


def analyze(
    program,
    windows: Sequence[ForecastWindow],
    metadata: Mapping,
    objective: str = "rmse",
    threads: int = 1,
) -> PiflReport:
    ast = _ast(program)
    hid = program.id if isinstance(program, HeuristicProgram) else ""
    preds, kinds, segs = _run(ast, windows, metadata)
    base = score_predictions(windows, preds, objective, kinds)
    ok = [s for s in segs if s is not None]
    if not ok or not base.executable:
        raise NonExecutable(f"heuristic {hid or '<anonymous>'} is not executable on the given windows")

    stacked = np.concatenate(ok, axis=1)  # (S, total hours)
    mags = np.abs(stacked).sum(axis=1)
    total = float(mags.sum())
    shares = mags / total if total > 0 else np.zeros_like(mags)

    def ablated_j(name):
        p, k, _ = _run(with_segment_body(ast, name, Num(0.0)), windows, metadata)
        return score_predictions(windows, p, objective, k).J

    names = ast.names
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            js = list(pool.map(ablated_j, names))
    else:
        js = [ablated_j(n) for n in names]
    stats = tuple(
        SegmentStat(name, float(j - base.J), float(shares[i]), len(ok)) for i, (name, j) in enumerate(zip(names, js))
    )
    return PiflReport(hid, float(base.J), stats, render(hid, base.J, stats), 1 + len(names))
