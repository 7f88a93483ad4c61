"""Structural edits on program trees used by the genetic operators."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from buildevo.dsl.builtins import BUILTINS
from buildevo.dsl.nodes import Binary, Call, Num, Program, Segment, Unary, children

Path = tuple[int, ...]


def literal_paths(node, path: Path = ()) -> list[tuple[Path, float]]:
    """Numeric literals that can be rescaled (not integer window/lag arguments)."""
    out = []
    stack = [(node, path)]
    while stack:
        n, p = stack.pop()
        if isinstance(n, Num):
            out.append((p, n.value))
            continue
        fixed = set(BUILTINS[n.name].int_args) if isinstance(n, Call) and n.name in BUILTINS else set()
        for i, c in enumerate(children(n)):
            if i not in fixed:
                stack.append((c, p + (i,)))
    return sorted(out)


def get_at(node, path: Path):
    for i in path:
        node = children(node)[i]
    return node


def replace_at(node, path: Path, new):
    if not path:
        return new
    i, rest = path[0], path[1:]
    if isinstance(node, Call):
        args = list(node.args)
        args[i] = replace_at(args[i], rest, new)
        return replace(node, args=tuple(args))
    if isinstance(node, Unary):
        return replace(node, operand=replace_at(node.operand, rest, new))
    if isinstance(node, Binary):
        if i == 0:
            return replace(node, left=replace_at(node.left, rest, new))
        return replace(node, right=replace_at(node.right, rest, new))
    raise IndexError("path descends into a leaf")


def with_segment_body(program: Program, name: str, body) -> Program:
    if name not in program.names:
        raise KeyError(name)
    return Program(tuple(replace(s, body=body) if s.name == name else s for s in program.segments))


def append_segment(program: Program, name: str, body) -> Program:
    return Program(program.segments + (Segment(fresh_name(program, name), body),))


def fresh_name(program: Program, base: str) -> str:
    taken = set(program.names)
    if base not in taken:
        return base
    k = 2
    while f"{base}_{k}" in taken:
        k += 1
    return f"{base}_{k}"


def round_sig(value: float, digits: int = 4) -> float:
    return float(f"{value:.{digits}g}")


def perturb_literal(
    program: Program,
    rng: np.random.Generator,
    low: float = 0.8,
    high: float = 1.25,
    segments: list[str] | None = None,
) -> tuple[Program, str] | None:
    """Scale one literal by U(low, high). Returns (program, segment name) or None if no literal exists.

    Non-zero literals are preferred since scaling zero is a no-op.
    """
    candidates = []
    for s in program.segments:
        if segments is not None and s.name not in segments:
            continue
        for path, value in literal_paths(s.body):
            candidates.append((s.name, path, value))
    if not candidates:
        return None
    nonzero = [c for c in candidates if c[2] != 0]
    pool = nonzero or candidates
    name, path, value = pool[int(rng.integers(len(pool)))]
    factor = float(rng.uniform(low, high))
    new_value = round_sig(value * factor)
    if new_value == value:
        new_value = value * factor
    seg = program.segment(name)
    body = replace_at(seg.body, path, Num(new_value))
    return with_segment_body(program, name, body), name
