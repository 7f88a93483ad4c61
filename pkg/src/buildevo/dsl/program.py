from __future__ import annotations

from dataclasses import dataclass, field, replace

from buildevo.dsl.nodes import Program
from buildevo.dsl.parser import parse, validate
from buildevo.dsl.printer import print_canonical

OPERATORS = ("seed", "init", "crossover", "mutation")


@dataclass(frozen=True)
class Lineage:
    operator: str = "seed"
    parent_ids: tuple[str, ...] = ()
    fallback: bool = False

    def __post_init__(self):
        if self.operator not in OPERATORS:
            raise ValueError(f"unknown lineage operator {self.operator!r}")


@dataclass(frozen=True)
class HeuristicProgram:
    """A validated heuristic. ``source`` is always the canonical rendering of ``ast``."""

    id: str
    source: str
    ast: Program = field(repr=False)
    lineage: Lineage = Lineage()
    generation: int = 0

    @classmethod
    def from_source(cls, source: str, id: str = "", lineage: Lineage | None = None, generation: int = 0):
        ast = parse(source)
        return cls(id=id, source=print_canonical(ast), ast=ast, lineage=lineage or Lineage(), generation=generation)

    @classmethod
    def from_ast(cls, ast: Program, id: str = "", lineage: Lineage | None = None, generation: int = 0):
        validate(ast)
        return cls(id=id, source=print_canonical(ast), ast=ast, lineage=lineage or Lineage(), generation=generation)

    @property
    def segment_names(self) -> list[str]:
        return self.ast.names

    def relabel(self, id: str, lineage: Lineage | None = None, generation: int | None = None) -> HeuristicProgram:
        return replace(
            self,
            id=id,
            lineage=lineage if lineage is not None else self.lineage,
            generation=self.generation if generation is None else generation,
        )
