"""The segment-structured heuristic language: parsing, printing and evaluation."""

from buildevo.dsl.builtins import BUILTINS, builtin_reference
from buildevo.dsl.interpreter import (
    EvalOutcome,
    EvaluationFailed,
    Failure,
    evaluate,
    evaluate_many,
    run_batch,
    segment_values,
)
from buildevo.dsl.nodes import Binary, Call, Num, Program, Segment, Str, Unary
from buildevo.dsl.parser import DslError, DslSyntaxError, ValidationError, parse, validate
from buildevo.dsl.printer import print_canonical
from buildevo.dsl.program import HeuristicProgram, Lineage

__all__ = [
    "BUILTINS",
    "Binary",
    "Call",
    "DslError",
    "DslSyntaxError",
    "EvalOutcome",
    "EvaluationFailed",
    "Failure",
    "HeuristicProgram",
    "Lineage",
    "Num",
    "Program",
    "Segment",
    "Str",
    "Unary",
    "ValidationError",
    "builtin_reference",
    "evaluate",
    "evaluate_many",
    "parse",
    "print_canonical",
    "run_batch",
    "segment_values",
    "validate",
]
