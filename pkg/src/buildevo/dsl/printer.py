"""Deterministic canonical formatting of program trees."""

from __future__ import annotations

from buildevo.dsl.nodes import Binary, Call, Num, Program, Str, Unary

_PREC = {"||": 1, "&&": 2, "<": 3, "<=": 3, ">": 3, ">=": 3, "==": 3, "!=": 3, "+": 4, "-": 4, "*": 5, "/": 5}
_UNARY_PREC = 6
_ATOM_PREC = 7


def format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def _prec(node) -> int:
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary):
        return _UNARY_PREC
    if isinstance(node, Num) and node.value < 0:
        return _UNARY_PREC
    return _ATOM_PREC


def _wrap(node, needs: bool) -> str:
    text = format_expr(node)
    return f"({text})" if needs else text


def format_expr(node) -> str:
    if isinstance(node, Num):
        if node.value < 0:
            return "-" + format_number(-node.value)
        return format_number(node.value)
    if isinstance(node, Str):
        escaped = node.value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(node, Call):
        return f"{node.name}({', '.join(format_expr(a) for a in node.args)})"
    if isinstance(node, Unary):
        return node.op + _wrap(node.operand, _prec(node.operand) < _UNARY_PREC)
    if isinstance(node, Binary):
        p = _PREC[node.op]
        if p == 3:
            # comparisons do not chain
            left, right = _prec(node.left) <= p, _prec(node.right) <= p
        else:
            left, right = _prec(node.left) < p, _prec(node.right) <= p
        return f"{_wrap(node.left, left)} {node.op} {_wrap(node.right, right)}"
    raise TypeError(f"not an expression node: {node!r}")


def print_canonical(program: Program) -> str:
    return "\n\n".join(f"segment {s.name} {{\n  {format_expr(s.body)}\n}}" for s in program.segments)
