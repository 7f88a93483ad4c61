"""Recursive-descent parser and validator for the heuristic language.

Grammar::

    program  := segment+
    segment  := "segment" IDENT "{" expr "}"
    expr     := or ;  or := and ("||" and)* ;  and := cmp ("&&" cmp)*
    cmp      := add (("<"|"<="|">"|">="|"=="|"!=") add)?
    add      := mul (("+"|"-") mul)* ;  mul := unary (("*"|"/") unary)*
    unary    := ("-"|"!") unary | atom
    atom     := NUMBER | STRING | call | "(" expr ")"
    call     := IDENT "(" (expr ("," expr)*)? ")"
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from buildevo.dsl.builtins import BUILTINS, MAX_WINDOW_ARG
from buildevo.dsl.nodes import Binary, Call, Num, Program, Segment, Str, Unary, depth, node_count, walk

MAX_NODES = 512
MAX_DEPTH = 32
# parser recursion guard; deeper input is rejected before the tree is built
MAX_NESTING = 64


class DslError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        super().__init__(f"{message} (line {line}, col {col})" if line else message)


class DslSyntaxError(DslError):
    def __init__(self, line: int, col: int, expected: str, found: str = ""):
        self.expected = expected
        self.found = found
        msg = f"expected {expected}" + (f", found {found!r}" if found else "")
        super().__init__(msg, line, col)


class ValidationError(DslError):
    def __init__(self, reason: str, line: int = 0, col: int = 0):
        self.reason = reason
        super().__init__(reason, line, col)


@dataclass(frozen=True)
class Token:
    kind: str  # NUM, STR, IDENT, OP, EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<str>"(?:[^"\\\n]|\\["\\])*")
  | (?P<op>\|\||&&|<=|>=|==|!=|[<>+\-*/!(){},])
    """,
    re.VERBOSE,
)


def tokenize(source: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            if source[pos] == '"':
                raise DslSyntaxError(line, col, "terminated string literal")
            raise DslSyntaxError(line, col, "a token", source[pos])
        kind = m.lastgroup
        text = m.group()
        if kind == "num":
            tokens.append(Token("NUM", text, line, col))
        elif kind == "ident":
            tokens.append(Token("IDENT", text, line, col))
        elif kind == "str":
            tokens.append(Token("STR", text, line, col))
        elif kind == "op":
            tokens.append(Token("OP", text, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


def _unescape(text: str) -> str:
    return re.sub(r"\\([\"\\])", r"\1", text[1:-1])


_CMP_OPS = ("<", "<=", ">", ">=", "==", "!=")


class _Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.i = 0
        self.nesting = 0
        self.nodes = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, kind: str, text: str | None = None, what: str | None = None) -> Token:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            raise DslSyntaxError(t.line, t.col, what or repr(text) if text else what or kind, t.text or "end of input")
        return self.advance()

    def at_op(self, *ops: str) -> bool:
        return self.tok.kind == "OP" and self.tok.text in ops

    def made(self, node):
        self.nodes += 1
        if self.nodes > MAX_NODES:
            raise ValidationError(f"program exceeds {MAX_NODES} nodes", node.line, node.col)
        return node

    def enter(self):
        self.nesting += 1
        if self.nesting > MAX_NESTING:
            raise ValidationError(f"expression nesting exceeds {MAX_NESTING}", self.tok.line, self.tok.col)

    def leave(self):
        self.nesting -= 1

    def program(self) -> Program:
        segments = []
        while self.tok.kind != "EOF":
            segments.append(self.segment())
        if not segments:
            raise DslSyntaxError(self.tok.line, self.tok.col, "'segment'", "end of input")
        return Program(tuple(segments))

    def segment(self) -> Segment:
        kw = self.tok
        if kw.kind != "IDENT" or kw.text != "segment":
            raise DslSyntaxError(kw.line, kw.col, "'segment'", kw.text or "end of input")
        self.advance()
        name = self.expect("IDENT", what="segment name")
        self.expect("OP", "{")
        body = self.expr()
        self.expect("OP", "}")
        return Segment(name.text, body, kw.line, kw.col)

    def expr(self):
        self.enter()
        try:
            return self.binary_chain(0)
        finally:
            self.leave()

    _LEVELS = (("||",), ("&&",))

    def binary_chain(self, level: int):
        if level == 2:
            return self.cmp()
        ops = self._LEVELS[level]
        left = self.binary_chain(level + 1)
        while self.at_op(*ops):
            op = self.advance()
            right = self.binary_chain(level + 1)
            left = self.made(Binary(op.text, left, right, op.line, op.col))
        return left

    def cmp(self):
        left = self.add()
        if self.at_op(*_CMP_OPS):
            op = self.advance()
            right = self.add()
            left = self.made(Binary(op.text, left, right, op.line, op.col))
        return left

    def add(self):
        left = self.mul()
        while self.at_op("+", "-"):
            op = self.advance()
            right = self.mul()
            left = self.made(Binary(op.text, left, right, op.line, op.col))
        return left

    def mul(self):
        left = self.unary()
        while self.at_op("*", "/"):
            op = self.advance()
            right = self.unary()
            left = self.made(Binary(op.text, left, right, op.line, op.col))
        return left

    def unary(self):
        if self.at_op("-", "!"):
            op = self.advance()
            self.enter()
            try:
                operand = self.unary()
            finally:
                self.leave()
            return self.made(Unary(op.text, operand, op.line, op.col))
        return self.atom()

    def atom(self):
        t = self.tok
        if t.kind == "NUM":
            self.advance()
            return self.made(Num(float(t.text), t.line, t.col))
        if t.kind == "STR":
            self.advance()
            return self.made(Str(_unescape(t.text), t.line, t.col))
        if t.kind == "IDENT":
            self.advance()
            self.expect("OP", "(", what=f"'(' after {t.text!r}")
            args = []
            if not self.at_op(")"):
                args.append(self.expr())
                while self.at_op(","):
                    self.advance()
                    args.append(self.expr())
            self.expect("OP", ")", what="')' or ','")
            return self.made(Call(t.text, tuple(args), t.line, t.col))
        if self.at_op("("):
            self.advance()
            inner = self.expr()
            self.expect("OP", ")")
            return inner
        raise DslSyntaxError(t.line, t.col, "an expression", t.text or "end of input")


def validate(program: Program) -> Program:
    """Check names, size budgets, builtins, arity and literal-argument rules."""
    if not program.segments:
        raise ValidationError("program has no segments")
    seen = set()
    total = 0
    for seg in program.segments:
        if seg.name in seen:
            raise ValidationError(f"duplicate segment {seg.name!r}", seg.line, seg.col)
        seen.add(seg.name)
        total += node_count(seg.body)
        if total > MAX_NODES:
            raise ValidationError(f"program exceeds {MAX_NODES} nodes", seg.line, seg.col)
        if depth(seg.body) > MAX_DEPTH:
            raise ValidationError(f"segment {seg.name!r} nesting depth exceeds {MAX_DEPTH}", seg.line, seg.col)
        string_ok: set[int] = set()
        for node in walk(seg.body):
            if isinstance(node, Num) and not math.isfinite(node.value):
                raise ValidationError("numeric literal out of range", node.line, node.col)
            if isinstance(node, Str) and id(node) not in string_ok:
                raise ValidationError("string literal outside usage_is()", node.line, node.col)
            if isinstance(node, Call):
                _check_call(node, string_ok)
    return program


def _check_call(node: Call, string_ok: set[int]) -> None:
    spec = BUILTINS.get(node.name)
    if spec is None:
        raise ValidationError(f"unknown function {node.name!r}", node.line, node.col)
    n = len(node.args)
    if n < spec.min_args or (spec.max_args is not None and n > spec.max_args):
        want = str(spec.min_args) if spec.min_args == spec.max_args else f"at least {spec.min_args}"
        raise ValidationError(f"{node.name}() takes {want} argument(s), got {n}", node.line, node.col)
    for i in spec.int_args:
        arg = node.args[i]
        if not (isinstance(arg, Num) and 1 <= arg.value <= MAX_WINDOW_ARG and arg.value == int(arg.value)):
            raise ValidationError(f"{node.name}() needs a positive integer literal", node.line, node.col)
    for i in spec.string_args:
        if not isinstance(node.args[i], Str):
            raise ValidationError(f"{node.name}() needs a string literal", node.line, node.col)
        string_ok.add(id(node.args[i]))


def parse(source: str) -> Program:
    """Parse and validate DSL text. Raises DslSyntaxError or ValidationError."""
    if not source or not source.strip():
        raise DslSyntaxError(1, 1, "'segment'", "end of input")
    return validate(_Parser(source).program())
