import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixtures import office, window
from gen import random_program, random_source
from buildevo.dsl import (
    BUILTINS,
    DslError,
    DslSyntaxError,
    HeuristicProgram,
    ValidationError,
    builtin_reference,
    evaluate,
    evaluate_many,
    parse,
    print_canonical,
    segment_values,
)
from buildevo.dsl.edit import fresh_name, literal_paths, perturb_literal
from buildevo.dsl.parser import MAX_DEPTH, MAX_NODES

W = window([1, 2, 3, 4], [0, 0, 0])
MD = office()


def run(src, w=W, md=MD, **kw):
    return evaluate(parse(src), w, md, **kw)


@pytest.mark.parametrize(
    "src, expected",
    [
        ("segment a { lag(1) }", [4, 4, 4]),
        ("segment a { lag(2) + 1 }", [4, 5, 5]),  # third step reads the first prediction
        ("segment a { roll_mean(2) }", [3.5, 3.5, 3.5]),
        ("segment a { roll_min(4) + roll_max(4) }", [5, 5, 5]),
        ("segment a { if(1, 5, 1 / 0) }", [5, 5, 5]),
        ('segment a { usage_is("OFFICE") + usage_is("retail") }', [1, 1, 1]),
        ("segment a { sqft() / 1000 + year_built() - 1990 }", [1, 1, 1]),
        ("segment a { clamp(7, 0, 2) * max(1, 2, 3) - min(4, abs(0 - 5)) }", [2, 2, 2]),
        ("segment a { 1 < 2 && 3 >= 3 || 0 }", [1, 1, 1]),
    ],
)
def test_evaluation_examples(src, expected):
    out = run(src)
    assert out.ok
    assert np.allclose(out.predictions, expected)


def test_exogenous_reads_future_rows():
    w = window([0, 0], [0, 0, 0], temp=[10, 20, 30], hour=[5, 6, 7])
    assert list(run("segment a { cdd(15) + hour() }", w).predictions) == [5, 11, 22]
    assert list(run("segment a { hdd(25) }", w).predictions) == [15, 5, 0]


@pytest.mark.parametrize(
    "src, kind",
    [
        ("segment a { 1 / 0 }", "div_zero"),
        ("segment a { log(0 - 1) }", "domain_error"),
        ("segment a { sqrt(0 - 4) }", "domain_error"),
        ("segment a { exp(1000) }", "non_finite"),
    ],
)
def test_failure_kinds(src, kind):
    out = run(src)
    assert not out.ok and out.predictions is None
    assert out.failure.kind == kind
    assert "segment a" in out.failure.location


def test_node_budget():
    out = run("segment a { lag(1) }", budget=2)
    assert out.failure.kind == "budget_exceeded"


def test_usage_is_missing_metadata_is_zero():
    md = office(usage="unknown")
    assert list(run('segment a { usage_is("Office") }', md=md).predictions) == [0, 0, 0]


@pytest.mark.parametrize(
    "src, line, col",
    [
        ("segment { 1 }", 1, 9),
        ("segment a { 1 +\n }", 2, 2),
        ("segment a { lag(0) }", 1, 13),
        ("segment a { foo(1) }", 1, 13),
        ('segment a { "x" }', 1, 13),
        ("segment a {1} segment a {2}", 1, 15),
    ],
)
def test_errors_are_located(src, line, col):
    with pytest.raises(DslError) as err:
        parse(src)
    assert (err.value.line, err.value.col) == (line, col)
    assert f"line {line}" in str(err.value)


def test_error_classes():
    with pytest.raises(DslSyntaxError):
        parse("")
    with pytest.raises(ValidationError):
        parse("segment a { lag(1, 2) }")
    with pytest.raises(ValidationError):
        parse("segment a { lag(2.5) }")


def test_size_limits():
    deep = "segment a { " + "(" * (MAX_DEPTH + 2) + "1" + ")" * (MAX_DEPTH + 2) + " }"
    parse(deep)  # parentheses alone add no depth
    nested = "segment a { " + "abs(" * (MAX_DEPTH + 1) + "1" + ")" * (MAX_DEPTH + 1) + " }"
    with pytest.raises(DslError):
        parse(nested)
    wide = "segment a { " + " + ".join(["1"] * (MAX_NODES + 1)) + " }"
    with pytest.raises(DslError):
        parse(wide)


def test_canonical_printing():
    text = print_canonical(parse("segment a { 1+2*(3-4) }\nsegment b{-lag(3)/2}"))
    assert text == "segment a {\n  1 + 2 * (3 - 4)\n}\n\nsegment b {\n  -lag(3) / 2\n}"


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_print_parse_round_trip(seed):
    prog = random_program(np.random.default_rng(seed))
    text = print_canonical(prog)
    again = parse(text)
    assert print_canonical(again) == text
    assert evaluate(again, W, MD).ok == evaluate(prog, W, MD).ok


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_parse_is_total(seed):
    src = random_source(np.random.default_rng(seed))
    try:
        prog = parse(src)
    except DslError as exc:
        assert exc.line >= 1 and exc.col >= 1
        return
    for out in evaluate_many(prog, [W, window(range(30), np.zeros(5))], MD):
        assert out.ok == (out.failure is None)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_segments_sum_to_prediction(seed):
    prog = random_program(np.random.default_rng(seed))
    out = evaluate(prog, W, MD)
    if out.ok:
        assert np.allclose(segment_values(prog, W, MD).sum(axis=0), out.predictions, rtol=0, atol=1e-9 * (1 + np.abs(out.predictions).max()))


def test_heuristic_program_wraps_ast():
    p = HeuristicProgram.from_source("segment x { 1 }\nsegment y { lag(24) }", "h1")
    assert p.segment_names == ["x", "y"]
    assert p.id == "h1"
    assert p.relabel("h2").id == "h2"


def test_builtin_reference_lists_every_builtin():
    ref = builtin_reference()
    assert len(ref.splitlines()) == len(BUILTINS)
    assert all(name + "(" in ref for name in BUILTINS)


def test_edit_helpers():
    prog = parse("segment a { 2 * lag(24) + 0 }")
    values = sorted(v for _, v in literal_paths(prog.segments[0].body))
    assert values == [0, 2]  # window argument 24 is not a tunable literal
    assert fresh_name(prog, "a") == "a_2" and fresh_name(prog, "b") == "b"
    new, seg = perturb_literal(prog, np.random.default_rng(0))
    assert seg == "a"
    (_, v), = [(p, v) for p, v in literal_paths(new.segments[0].body) if v not in (0,)]
    assert 1.6 <= v <= 2.5
    assert perturb_literal(parse("segment a { lag(1) }"), np.random.default_rng(0)) is None
