"""Vectorised evaluation of heuristic programs over batches of forecast windows.

Every node compiles to a closure ``fn(env, active) -> ndarray`` that computes one value
per window for the current horizon step. ``active`` marks the windows for which the
node is actually evaluated (lazy ``if``/``&&``/``||`` narrow it); failures are recorded
per window and only where active, so a failing untaken branch never counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from buildevo.dsl.nodes import Binary, Call, Num, Program, Str, Unary

NODE_BUDGET = 1_000_000

FAILURE_KINDS = ("div_zero", "domain_error", "non_finite", "budget_exceeded")

EXOG_KEYS = ("temp", "humidity", "wind", "irradiance", "hour", "dow", "month", "is_weekend")
_EXOG_BUILTINS = {"temp": "temp", "humidity": "humidity", "wind": "wind", "irradiance": "irradiance",
                  "hour": "hour", "dow": "dow", "month": "month", "is_weekend": "is_weekend"}


@dataclass(frozen=True)
class Failure:
    kind: str
    location: str


@dataclass(frozen=True)
class EvalOutcome:
    predictions: np.ndarray | None = None
    failure: Failure | None = None
    node_evaluations: int = 0

    @property
    def ok(self) -> bool:
        return self.failure is None


class EvaluationFailed(RuntimeError):
    def __init__(self, failure: Failure):
        self.failure = failure
        super().__init__(f"{failure.kind} at {failure.location}")


@dataclass
class BatchResult:
    """Per-window outputs of one program over a batch.

    ``segments`` has shape (windows, segments, T_pred); ``predictions`` is the
    sequential sum over the segment axis.
    """

    predictions: np.ndarray
    segments: np.ndarray
    failures: list
    node_evaluations: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return np.array([f is None for f in self.failures], dtype=bool)

    def outcome(self, i: int) -> EvalOutcome:
        if self.failures[i] is not None:
            return EvalOutcome(failure=self.failures[i], node_evaluations=int(self.node_evaluations[i]))
        return EvalOutcome(predictions=self.predictions[i].copy(), node_evaluations=int(self.node_evaluations[i]))


class _Env:
    def __init__(self, windows, metadata: Mapping, budget: int):
        n = len(windows)
        self.n = n
        self.t_obs = len(windows[0].history)
        self.t_pred = len(windows[0].truth)
        self.history = np.stack([np.asarray(w.history, float) for w in windows])
        self.hist_temp = np.stack([np.asarray(w.history_exog["temp"], float) for w in windows])
        self.future = {k: np.stack([np.asarray(w.future_exog[k], float) for w in windows]) for k in EXOG_KEYS}
        metas = [metadata[w.building_id] for w in windows]
        self.sqft = np.array([np.nan if m.sqft is None else m.sqft for m in metas], dtype=float)
        self.year_built = np.array([np.nan if m.year_built is None else m.year_built for m in metas], dtype=float)
        self.usage = [m.primary_space_usage.casefold() for m in metas]
        self.preds = np.zeros((n, self.t_pred))
        self.failed = np.zeros(n, dtype=bool)
        self.failures: list = [None] * n
        self.counts = np.zeros(n, dtype=np.int64)
        self.budget = budget
        self.t = 1
        self.segment = ""

    def fail(self, where: np.ndarray, kind: str, what: str) -> None:
        hit = where & ~self.failed
        if hit.any():
            loc = f"segment {self.segment}, step {self.t}: {what}"
            for i in np.flatnonzero(hit):
                self.failures[i] = Failure(kind, loc)
            self.failed |= hit


Fn = Callable[[_Env, np.ndarray], np.ndarray]


def _finite(fn: Fn, what: str) -> Fn:
    def run(env, act):
        out = fn(env, act)
        bad = ~np.isfinite(out)
        if bad.any():
            env.fail(act & bad, "non_finite", what)
        return out

    return run


def _counted(fn: Fn) -> Fn:
    def run(env, act):
        env.counts += act
        return fn(env, act)

    return run


def _where(node) -> str:
    name = node.name + "()" if isinstance(node, Call) else getattr(node, "op", "literal")
    return f"{name} at {node.line}:{node.col}" if node.line else name


def _compile(node, env: _Env) -> Fn:
    if isinstance(node, Num):
        const = np.full(env.n, node.value)
        return _counted(lambda env, act: const)
    if isinstance(node, Str):
        raise TypeError("string literal evaluated as a number")
    if isinstance(node, Unary):
        inner = _compile(node.operand, env)
        if node.op == "-":
            return _counted(lambda env, act: -inner(env, act))
        return _counted(lambda env, act: (inner(env, act) == 0).astype(float))
    if isinstance(node, Binary):
        return _counted(_compile_binary(node, env))
    if isinstance(node, Call):
        return _counted(_compile_call(node, env))
    raise TypeError(f"unknown node {node!r}")


def _compile_binary(node: Binary, env: _Env) -> Fn:
    lf, rf = _compile(node.left, env), _compile(node.right, env)
    op, what = node.op, _where(node)
    if op == "&&":
        def land(env, act):
            a = lf(env, act) != 0
            b = rf(env, act & a) != 0
            return (a & b).astype(float)
        return land
    if op == "||":
        def lor(env, act):
            a = lf(env, act) != 0
            b = rf(env, act & ~a) != 0
            return (a | b).astype(float)
        return lor
    if op == "/":
        def div(env, act):
            a, b = lf(env, act), rf(env, act)
            zero = b == 0
            if zero.any():
                env.fail(act & zero, "div_zero", what)
            with np.errstate(all="ignore"):
                return a / np.where(zero, 1.0, b)
        return _finite(div, what)
    ufunc = {
        "+": np.add, "-": np.subtract, "*": np.multiply,
        "<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal,
        "==": np.equal, "!=": np.not_equal,
    }[op]
    if op in ("+", "-", "*"):
        def arith(env, act):
            with np.errstate(all="ignore"):
                return ufunc(lf(env, act), rf(env, act))
        return _finite(arith, what)
    return lambda env, act: ufunc(lf(env, act), rf(env, act)).astype(float)


def _compile_call(node: Call, env: _Env) -> Fn:
    name, what = node.name, _where(node)
    if name in ("lag", "temp_lag"):
        k = int(node.args[0].value)
        past = env.history if name == "lag" else env.hist_temp

        def lagged(env, act):
            idx = env.t_obs + env.t - k  # 1-based position in history ++ horizon
            if idx < 1:
                env.fail(act, "domain_error", f"{what} reaches before the history")
                return np.zeros(env.n)
            if idx <= env.t_obs:
                return past[:, idx - 1]
            if name == "lag":
                return env.preds[:, idx - env.t_obs - 1]
            return env.future["temp"][:, idx - env.t_obs - 1]
        return _finite(lagged, what)
    if name in ("roll_mean", "roll_min", "roll_max"):
        w = int(node.args[0].value)
        if w > env.t_obs:
            def too_long(env, act):
                env.fail(act, "domain_error", f"{what} window longer than history")
                return np.zeros(env.n)
            return too_long
        reducer = {"roll_mean": np.mean, "roll_min": np.min, "roll_max": np.max}[name]
        stat = reducer(env.history[:, env.t_obs - w:], axis=1)
        return _finite(lambda env, act: stat, what)
    if name in _EXOG_BUILTINS:
        key = _EXOG_BUILTINS[name]
        return _finite(lambda env, act: env.future[key][:, env.t - 1], what)
    if name in ("sqft", "year_built"):
        values = env.sqft if name == "sqft" else env.year_built
        return _finite(lambda env, act: values, what)
    if name == "usage_is":
        target = node.args[0].value.casefold()
        flags = np.array([u == target for u in env.usage], dtype=float)
        return lambda env, act: flags

    args = [_compile(a, env) for a in node.args]
    if name == "if":
        cond, yes, no = args

        def branch(env, act):
            c = cond(env, act) != 0
            a = yes(env, act & c)
            b = no(env, act & ~c)
            return np.where(c, a, b)
        return branch
    if name in ("hdd", "cdd"):
        (base,) = args
        sign = 1.0 if name == "hdd" else -1.0

        def degree(env, act):
            diff = sign * (base(env, act) - env.future["temp"][:, env.t - 1])
            return np.maximum(diff, 0.0)
        return _finite(degree, what)
    if name in ("min", "max"):
        fold = np.minimum if name == "min" else np.maximum

        def extreme(env, act):
            out = args[0](env, act)
            for f in args[1:]:
                out = fold(out, f(env, act))
            return out
        return extreme
    if name == "abs":
        return lambda env, act: np.abs(args[0](env, act))
    if name == "clamp":
        x, lo, hi = args
        return lambda env, act: np.minimum(np.maximum(x(env, act), lo(env, act)), hi(env, act))
    if name == "exp":
        def exp(env, act):
            with np.errstate(all="ignore"):
                return np.exp(args[0](env, act))
        return _finite(exp, what)
    if name in ("log", "sqrt"):
        fn = np.log if name == "log" else np.sqrt

        def guarded(env, act):
            x = args[0](env, act)
            neg = x < 0
            if neg.any():
                env.fail(act & neg, "domain_error", f"{what} of a negative number")
            with np.errstate(all="ignore"):
                return fn(np.where(neg, 1.0, x))
        return _finite(guarded, what)
    raise TypeError(f"no implementation for builtin {name!r}")


def _as_ast(program) -> Program:
    return program.ast if hasattr(program, "ast") else program


def run_batch(program, windows: Sequence, metadata: Mapping, budget: int = NODE_BUDGET) -> BatchResult:
    """Evaluate ``program`` on windows sharing one (T_obs, T_pred) shape.

    Never raises for evaluation problems; each window carries its own failure.
    """
    ast = _as_ast(program)
    if not windows:
        return BatchResult(np.zeros((0, 0)), np.zeros((0, len(ast.segments), 0)), [], np.zeros(0, np.int64))
    env = _Env(windows, metadata, budget)
    shapes = {(len(w.history), len(w.truth)) for w in windows}
    if len(shapes) != 1:
        raise ValueError("run_batch needs windows of one shape; group them first")
    compiled = [(seg.name, _compile(seg.body, env)) for seg in ast.segments]
    segs = np.zeros((env.n, len(compiled), env.t_pred))
    for t in range(1, env.t_pred + 1):
        env.t = t
        if env.failed.all():
            break
        active = ~env.failed
        total = np.zeros(env.n)
        for s, (name, fn) in enumerate(compiled):
            env.segment = name
            val = np.broadcast_to(fn(env, active), (env.n,))
            segs[:, s, t - 1] = val
            total = total + val
        env.segment = "<sum>"
        bad = ~np.isfinite(total)
        if bad.any():
            env.fail(active & bad, "non_finite", "prediction")
        env.preds[:, t - 1] = total
        over = env.counts > env.budget
        if over.any():
            env.fail(over, "budget_exceeded", f"more than {env.budget} node evaluations")
    preds = env.preds
    preds[env.failed] = np.nan
    segs[env.failed] = np.nan
    return BatchResult(preds, segs, env.failures, env.counts)


def group_by_shape(windows: Sequence) -> dict[tuple[int, int], list[int]]:
    groups: dict[tuple[int, int], list[int]] = {}
    for i, w in enumerate(windows):
        groups.setdefault((len(w.history), len(w.truth)), []).append(i)
    return groups


def evaluate_many(program, windows: Sequence, metadata: Mapping, budget: int = NODE_BUDGET) -> list[EvalOutcome]:
    outcomes: list = [None] * len(windows)
    for idx in group_by_shape(windows).values():
        res = run_batch(program, [windows[i] for i in idx], metadata, budget)
        for j, i in enumerate(idx):
            outcomes[i] = res.outcome(j)
    return outcomes


def _one(window, metadata) -> Mapping:
    return metadata if isinstance(metadata, Mapping) else {window.building_id: metadata}


def evaluate(program, window, metadata, budget: int = NODE_BUDGET) -> EvalOutcome:
    """Predict one window. ``metadata`` is the window's BuildingMetadata or an id -> metadata map."""
    return run_batch(program, [window], _one(window, metadata), budget).outcome(0)


def segment_values(program, window, metadata, budget: int = NODE_BUDGET) -> np.ndarray:
    """Per-segment contributions, shape (segments, T_pred). Raises EvaluationFailed."""
    res = run_batch(program, [window], _one(window, metadata), budget)
    if res.failures[0] is not None:
        raise EvaluationFailed(res.failures[0])
    return res.segments[0].copy()
