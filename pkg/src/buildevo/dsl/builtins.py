"""Registry of functions available to heuristic programs."""

from __future__ import annotations

from dataclasses import dataclass

REGISTRY_VERSION = 1

MAX_WINDOW_ARG = 100_000


@dataclass(frozen=True)
class Builtin:
    name: str
    min_args: int
    max_args: int | None
    doc: str
    # argument positions that must be positive integer literals
    int_args: tuple[int, ...] = ()
    string_args: tuple[int, ...] = ()


_DEFS = [
    Builtin("lag", 1, 1, "consumption k hours before the predicted hour; reads earlier predictions inside the horizon", int_args=(0,)),
    Builtin("roll_mean", 1, 1, "mean of the last w observed hours", int_args=(0,)),
    Builtin("roll_min", 1, 1, "minimum of the last w observed hours", int_args=(0,)),
    Builtin("roll_max", 1, 1, "maximum of the last w observed hours", int_args=(0,)),
    Builtin("hour", 0, 0, "local hour of day of the predicted hour, 0-23"),
    Builtin("dow", 0, 0, "local day of week, Monday=0"),
    Builtin("month", 0, 0, "local month, 1-12"),
    Builtin("is_weekend", 0, 0, "1 on Saturday/Sunday else 0"),
    Builtin("temp", 0, 0, "air temperature (C) at the predicted hour"),
    Builtin("humidity", 0, 0, "relative humidity (%) at the predicted hour"),
    Builtin("wind", 0, 0, "wind speed (m/s) at the predicted hour"),
    Builtin("irradiance", 0, 0, "solar irradiance (W/m2) at the predicted hour"),
    Builtin("temp_lag", 1, 1, "air temperature k hours before the predicted hour", int_args=(0,)),
    Builtin("hdd", 1, 1, "heating degree-hours max(0, base - temp())"),
    Builtin("cdd", 1, 1, "cooling degree-hours max(0, temp() - base)"),
    Builtin("sqft", 0, 0, "building floor area (sq ft)"),
    Builtin("year_built", 0, 0, "building construction year"),
    Builtin("usage_is", 1, 1, 'usage_is("Office") is 1 when primary space usage matches (case-insensitive)', string_args=(0,)),
    Builtin("min", 2, None, "smallest argument"),
    Builtin("max", 2, None, "largest argument"),
    Builtin("abs", 1, 1, "absolute value"),
    Builtin("clamp", 3, 3, "clamp(x, lo, hi)"),
    Builtin("exp", 1, 1, "e**x"),
    Builtin("log", 1, 1, "natural log; fails for negative input"),
    Builtin("sqrt", 1, 1, "square root; fails for negative input"),
    Builtin("if", 3, 3, "if(cond, a, b): a when cond != 0 else b; only the chosen branch is evaluated"),
]

BUILTINS: dict[str, Builtin] = {b.name: b for b in _DEFS}


def builtin_reference() -> str:
    """One line per builtin, for embedding in prompts."""
    lines = []
    for b in _DEFS:
        if b.max_args is None:
            sig = "a, b, ..."
        else:
            sig = ", ".join("k" if i in b.int_args else ('"text"' if i in b.string_args else "x") for i in range(b.max_args))
        lines.append(f"{b.name}({sig}): {b.doc}")
    return "\n".join(lines)
