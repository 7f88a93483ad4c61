"""Evolve interpretable building-energy forecasting heuristics with LLM-backed operators."""

__version__ = "0.1.0"

METER_TYPES = (
    "electricity",
    "chilledwater",
    "hotwater",
    "steam",
    "gas",
    "solar",
    "irrigation",
    "water",
)
