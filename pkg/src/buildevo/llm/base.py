from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Protocol

from buildevo.dsl import DslError, parse

OPERATORS = ("init", "crossover", "mutation", "reflect_short", "reflect_long")
CODE_OPERATORS = ("init", "crossover", "mutation")


class ProviderError(Exception):
    pass


class ProviderUnavailable(ProviderError):
    pass


class ResponseEmpty(ProviderError):
    pass


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    operator: str
    token_budget_hint: int = 2048
    # structured mirror of what ``user`` says; offline providers read this instead of parsing prose
    context: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.operator not in OPERATORS:
            raise ValueError(f"unknown operator {self.operator!r}")

    @property
    def size(self) -> int:
        return len(self.system) + len(self.user)


@dataclass(frozen=True)
class ProviderResponse:
    raw_text: str
    extracted: str | None
    latency_ms: float = 0.0
    attempt: int = 1


class Provider(Protocol):
    def complete(self, bundle: PromptBundle) -> ProviderResponse: ...


_FENCE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


def extract_code(raw_text: str) -> str | None:
    """Content of the first fenced block; otherwise the whole text if it parses as DSL."""
    m = _FENCE.search(raw_text)
    if m:
        body = m.group(1)
        return body[:-1] if body.endswith("\n") else body
    try:
        parse(raw_text)
    except DslError:
        return None
    return raw_text


def extract(bundle: PromptBundle, raw_text: str) -> str | None:
    if bundle.operator in CODE_OPERATORS:
        return extract_code(raw_text)
    text = raw_text.strip()
    return text or None
