"""LLM boundary: prompt bundles, an OpenAI-compatible HTTP client and a deterministic mock."""

from buildevo.llm.base import (
    CODE_OPERATORS,
    OPERATORS,
    PromptBundle,
    Provider,
    ProviderError,
    ProviderResponse,
    ProviderUnavailable,
    ResponseEmpty,
    extract_code,
)
from buildevo.llm.http import HttpProvider
from buildevo.llm.mock import MockProvider


def mock_provider(seed: int, **kwargs) -> MockProvider:
    return MockProvider(seed, **kwargs)


__all__ = [
    "CODE_OPERATORS",
    "HttpProvider",
    "MockProvider",
    "OPERATORS",
    "PromptBundle",
    "Provider",
    "ProviderError",
    "ProviderResponse",
    "ProviderUnavailable",
    "ResponseEmpty",
    "extract_code",
    "mock_provider",
]
