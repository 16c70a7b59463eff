from .base import (
    AGENT_ROLES,
    Completion,
    GenerationParams,
    Message,
    Provider,
    ProviderError,
    ScriptMissError,
    TransientProviderError,
    assistant,
    make_match_key,
    user,
)
from .http import ChatCompletionProvider
from .prompts import PromptError, load_template, render_prompt, render_refinement, template_ids
from .scripted import RecordingProvider, ScriptedProvider, ScriptEntry

__all__ = [
    "AGENT_ROLES",
    "ChatCompletionProvider",
    "Completion",
    "GenerationParams",
    "Message",
    "PromptError",
    "Provider",
    "ProviderError",
    "RecordingProvider",
    "ScriptEntry",
    "ScriptMissError",
    "ScriptedProvider",
    "TransientProviderError",
    "assistant",
    "load_template",
    "make_match_key",
    "render_prompt",
    "render_refinement",
    "template_ids",
    "user",
]
