"""Agent backends, prompt templates and the three pipeline agents."""

from bugsynth.agents.structured import AgentRequest, complete_structured, extract_fenced_json

__all__ = ["AgentRequest", "complete_structured", "extract_fenced_json"]
