"""Process, causal, and feature-importance knowledge views from event logs,
stored in a labeled property graph and blended into guided LLM prompts."""

__version__ = "0.1.0"
