"""Blend selected knowledge views and a user question into a guided LLM prompt.

Section order is fixed: process view, causal view, XAI view, then a sentence
naming the included perspectives and the question line tagging them.  The
leading phrases are versioned text resources, not generated.  Rendering is
pure; the HTTP client is pluggable and a scripted mock is provided for tests.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Protocol, Sequence

import httpx

from . import causal, discovery, xai
from .errors import (
    AuthFailure,
    EmptyQuestion,
    ModelRefusal,
    RateLimited,
    ScriptExhausted,
    TransportError,
)
from .graphstore import KnowledgeGraph

#: enable DEBUG on this logger for request/response audit trails (keys redacted)
audit_log = logging.getLogger("saxkit.llm.audit")

VIEW_ORDER = ("process", "causal", "xai")
_VIEW_TAGS = {"process": "[process view]", "causal": "[causal view]", "xai": "[XAI view]"}
_VIEW_PHRASES = {"process": "a process view", "causal": "a causal view", "xai": "an XAI view"}
_COUNT_WORDS = {1: "one perspective", 2: "two perspectives", 3: "three perspectives"}


def _template(name: str) -> str:
    return resources.files("saxkit.templates").joinpath(name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class IngredientSelection:
    process: bool = False
    causal: bool = False
    xai: bool = False

    def __post_init__(self):
        if not (self.process or self.causal or self.xai):
            raise ValueError("select at least one knowledge ingredient")

    def included(self) -> tuple[str, ...]:
        return tuple(v for v in VIEW_ORDER if getattr(self, v))


@dataclass(frozen=True)
class PromptBundle:
    selection: IngredientSelection
    question: str
    rendered: str
    ingredient_digests: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class LlmConfig:
    endpoint_url: str = ""
    model_name: str = "gpt-4"
    temperature: float | None = None
    top_p: float | None = None
    max_tokens: int | None = None
    api_key_env: str = "SAX_LLM_API_KEY"

    def __post_init__(self):
        if self.temperature is not None and not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")
        if self.top_p is not None and not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must lie in (0, 1]")
        if self.max_tokens is not None and self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class Explanation:
    text: str
    usage: dict
    latency_s: float


def _enumerate(parts: Sequence[str]) -> str:
    if len(parts) == 1:
        return parts[0]
    if len(parts) == 2:
        return f"{parts[0]} and {parts[1]}"
    return ", ".join(parts[:-1]) + f", and {parts[-1]}"


def render_payloads(
    payloads: dict[str, str],
    sel: IngredientSelection,
    question: str,
    brevity: bool = False,
) -> str:
    """Assemble the prompt text from already-exported view payloads."""
    if not question.strip():
        raise EmptyQuestion("the question must not be blank")
    parts: list[str] = []
    if sel.process:
        parts.append(_template("process_preamble.txt"))
        parts.append(payloads["process"] + "\n")
    if sel.causal:
        parts.append(_template("causal_preamble.txt") + payloads["causal"] + "\n")
    if sel.xai:
        parts.append(_template("xai_preamble.txt"))
        parts.append(payloads["xai"] + "\n")

    included = sel.included()
    phrases = [_VIEW_PHRASES[v] for v in included]
    tags = [_VIEW_TAGS[v] for v in included]
    parts.append(
        f"The above text includes {_COUNT_WORDS[len(included)]} about a business process, "
        f"consisting of {_enumerate(phrases)}.\n"
    )
    question_line = (
        f"QUESTION: Can you give the briefest and most concise explanation to "
        f"{question.strip()}, considering the views above: {_enumerate(tags)}?"
    )
    if brevity:
        question_line += " " + _template("brevity_suffix.txt")
    parts.append(question_line)
    return "".join(parts)


def view_payloads(g: KnowledgeGraph, sel: IngredientSelection) -> dict[str, str]:
    """Export each selected view from the graph in its canonical wire form."""
    payloads: dict[str, str] = {}
    if sel.process:
        payloads["process"] = discovery.export_process_json(discovery.view_from_graph(g))
    if sel.causal:
        meta = g.layer_meta.get("process", {})
        payloads["causal"] = causal.export_causal_json(
            causal.view_from_graph(g),
            start_marker=meta.get("start_marker", discovery.DEFAULT_START_MARKER),
            end_marker=meta.get("end_marker", discovery.DEFAULT_END_MARKER),
        )
    if sel.xai:
        payloads["xai"] = xai.export_xai_json(xai.view_from_graph(g))
    return payloads


def render_prompt(
    g: KnowledgeGraph,
    sel: IngredientSelection,
    question: str,
    brevity: bool = False,
) -> PromptBundle:
    """Render the guided prompt from the graph's view layers; never mutates the graph."""
    payloads = view_payloads(g, sel)
    rendered = render_payloads(payloads, sel, question, brevity=brevity)
    digests = {view: hashlib.sha256(text.encode("utf-8")).hexdigest()
               for view, text in payloads.items()}
    return PromptBundle(selection=sel, question=question.strip(),
                        rendered=rendered, ingredient_digests=digests)


# --- clients -------------------------------------------------------------------------


class LlmClient(Protocol):
    def complete(self, body: dict, api_key: str | None) -> dict: ...


class HttpLlmClient:
    """Chat-completions-compatible HTTP client (single user message).

    ``transport`` is forwarded to httpx, so tests can substitute a mock
    transport without touching the network.
    """

    def __init__(self, endpoint_url: str, timeout: float = 60.0,
                 transport: httpx.BaseTransport | None = None):
        self.endpoint_url = endpoint_url
        self.timeout = timeout
        self._transport = transport

    def complete(self, body: dict, api_key: str | None) -> dict:
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            with httpx.Client(timeout=self.timeout, transport=self._transport) as session:
                response = session.post(self.endpoint_url, json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if response.status_code in (401, 403):
            raise AuthFailure(f"endpoint rejected credentials ({response.status_code})")
        if response.status_code == 429:
            retry_after = response.headers.get("Retry-After")
            raise RateLimited(float(retry_after) if retry_after else None)
        if response.status_code >= 400:
            raise TransportError(f"HTTP {response.status_code}: {response.text[:200]}")
        return response.json()


class MockLlmClient:
    """Deterministic scripted client; records every request body for assertions."""

    def __init__(self, script: Sequence[str | dict]):
        self.script = list(script)
        self.requests: list[dict] = []
        self._cursor = 0

    def complete(self, body: dict, api_key: str | None) -> dict:
        self.requests.append(body)
        if self._cursor >= len(self.script):
            raise ScriptExhausted(f"mock script exhausted after {len(self.script)} response(s)")
        entry = self.script[self._cursor]
        self._cursor += 1
        if isinstance(entry, dict):
            status = entry.get("status")
            if status == 429:
                raise RateLimited(entry.get("retry_after"))
            if status in (401, 403):
                raise AuthFailure(f"endpoint rejected credentials ({status})")
            return entry
        return {
            "choices": [{"message": {"role": "assistant", "content": entry}}],
            "usage": {"prompt_tokens": 0, "completion_tokens": len(entry.split()), "total_tokens": 0},
        }


def mock_client(script: Sequence[str | dict]) -> MockLlmClient:
    return MockLlmClient(script)


def ask(bundle: PromptBundle, cfg: LlmConfig, client: LlmClient) -> Explanation:
    """Send the rendered prompt and return the completion verbatim with usage and latency."""
    body: dict = {
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": bundle.rendered}],
    }
    if cfg.temperature is not None:
        body["temperature"] = cfg.temperature
    if cfg.top_p is not None:
        body["top_p"] = cfg.top_p
    if cfg.max_tokens is not None:
        body["max_tokens"] = cfg.max_tokens
    api_key = os.environ.get(cfg.api_key_env) if cfg.api_key_env else None
    if audit_log.isEnabledFor(logging.DEBUG):
        audit_log.debug("request authorization=%s body=%s",
                        "Bearer ***" if api_key else "none", json.dumps(body))
    started = time.perf_counter()
    payload = client.complete(body, api_key)
    latency = time.perf_counter() - started
    if audit_log.isEnabledFor(logging.DEBUG):
        audit_log.debug("response %s", json.dumps(payload))
    choices = payload.get("choices") or []
    text = ""
    if choices:
        text = (choices[0].get("message") or {}).get("content") or ""
    if not text.strip():
        raise ModelRefusal("the endpoint returned an empty completion")
    return Explanation(text=text, usage=dict(payload.get("usage") or {}), latency_s=latency)
