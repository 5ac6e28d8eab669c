from pathlib import Path

import pytest

from saxkit import promptsynth
from saxkit.errors import (
    AuthFailure,
    EmptyQuestion,
    ModelRefusal,
    RateLimited,
    ScriptExhausted,
    ViewAbsent,
)
from saxkit.promptsynth import (
    Explanation,
    IngredientSelection,
    LlmConfig,
    ask,
    mock_client,
    render_payloads,
    render_prompt,
)

GOLDEN = Path(__file__).parent / "golden"

FAKE_PAYLOADS = {
    "process": "<<PROCESS-PAYLOAD>>",
    "causal": "<<CAUSAL-PAYLOAD>>",
    "xai": "<<XAI-PAYLOAD>>",
}

COMBOS = {
    "prompt_xai_only.txt": IngredientSelection(xai=True),
    "prompt_process_xai.txt": IngredientSelection(process=True, xai=True),
    "prompt_all.txt": IngredientSelection(process=True, causal=True, xai=True),
    "prompt_process_only.txt": IngredientSelection(process=True),
    "prompt_process_causal.txt": IngredientSelection(process=True, causal=True),
}


def test_selection_requires_one_ingredient():
    with pytest.raises(ValueError):
        IngredientSelection()


@pytest.mark.parametrize("golden_name,selection", COMBOS.items(), ids=list(COMBOS))
def test_templates_match_goldens(golden_name, selection):
    rendered = render_payloads(FAKE_PAYLOADS, selection, "<<QUESTION>>")
    assert rendered == (GOLDEN / golden_name).read_text(encoding="utf-8")


def test_all_three_fixed_section_order():
    text = render_payloads(FAKE_PAYLOADS, IngredientSelection(True, True, True), "q")
    p = text.index("PROCESS VIEW:")
    c = text.index("CAUSAL VIEW:")
    x = text.index("XAI VIEW:")
    s = text.index("The above text includes three perspectives")
    q = text.index("QUESTION:")
    assert p < c < x < s < q
    assert "[process view], [causal view], and [XAI view]" in text


def test_unselected_views_never_leak():
    text = render_payloads(FAKE_PAYLOADS, IngredientSelection(process=True), "q")
    assert "<<CAUSAL-PAYLOAD>>" not in text
    assert "<<XAI-PAYLOAD>>" not in text
    assert "CAUSAL VIEW" not in text
    assert "XAI VIEW" not in text
    assert "[causal view]" not in text


def test_empty_question_rejected():
    with pytest.raises(EmptyQuestion):
        render_payloads(FAKE_PAYLOADS, IngredientSelection(process=True), "   ")


def test_brevity_suffix_behind_flag():
    plain = render_payloads(FAKE_PAYLOADS, IngredientSelection(process=True), "q")
    brief = render_payloads(FAKE_PAYLOADS, IngredientSelection(process=True), "q", brevity=True)
    assert "not longer than 2-3 sentences" in brief
    assert "not longer than 2-3 sentences" not in plain


def test_render_prompt_from_graph(parking_graph):
    bundle = render_prompt(parking_graph, IngredientSelection(process=True), "why late?")
    assert "PROCESS VIEW:" in bundle.rendered
    assert "('EVENT 1 START', 'verify disabled parking permit'): 1000" in bundle.rendered
    assert set(bundle.ingredient_digests) == {"process"}


def test_render_prompt_digest_stability(parking_graph):
    a = render_prompt(parking_graph, IngredientSelection(process=True), "why late?")
    b = render_prompt(parking_graph, IngredientSelection(process=True), "why late?")
    assert a.ingredient_digests == b.ingredient_digests
    assert a.rendered == b.rendered


def test_render_prompt_never_mutates_graph(parking_graph):
    before = parking_graph.to_ndjson()
    render_prompt(parking_graph, IngredientSelection(process=True), "why late?")
    assert parking_graph.to_ndjson() == before


def test_render_prompt_view_absent(parking_graph):
    with pytest.raises(ViewAbsent):
        render_prompt(parking_graph, IngredientSelection(process=True, xai=True), "q")


def _bundle(text="PROMPT BODY\nQUESTION: why?"):
    return promptsynth.PromptBundle(
        selection=IngredientSelection(process=True),
        question="why?", rendered=text, ingredient_digests={})


def test_mock_client_echoes_and_records():
    client = mock_client(["the QUESTION was answered"])
    explanation = ask(_bundle(), LlmConfig(), client)
    assert "QUESTION" in explanation.text
    assert len(client.requests) == 1
    assert client.requests[0]["messages"][0]["content"] == _bundle().rendered


def test_mock_script_exhausted():
    client = mock_client([])
    with pytest.raises(ScriptExhausted):
        ask(_bundle(), LlmConfig(), client)


def test_mock_rate_limited():
    client = mock_client([{"status": 429, "retry_after": 7.0}])
    with pytest.raises(RateLimited) as excinfo:
        ask(_bundle(), LlmConfig(), client)
    assert excinfo.value.retry_after == 7.0


def test_mock_auth_failure():
    client = mock_client([{"status": 401}])
    with pytest.raises(AuthFailure):
        ask(_bundle(), LlmConfig(), client)


def test_empty_completion_is_refusal():
    client = mock_client([""])
    with pytest.raises(ModelRefusal):
        ask(_bundle(), LlmConfig(), client)


def test_request_carries_exactly_config_sampling():
    client = mock_client(["ok", "ok"])
    ask(_bundle(), LlmConfig(model_name="m", temperature=0.3, top_p=0.9, max_tokens=64), client)
    body = client.requests[0]
    assert body["model"] == "m"
    assert body["temperature"] == 0.3
    assert body["top_p"] == 0.9
    assert body["max_tokens"] == 64
    ask(_bundle(), LlmConfig(model_name="m"), client)
    defaults_body = client.requests[1]
    assert "temperature" not in defaults_body
    assert "top_p" not in defaults_body
    assert "max_tokens" not in defaults_body


def test_llm_config_ranges():
    with pytest.raises(ValueError):
        LlmConfig(temperature=3.0)
    with pytest.raises(ValueError):
        LlmConfig(top_p=0.0)
    with pytest.raises(ValueError):
        LlmConfig(max_tokens=0)


def test_recorded_fixture_client_completes_pipeline():
    from importlib import resources
    canned = resources.files("saxkit.fixtures").joinpath("mock_explanation.txt") \
        .read_text(encoding="utf-8").strip()
    client = mock_client([canned])
    explanation = ask(_bundle(), LlmConfig(), client)
    assert isinstance(explanation, Explanation)
    assert "tow truck" in explanation.text
    assert explanation.usage["completion_tokens"] > 0


# --- HTTP client against a mock transport ---------------------------------------


def _http_client(handler):
    import httpx
    from saxkit.promptsynth import HttpLlmClient
    return HttpLlmClient("https://llm.test/v1/chat/completions",
                         transport=httpx.MockTransport(handler))


def test_http_client_success_and_auth_header(monkeypatch):
    import httpx
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("Authorization")
        seen["body"] = request.content
        return httpx.Response(200, json={
            "choices": [{"message": {"content": "fine"}}],
            "usage": {"total_tokens": 5},
        })

    monkeypatch.setenv("SAX_LLM_API_KEY", "sk-test")
    explanation = ask(_bundle(), LlmConfig(), _http_client(handler))
    assert explanation.text == "fine"
    assert explanation.usage == {"total_tokens": 5}
    assert seen["auth"] == "Bearer sk-test"


def test_http_client_auth_failure():
    import httpx
    client = _http_client(lambda request: httpx.Response(401, json={}))
    with pytest.raises(AuthFailure):
        ask(_bundle(), LlmConfig(), client)


def test_http_client_rate_limited_retry_after():
    import httpx
    client = _http_client(
        lambda request: httpx.Response(429, headers={"Retry-After": "12"}, json={}))
    with pytest.raises(RateLimited) as excinfo:
        ask(_bundle(), LlmConfig(), client)
    assert excinfo.value.retry_after == 12.0


def test_http_client_transport_error():
    import httpx
    from saxkit.errors import TransportError

    def handler(request):
        raise httpx.ConnectError("refused")

    with pytest.raises(TransportError):
        ask(_bundle(), LlmConfig(), _http_client(handler))


def test_audit_log_redacts_api_key(monkeypatch, caplog):
    import logging
    monkeypatch.setenv("SAX_LLM_API_KEY", "sk-secret-value")
    client = mock_client(["done"])
    with caplog.at_level(logging.DEBUG, logger="saxkit.llm.audit"):
        ask(_bundle(), LlmConfig(), client)
    audit = "\n".join(r.message for r in caplog.records if "audit" in r.name)
    assert "sk-secret-value" not in audit
    assert "Bearer ***" in audit
    assert "PROMPT BODY" in audit  # request body is recorded
