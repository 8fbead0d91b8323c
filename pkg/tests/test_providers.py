import json
import subprocess
import sys

import httpx
import numpy as np
import pytest

from dialectica.providers import (
    ChatRequest,
    EvidenceItem,
    HashingEmbedder,
    LoggedChat,
    OpenAIChat,
    ProviderConfigError,
    ProviderUnavailable,
    RemoteEmbedder,
    ScriptedChat,
    ScriptedSearch,
    ToolUnavailable,
    WebSearchClient,
    chat,
    chat_from_spec,
    embedder_from_spec,
    normalize_query,
    search_from_spec,
)
from dialectica.common import LogicalClock


def ok_body(text="hello"):
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


def test_scripted_keyed_fixture():
    c = ScriptedChat(lambda r: "fallback", script={("alice", "t", "2", "statement"): "exact fixture"})
    req = ChatRequest.from_prompt("p", agent="alice", topic="t", round=2, phase="statement")
    assert chat(c, req).content == "exact fixture"
    assert chat(c, ChatRequest.from_prompt("p", agent="bob")).content == "fallback"


def test_empty_content_is_an_error():
    with pytest.raises(ProviderUnavailable):
        chat(ScriptedChat(lambda r: "  "), ChatRequest.from_prompt("p"))


def test_request_validation():
    with pytest.raises(ValueError):
        ChatRequest(messages=())
    with pytest.raises(ValueError):
        ChatRequest.from_prompt("p", temperature=-1)


def test_missing_credentials_fail_at_construction(monkeypatch):
    monkeypatch.delenv("DIALECTICA_TEST_KEY", raising=False)
    with pytest.raises(ProviderConfigError, match="DIALECTICA_TEST_KEY"):
        OpenAIChat("m", api_key_env="DIALECTICA_TEST_KEY")
    with pytest.raises(ProviderConfigError):
        chat_from_spec({"type": "openai", "model": "m", "api_key_env": "DIALECTICA_TEST_KEY"})


def test_retries_then_success(monkeypatch, caplog):
    monkeypatch.setenv("DIALECTICA_TEST_KEY", "secret")
    calls = []

    def handler(request):
        calls.append(request)
        if len(calls) <= 2:
            raise httpx.ReadTimeout("timed out", request=request)
        assert request.headers["Authorization"] == "Bearer secret"
        body = json.loads(request.content)
        assert body["seed"] == 4 and body["messages"][0]["content"] == "hi"
        return httpx.Response(200, json=ok_body("done"))

    sleeps = []
    c = OpenAIChat("m", base_url="http://x", api_key_env="DIALECTICA_TEST_KEY", sleep=sleeps.append,
                   transport=httpx.MockTransport(handler))
    with caplog.at_level("WARNING"):
        assert c.complete(ChatRequest.from_prompt("hi", seed=4)).content == "done"
    assert c.retries == 2 and sleeps == [1.0, 2.0]
    assert caplog.text.count("retrying") == 2


def test_retries_exhausted():
    c = OpenAIChat("m", base_url="http://x", api_key_env=None, sleep=lambda s: None, max_attempts=3,
                   transport=httpx.MockTransport(lambda r: httpx.Response(503)))
    with pytest.raises(ProviderUnavailable, match="3 attempts"):
        c.complete(ChatRequest.from_prompt("hi"))


def test_client_errors_do_not_retry():
    n = []

    def handler(r):
        n.append(1)
        return httpx.Response(400, json={"error": "bad"})

    c = OpenAIChat("m", base_url="http://x", api_key_env=None, sleep=lambda s: None,
                   transport=httpx.MockTransport(handler))
    with pytest.raises(ProviderUnavailable):
        c.complete(ChatRequest.from_prompt("hi"))
    assert len(n) == 1


def test_malformed_body():
    c = OpenAIChat("m", base_url="http://x", api_key_env=None,
                   transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"nope": 1})))
    with pytest.raises(ProviderUnavailable, match="malformed"):
        c.complete(ChatRequest.from_prompt("hi"))


def test_logged_chat(tmp_path):
    inner = ScriptedChat(lambda r: "x")
    c = LoggedChat(inner, tmp_path / "log.jsonl", LogicalClock())
    c.complete(ChatRequest.from_prompt("p", phase="statement"))
    rec = json.loads((tmp_path / "log.jsonl").read_text())
    assert rec["ok"] and rec["tags"] == {"phase": "statement"}


# -- embeddings -------------------------------------------------------------------


def test_hashing_identity_and_norm():
    e = HashingEmbedder()
    a, b = e.embed("carbon markets"), e.embed("carbon markets")
    assert abs(float(a @ b) - 1.0) < 1e-9
    assert abs(np.linalg.norm(a) - 1.0) < 1e-12
    with pytest.raises(ValueError):
        e.embed("")


def test_hashing_is_stable_across_processes():
    code = "from dialectica.providers import HashingEmbedder; print(HashingEmbedder().embed('carbon markets').tolist())"
    outs = {subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                           env={"PYTHONHASHSEED": str(seed), "PATH": ""}).stdout for seed in (1, 2)}
    assert len(outs) == 1
    assert json.loads(outs.pop()) == HashingEmbedder().embed("carbon markets").tolist()


def test_hashing_disjoint_tokens_are_orthogonal():
    from dialectica.providers import _bucket
    e = HashingEmbedder()
    words = ["carbon", "markets", "equity", "forest", "tariff", "river", "coal", "solar"]
    left, right = words[:4], words[4:]
    assert not {_bucket(w, e.dim) for w in left} & {_bucket(w, e.dim) for w in right}
    assert float(e.embed(" ".join(left)) @ e.embed(" ".join(right))) == 0.0


def test_remote_embedder_downgrades_once(caplog):
    calls = []

    def handler(r):
        calls.append(r)
        return httpx.Response(500)

    e = RemoteEmbedder("m", "http://x", transport=httpx.MockTransport(handler))
    v1 = e.embed("carbon")
    v2 = e.embed("carbon")
    assert e.downgraded and len(calls) == 1
    assert np.allclose(v1, HashingEmbedder().embed("carbon")) and np.allclose(v1, v2)


def test_remote_embedder_success():
    vec = list(range(1, 385))
    e = RemoteEmbedder("m", "http://x", transport=httpx.MockTransport(
        lambda r: httpx.Response(200, json={"data": [{"embedding": vec}]})))
    v = e.embed("x")
    assert not e.downgraded and abs(np.linalg.norm(v) - 1) < 1e-12


# -- web search -------------------------------------------------------------------------


def test_second_identical_query_hits_cache(tmp_path):
    calls = []
    backend = ScriptedSearch(lambda q: calls.append(q) or f"summary of {q}")
    w = WebSearchClient(backend, tmp_path / "cache.jsonl", year=2025)
    a = w.search("Carbon  Border Tax", "economics")
    b = w.search("carbon border tax", "Economics")
    assert len(calls) == 1 and w.remote_calls == 1
    assert a[0].content == b[0].content and b[0].provenance.startswith("cache:")
    # a fresh client reloads the cache from disk
    w2 = WebSearchClient(backend, tmp_path / "cache.jsonl", year=2025)
    w2.search("carbon border tax", "economics")
    assert len(calls) == 1


def test_enrichment():
    w = WebSearchClient(ScriptedSearch(), year=2031)
    assert w.enrich("q", "energy") == "q (context: energy) recent evidence 2031"
    assert normalize_query("  A  b ") == "a b"


def test_fixture_summary_stored_verbatim():
    w = WebSearchClient(ScriptedSearch(lambda q: "## Findings\n- item [1]"), year=2025)
    (item,) = w.search("q")
    assert item.content == "## Findings\n- item [1]" and item.source == "web"


def test_disabled_search_is_unavailable():
    w = WebSearchClient(ScriptedSearch(), enabled=False, year=2025)
    with pytest.raises(ToolUnavailable):
        w.search("q")


def test_search_failure_yields_no_evidence():
    def boom(q):
        raise RuntimeError("down")

    w = WebSearchClient(ScriptedSearch(boom), year=2025)
    assert w.search("q") == [] and "down" in w.last_error


def test_evidence_item_validation():
    with pytest.raises(ValueError):
        EvidenceItem("rumour", "q", "c", 0.0, "p")
    with pytest.raises(ValueError):
        EvidenceItem("web", "q", "", 0.0, "p")
    item = EvidenceItem("memory", "q", "c", 1.0, "p")
    assert EvidenceItem.from_dict(item.to_dict()) == item


def test_spec_factories():
    assert chat_from_spec(None).provider_id == "scripted"
    assert chat_from_spec({"type": "scripted_judge", "favor": "mem"}).provider_id == "scripted-judge"
    assert isinstance(embedder_from_spec({"type": "hashing", "dim": 32}), HashingEmbedder)
    assert isinstance(search_from_spec(None), ScriptedSearch)
    for f in (chat_from_spec, embedder_from_spec, search_from_spec):
        with pytest.raises(ProviderConfigError):
            f({"type": "carrier-pigeon"})
