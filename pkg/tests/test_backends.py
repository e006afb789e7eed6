import json

import httpx
import numpy as np
import pytest

from refbench.backends import (
    BackendProfile,
    ChatBackend,
    EmbeddingBackend,
    GrobidBackend,
    HashingEmbedder,
    instruct,
    make_backend,
)
from refbench.errors import AuthError, ConfigError, DimensionMismatch, GrobidError, PdfRejected, ReplayMiss, TransportError
from refbench.replay import ReplayBackend, ReplayStore, replay_key


def chat_profile(**kw):
    return BackendProfile("qwen", "chat_llm", "http://llm.test/v1", backoff=0.0, **kw)


def chat_reply(text):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})


def test_chat_request_shape():
    seen = {}

    def handler(request):
        seen["path"] = request.url.path
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers.get("authorization")
        return chat_reply("[]")

    backend = ChatBackend(chat_profile(), httpx.MockTransport(handler))
    assert backend.complete("hello") == "[]"
    assert seen["path"] == "/v1/chat/completions"
    assert seen["body"]["messages"] == [{"role": "user", "content": "hello"}]
    assert seen["body"]["temperature"] == 0.0 and seen["auth"] is None


def test_api_key_from_environment(monkeypatch):
    monkeypatch.setenv("REFBENCH_QWEN_API_KEY", "sk-test")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        return chat_reply("{}")

    ChatBackend(chat_profile(), httpx.MockTransport(handler)).complete("x")
    assert seen["auth"] == "Bearer sk-test"


def test_secrets_rejected_in_config():
    with pytest.raises(ConfigError, match="REFBENCH_QWEN_API_KEY"):
        BackendProfile.from_dict("qwen", {"kind": "chat_llm", "endpoint": "http://x", "api_key": "sk"})
    assert BackendProfile.from_dict("q", {"kind": "chat_llm", "endpoint": "http://x", "model": "m"}).gen.model_id == "m"


def test_profile_validation():
    with pytest.raises(ConfigError):
        BackendProfile("x", "chat_llm", "not-a-url")
    with pytest.raises(ConfigError):
        BackendProfile("x", "telepathy")


def test_retries_then_succeeds():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(503) if len(calls) < 3 else chat_reply("ok")

    assert ChatBackend(chat_profile(max_attempts=3), httpx.MockTransport(handler)).complete("x") == "ok"
    assert len(calls) == 3


def test_persistent_5xx_is_transport_error():
    backend = ChatBackend(chat_profile(max_attempts=2), httpx.MockTransport(lambda r: httpx.Response(500)))
    with pytest.raises(TransportError):
        backend.complete("x")


def test_unreachable_endpoint_is_transport_error():
    def handler(request):
        raise httpx.ConnectError("connection refused", request=request)

    with pytest.raises(TransportError):
        ChatBackend(chat_profile(max_attempts=2), httpx.MockTransport(handler)).complete("x")


def test_provider_message_preserved():
    msg = "This model's maximum context length is 32768 tokens"
    backend = ChatBackend(chat_profile(), httpx.MockTransport(lambda r: httpx.Response(400, text=msg)))
    with pytest.raises(TransportError, match="maximum context length"):
        backend.complete("x")


def test_auth_error_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401)

    with pytest.raises(AuthError):
        ChatBackend(chat_profile(), httpx.MockTransport(handler)).complete("x")
    assert len(calls) == 1


def grobid_profile():
    return BackendProfile("grobid", "grobid", "http://grobid.test", backoff=0.0, max_attempts=2)


def test_grobid_citation_form():
    seen = {}

    def handler(request):
        seen["path"] = request.url.path
        seen["body"] = request.content.decode()
        return httpx.Response(200, text="<TEI/>")

    GrobidBackend(grobid_profile(), httpx.MockTransport(handler)).parse_citations(["A. 1999.", "B. 2000."])
    assert seen["path"] == "/api/processCitationList"
    assert seen["body"].count("citations=") == 2
    assert "consolidateCitations=0" in seen["body"] and "includeRawCitations=1" in seen["body"]


def test_grobid_errors():
    backend = GrobidBackend(grobid_profile(), httpx.MockTransport(lambda r: httpx.Response(503)))
    with pytest.raises(GrobidError) as info:
        backend.parse_citations(["x"])
    assert info.value.status == 503
    with pytest.raises(ValueError):
        backend.parse_citations([])
    with pytest.raises(PdfRejected):
        backend.process_fulltext(b"")


def test_grobid_fulltext_multipart():
    seen = {}

    def handler(request):
        seen["ctype"] = request.headers["content-type"]
        seen["body"] = request.content
        return httpx.Response(200, text="<TEI/>")

    GrobidBackend(grobid_profile(), httpx.MockTransport(handler)).process_fulltext(b"%PDF-1.4 x")
    assert seen["ctype"].startswith("multipart/form-data")
    assert b'name="input"' in seen["body"] and b"%PDF-1.4 x" in seen["body"]


def test_embedding_backend():
    seen = {}

    def handler(request):
        body = json.loads(request.content)
        seen["input"] = body["input"]
        return httpx.Response(200, json={"data": [{"index": i, "embedding": [3.0, 4.0]} for i in range(len(body["input"]))]})

    profile = BackendProfile("e5", "embedding", "http://emb.test", dim=2, backoff=0.0)
    vectors = EmbeddingBackend(profile, httpx.MockTransport(handler)).embed(["a", "b", "c"], "find refs")
    assert len(vectors) == 3 and np.allclose(vectors[0], [0.6, 0.8])
    assert seen["input"][0] == "Instruct: find refs\nQuery: a"
    profile = BackendProfile("e5", "embedding", "http://emb.test", dim=3, backoff=0.0)
    with pytest.raises(DimensionMismatch):
        EmbeddingBackend(profile, httpx.MockTransport(handler)).embed(["a"])


def test_instruct_convention():
    assert instruct("q", "") == "q"
    assert instruct("q", "task") == "Instruct: task\nQuery: q"


def test_hashing_embedder():
    e = HashingEmbedder(dim=64)
    a, b, c = e.embed(["abc", "abc", "something else"])
    assert np.dot(a, b) == pytest.approx(1.0)
    assert len(c) == 64
    assert np.array_equal(HashingEmbedder(dim=64).embed(["abc"])[0], a)


class Echo:
    name = "echo"

    def __init__(self):
        self.calls = 0

    def complete(self, prompt, gen=None):
        self.calls += 1
        return prompt.upper()

    def embed(self, texts, instruction=""):
        return [np.array([len(t), 1.0]) for t in texts]


def test_replay_record_then_replay(tmp_path):
    store = ReplayStore(tmp_path)
    inner = Echo()
    recorder = ReplayBackend(store, "echo", inner)
    assert recorder.complete("abc") == "ABC"
    np.testing.assert_array_equal(recorder.embed(["xy"], "i")[0], [2.0, 1.0])
    player = ReplayBackend(store, "echo")
    assert player.complete("abc") == "ABC"
    np.testing.assert_array_equal(player.embed(["xy"], "i")[0], [2.0, 1.0])
    with pytest.raises(ReplayMiss) as info:
        player.complete("never recorded")
    assert replay_key("echo", "complete", "never recorded") in str(info.value)


def test_replay_keys_distinct():
    assert replay_key("p", "complete", "a") != replay_key("p", "complete", "b")
    assert replay_key("p", "complete", "a") != replay_key("q", "complete", "a")


def test_make_backend_replay_profiles(tmp_path):
    profiles = {
        "echo": BackendProfile("echo", "chat_llm", "http://llm.test"),
        "rep": BackendProfile("rep", "replay", source="echo"),
    }
    backend = make_backend(profiles["rep"], profiles, tmp_path)
    assert isinstance(backend, ReplayBackend) and backend.inner is None
    with pytest.raises(ConfigError):
        make_backend(profiles["rep"], profiles, None)
