import http.server
import json
import threading

import numpy as np
import pytest

from qembed.providers import (
    API_KEY_ENV,
    AnswerCache,
    AnswerRecord,
    CachedLLM,
    MockEncoder,
    PromptCacheStore,
    ProviderError,
    RemoteLLM,
    ScriptedLLM,
    UnscriptedPromptError,
    prompt_fingerprint,
)


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


class TestMockEncoder:
    def test_rows_are_unit_norm_and_repeatable(self):
        enc = MockEncoder(dim=32, seed=7)
        texts = ["the cat sat on the mat", "a completely different sentence", ""]
        a = enc.encode(texts)
        b = enc.encode(texts)
        assert a.shape == (3, 32)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-12)

    def test_shared_vocabulary_scores_higher_than_disjoint(self):
        enc = MockEncoder(dim=64, seed=7)
        rows = enc.encode([
            "stars and planets orbit in space",
            "planets and stars shine in space",
            "recipes use flour butter and sugar",
        ])
        assert cosine(rows[0], rows[1]) > cosine(rows[0], rows[2])

    def test_seed_changes_vectors(self):
        a = MockEncoder(dim=16, seed=1).encode(["same text"])
        b = MockEncoder(dim=16, seed=2).encode(["same text"])
        assert not np.allclose(a, b)

    def test_fingerprint_mentions_dim_and_seed(self):
        assert MockEncoder(dim=8, seed=3).fingerprint() == "mock-encoder:dim=8:seed=3"


class TestScriptedLLM:
    def test_replays_transcript(self):
        prompt = "Is water wet?"
        llm = ScriptedLLM({prompt_fingerprint(prompt): "1. yes"})
        assert llm.complete(prompt) == "1. yes"
        assert llm.calls == 1

    def test_unknown_prompt_names_nearest_fingerprint(self):
        known = prompt_fingerprint("known prompt")
        llm = ScriptedLLM({known: "ok"})
        with pytest.raises(UnscriptedPromptError) as err:
            llm.complete("never scripted")
        assert known in str(err.value)

    def test_from_file_roundtrip(self, tmp_path):
        path = tmp_path / "transcript.jsonl"
        fp = prompt_fingerprint("p")
        path.write_text(json.dumps({"prompt_fingerprint": fp, "response": "r"}) + "\n")
        assert ScriptedLLM.from_file(path).complete("p") == "r"


class CountingLLM:
    def __init__(self, response="yes"):
        self.calls = 0
        self.response = response

    def complete(self, prompt):
        self.calls += 1
        return self.response


class TestCachedLLM:
    def test_second_identical_prompt_hits_cache(self, tmp_path):
        store = PromptCacheStore(tmp_path / "cache.jsonl")
        inner = CountingLLM()
        llm = CachedLLM(inner, store)
        assert llm.complete("p") == "yes"
        assert llm.complete("p") == "yes"
        assert inner.calls == 1
        assert (llm.hits, llm.misses) == (1, 1)

    def test_cache_persists_across_instances(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        CachedLLM(CountingLLM("first"), PromptCacheStore(path)).complete("p")
        inner = CountingLLM("second")
        llm = CachedLLM(inner, PromptCacheStore(path))
        assert llm.complete("p") == "first"
        assert inner.calls == 0

    def test_last_write_wins_on_reload(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        fp = prompt_fingerprint("p")
        with open(path, "w") as fh:
            fh.write(json.dumps({"prompt_fingerprint": fp, "response": "old"}) + "\n")
            fh.write(json.dumps({"prompt_fingerprint": fp, "response": "new"}) + "\n")
        assert PromptCacheStore(path).get(fp) == "new"


class TestAnswerCache:
    def test_roundtrip_and_overwrite(self, tmp_path):
        path = tmp_path / "answers.jsonl"
        cache = AnswerCache(path)
        cache.put(AnswerRecord(3, "doc-a", 1, "fp1"))
        cache.put(AnswerRecord(3, "doc-a", 0, "fp2"))
        cache.put(AnswerRecord(4, "doc-b", 1, "fp3"))
        reloaded = AnswerCache(path)
        assert reloaded.get(3, "doc-a") == 0
        assert reloaded.get(4, "doc-b") == 1
        assert reloaded.get(9, "doc-a") is None
        assert len(reloaded) == 2

    def test_concurrent_puts_keep_file_parseable(self, tmp_path):
        path = tmp_path / "answers.jsonl"
        cache = AnswerCache(path)

        def work(base):
            for i in range(50):
                cache.put(AnswerRecord(base * 100 + i, f"d{i}", i % 2, "fp"))

        threads = [threading.Thread(target=work, args=(t,)) for t in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(AnswerCache(path)) == 200


class _Handler(http.server.BaseHTTPRequestHandler):
    script: list  # [(status, payload_dict_or_None)]
    seen: list

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).seen.append({"auth": self.headers.get("Authorization"), "body": body})
        status, payload = self.script.pop(0) if self.script else (200, {"completion": "ok"})
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        if payload is not None:
            self.wfile.write(json.dumps(payload).encode())

    def log_message(self, *args):
        pass


@pytest.fixture
def fake_server():
    handlers = _Handler
    handlers.script = []
    handlers.seen = []
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), handlers)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server, handlers
    server.shutdown()
    thread.join()


class TestRemoteLLM:
    def url(self, server):
        return f"http://127.0.0.1:{server.server_address[1]}/v1/complete"

    def test_requires_api_key(self, monkeypatch):
        monkeypatch.delenv(API_KEY_ENV, raising=False)
        with pytest.raises(ProviderError, match=API_KEY_ENV):
            RemoteLLM("http://localhost:1/x", model="m")

    def test_sends_bearer_auth_and_parses_completion(self, fake_server, monkeypatch):
        server, handler = fake_server
        monkeypatch.setenv(API_KEY_ENV, "sekrit")
        handler.script.append((200, {"completion": "1. yes"}))
        llm = RemoteLLM(self.url(server), model="small", sleep=lambda s: None)
        assert llm.complete("Is this a test?") == "1. yes"
        assert handler.seen[0]["auth"] == "Bearer sekrit"
        assert handler.seen[0]["body"] == {"model": "small", "prompt": "Is this a test?"}

    def test_retries_429_and_500_then_succeeds(self, fake_server, monkeypatch):
        server, handler = fake_server
        monkeypatch.setenv(API_KEY_ENV, "k")
        handler.script.extend([(429, None), (500, None), (200, {"completion": "done"})])
        sleeps = []
        llm = RemoteLLM(self.url(server), model="m", sleep=sleeps.append)
        assert llm.complete("p") == "done"
        assert len(handler.seen) == 3
        assert sleeps == [0.5, 1.0]  # exponential backoff

    def test_auth_error_is_fatal_not_retried(self, fake_server, monkeypatch):
        server, handler = fake_server
        monkeypatch.setenv(API_KEY_ENV, "k")
        handler.script.append((401, None))
        llm = RemoteLLM(self.url(server), model="m", sleep=lambda s: None)
        with pytest.raises(ProviderError, match="authentication"):
            llm.complete("p")
        assert len(handler.seen) == 1

    def test_gives_up_after_max_retries(self, fake_server, monkeypatch):
        server, handler = fake_server
        monkeypatch.setenv(API_KEY_ENV, "k")
        handler.script.extend([(503, None)] * 3)
        llm = RemoteLLM(self.url(server), model="m", max_retries=2, sleep=lambda s: None)
        with pytest.raises(ProviderError, match="after 3 attempts"):
            llm.complete("p")
        assert len(handler.seen) == 3
