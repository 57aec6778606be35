"""Encoder and LLM providers: deterministic mocks, prompt/answer caches, remote client.

Every LLM call is addressed by a prompt fingerprint (SHA-256 of the prompt text)
so transcripts can be replayed and caches survive provider swaps.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

logger = logging.getLogger(__name__)

API_KEY_ENV = "QEMBED_API_KEY"


class ProviderError(RuntimeError):
    """Raised when a provider cannot produce a completion or embedding."""


class UnscriptedPromptError(ProviderError):
    """A scripted provider was asked a prompt outside its transcript."""

    def __init__(self, fingerprint: str, known: list[str]):
        nearest = _nearest_fingerprint(fingerprint, known)
        msg = f"no scripted response for prompt fingerprint {fingerprint}"
        if nearest:
            msg += f" (nearest known: {nearest})"
        super().__init__(msg)
        self.fingerprint = fingerprint


def prompt_fingerprint(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def _nearest_fingerprint(fp: str, known: list[str]) -> str | None:
    """Longest common hex prefix, ties by lexical order; debugging aid only."""
    best, best_len = None, -1
    for k in sorted(known):
        n = 0
        for a, b in zip(fp, k):
            if a != b:
                break
            n += 1
        if n > best_len:
            best, best_len = k, n
    return best


class Encoder(Protocol):
    dim: int

    def encode(self, texts: list[str]) -> np.ndarray: ...

    def fingerprint(self) -> str: ...


class LLMProvider(Protocol):
    def complete(self, prompt: str) -> str: ...


class MockEncoder:
    """Deterministic stand-in for a sentence encoder.

    Each whitespace token maps to a fixed Gaussian vector drawn from a stream
    seeded by the token's hash; a text embeds as the normalized token sum, so
    texts sharing vocabulary land near each other. Cheap, stable across
    processes, good enough for clustering and probing at desk scale.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise ValueError("encoder dim must be positive")
        self.dim = dim
        self.seed = seed

    def _token_vector(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(f"{self.seed}:{token}".encode("utf-8"), digest_size=8).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
        return rng.standard_normal(self.dim)

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            tokens = text.lower().split()
            if tokens:
                vec = np.zeros(self.dim)
                for tok in tokens:
                    vec += self._token_vector(tok)
            else:
                vec = self._token_vector(f"<empty:{text!r}>")
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                vec = self._token_vector("<zero>")
                norm = float(np.linalg.norm(vec))
            out[i] = vec / norm
        return out

    def fingerprint(self) -> str:
        return f"mock-encoder:dim={self.dim}:seed={self.seed}"


class ScriptedLLM:
    """Replays a frozen transcript of prompt fingerprint -> response.

    Any prompt outside the transcript raises, naming the nearest known
    fingerprint so a stale transcript is easy to diagnose.
    """

    def __init__(self, transcript: dict[str, str]):
        self.transcript = dict(transcript)
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedLLM":
        transcript = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            transcript[record["prompt_fingerprint"]] = record["response"]
        return cls(transcript)

    def complete(self, prompt: str) -> str:
        self.calls += 1
        fp = prompt_fingerprint(prompt)
        if fp not in self.transcript:
            raise UnscriptedPromptError(fp, list(self.transcript))
        return self.transcript[fp]


class PromptCacheStore:
    """Append-only json-lines store of {prompt_fingerprint, response} records.

    Later records win on fingerprint collision (a re-run with a corrected
    response overrides silently). Appends take a lock so concurrent answer
    collection threads never interleave partial lines.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                record = json.loads(line)
                self._entries[record["prompt_fingerprint"]] = record["response"]

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, fingerprint: str) -> str | None:
        return self._entries.get(fingerprint)

    def put(self, fingerprint: str, response: str) -> None:
        line = json.dumps({"prompt_fingerprint": fingerprint, "response": response},
                          ensure_ascii=False)
        with self._lock:
            self._entries[fingerprint] = response
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


class CachedLLM:
    """Wraps a provider with a persistent prompt cache; hits never reach the inner provider."""

    def __init__(self, inner: LLMProvider, store: PromptCacheStore):
        self.inner = inner
        self.store = store
        self.hits = 0
        self.misses = 0

    def complete(self, prompt: str) -> str:
        fp = prompt_fingerprint(prompt)
        cached = self.store.get(fp)
        if cached is not None:
            self.hits += 1
            return cached
        self.misses += 1
        response = self.inner.complete(prompt)
        self.store.put(fp, response)
        return response


@dataclass(frozen=True)
class AnswerRecord:
    question_id: int
    document_id: str
    answer: int  # 1 yes, 0 no
    prompt_fingerprint: str


class AnswerCache:
    """Persistent (question_id, document_id) -> yes/no answer store.

    Json-lines on disk, last write wins, append is locked for thread safety.
    Distinct from the prompt cache: answers survive re-batching, where prompt
    fingerprints change whenever a question lands in a different chunk.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[tuple[int, str], int] = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                record = json.loads(line)
                self._entries[(int(record["question_id"]), record["document_id"])] = \
                    int(record["answer"])

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, question_id: int, document_id: str) -> int | None:
        return self._entries.get((question_id, document_id))

    def put(self, record: AnswerRecord) -> None:
        line = json.dumps({
            "question_id": record.question_id,
            "document_id": record.document_id,
            "answer": record.answer,
            "prompt_fingerprint": record.prompt_fingerprint,
        })
        with self._lock:
            self._entries[(record.question_id, record.document_id)] = record.answer
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def items(self) -> list[tuple[int, str, int]]:
        return [(q, d, a) for (q, d), a in sorted(self._entries.items())]


class RemoteLLM:
    """Minimal JSON-over-HTTP completion client.

    POSTs {"model", "prompt"} and expects {"completion": "..."} back. Retries
    429 and 5xx responses with exponential backoff, fails fast on auth errors,
    and bounds concurrent requests with a semaphore. The API key comes from
    the QEMBED_API_KEY environment variable.
    """

    def __init__(self, endpoint: str, model: str, max_parallel: int = 4,
                 max_retries: int = 5, backoff_base: float = 0.5,
                 timeout: float = 60.0, sleep=time.sleep):
        if max_parallel < 1:
            raise ValueError("max_parallel must be at least 1")
        self.endpoint = endpoint
        self.model = model
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.timeout = timeout
        self._sleep = sleep
        self._semaphore = threading.Semaphore(max_parallel)
        key = os.environ.get(API_KEY_ENV)
        if not key:
            raise ProviderError(f"missing API key: set {API_KEY_ENV}")
        self._key = key

    def complete(self, prompt: str) -> str:
        body = json.dumps({"model": self.model, "prompt": prompt}).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint, data=body, method="POST",
            headers={"Content-Type": "application/json",
                     "Authorization": f"Bearer {self._key}"})
        last_error: Exception | None = None
        with self._semaphore:
            for attempt in range(self.max_retries + 1):
                if attempt:
                    self._sleep(self.backoff_base * 2 ** (attempt - 1))
                try:
                    with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                        payload = json.loads(resp.read().decode("utf-8"))
                except urllib.error.HTTPError as exc:
                    if exc.code in (401, 403):
                        raise ProviderError(f"authentication rejected ({exc.code})") from exc
                    if exc.code == 429 or exc.code >= 500:
                        last_error = exc
                        logger.warning("remote LLM returned %d, retrying", exc.code)
                        continue
                    raise ProviderError(f"remote LLM error {exc.code}") from exc
                except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
                    last_error = exc
                    logger.warning("remote LLM request failed (%s), retrying", exc)
                    continue
                if "completion" not in payload:
                    raise ProviderError("remote LLM response missing completion field")
                return str(payload["completion"])
        raise ProviderError(f"remote LLM failed after {self.max_retries + 1} attempts: "
                            f"{last_error}")
