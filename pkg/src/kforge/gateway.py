"""Uniform LLM access for every pipeline stage.

Provides the request/retry contract, a token-bucket rate limiter with an
in-flight cap, a fully deterministic mock backend (the basis of all golden
tests), a replay backend for scripted fixtures, and a generic HTTP backend
speaking the common chat-completions wire shape.
"""
from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field

import requests

from kforge import jsonx
from kforge.errors import BackendError, KforgeError, MalformedOutput, ValidationError
from kforge.prompts import JSON_LIST, JSON_OBJECT, REGISTRY, PromptTemplate, render_prompt
from kforge.textnorm import distinct_content_words, tokenize

logger = logging.getLogger(__name__)

REASK_SUFFIX = "\nReturn only valid JSON."


@dataclass(frozen=True)
class LlmRequest:
    template_id: str
    bindings: dict
    image_uris: tuple[str, ...] = ()
    temperature: float = 0.0
    max_output_tokens: int = 1024


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base: float = 0.5
    backoff_factor: float = 2.0
    reask_on_malformed: bool = True

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


class TokenBucket:
    """Blocking token bucket; ``rate`` is requests per second, None disables it."""

    def __init__(self, rate: float | None, burst: int | None = None):
        self.rate = rate
        self.capacity = float(burst if burst is not None else max(1, int(rate or 1)))
        self.tokens = self.capacity
        self.updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate is None:
            return
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            time.sleep(wait)


# ---------------------------------------------------------------------------
# Mock backend
#
# Output is a deterministic function of (template_id, rendered prompt,
# bindings): choice points are driven by the SHA-256 digest of the prompt,
# content comes from the bound values. Identical requests give identical
# text, in any process.
# ---------------------------------------------------------------------------

MOCK_THEMES = [
    "nature and environment", "people and society", "virtual and art",
    "academic problem", "knowledge introduction", "screenshot or interface",
]
MOCK_DOMAINS = [
    "natural science", "business and economics", "education and training",
    "history and culture", "information technology", "sports and recreation",
]
MOCK_SUBCATS = [
    "coastal landforms", "technology company introduction",
    "quadratic function evaluation", "renaissance painting",
    "street food culture", "mountain wildlife", "home cooking dishes",
    "city transit maps",
]
MOCK_OBJECTS = [
    "lighthouse", "bridge", "market stall", "notebook", "bicycle", "kettle",
    "mural", "staircase", "greenhouse", "fountain", "locomotive", "telescope",
    "drumkit", "bookshelf", "sailboat", "windmill",
]
MOCK_CONCEPTS = [
    "erosion", "symmetry", "migration", "fermentation", "navigation",
    "commerce", "perspective", "insulation",
]
MOCK_ROLES = ["education", "reference", "entertainment", "documentation"]
MOCK_KEYS = [
    "red roof", "stone arch", "double mast", "tiled floor", "spiral stair",
    "iron gate", "glass dome", "wooden deck", "brass bell", "rope ladder",
    "copper pipe", "slate path", "round window", "carved door", "clay pot",
    "steel frame", "woven basket", "painted sign", "marble column",
    "canvas awning", "pebble wall", "reed fence", "chalk line", "velvet rope",
]
MOCK_SURFACE = [
    "warm lighting", "slight blur", "pale background", "high angle",
    "faded colors", "narrow margin", "heavy vignette", "grainy texture",
]
MOCK_ADJECTIVES = [
    "weathered", "narrow", "polished", "crooked", "sunlit", "quiet",
    "ornate", "sturdy", "slender", "faded", "angular", "broad",
]

_DETAIL_QUESTIONS = [
    "What object does the description explicitly mention",
    "Which element appears in the scene",
    "What detail is stated in the description",
    "Which item is noted in the image",
]


def _digest(prompt: str) -> bytes:
    return hashlib.sha256(prompt.encode("utf-8")).digest()


def _pick_distinct(pool: list[str], digest: bytes, salt: int, k: int) -> list[str]:
    """k distinct pool entries chosen by successive digest bytes."""
    out: list[str] = []
    i = salt
    while len(out) < k and len(out) < len(pool):
        item = pool[digest[i % len(digest)] % len(pool)]
        if item not in out:
            out.append(item)
        i += 1
        if i > salt + 4 * len(pool):
            for item in pool:
                if item not in out:
                    out.append(item)
                    break
    return out


class MockBackend:
    """Deterministic offline backend; see module notes."""

    name = "mock"

    def complete(self, request: LlmRequest, prompt: str) -> str:
        d = _digest(prompt)
        handler = getattr(self, "_" + request.template_id, None)
        if handler is None:
            raise ValidationError("template_id", f"mock backend has no handler for {request.template_id!r}")
        return handler(d, request.bindings)

    def _single_caption(self, d: bytes, bindings: dict) -> str:
        adj = _pick_distinct(MOCK_ADJECTIVES, d, 0, 2)
        objs = _pick_distinct(MOCK_OBJECTS, d, 2, 3)
        keys = _pick_distinct(MOCK_KEYS, d, 5, 2)
        return (
            f"A {adj[0]} {objs[0]} stands beside a {adj[1]} {objs[1]}, "
            f"with a {keys[0]} and a {keys[1]} clearly visible, "
            f"while a {objs[2]} occupies the background."
        )

    def _caption_to_vqa(self, d: bytes, bindings: dict) -> str:
        cap = str(bindings.get("cap", ""))
        words = cap.split() or ["item"]
        content = distinct_content_words(cap) or tokenize(cap) or ["item"]
        n = 5 + d[0] % 11

        answer_words: list[str] = []
        for w in words:
            answer_words.append(w)
            if len(" ".join(answer_words)) >= 0.35 * len(cap):
                break
        global_answer = " ".join(answer_words)
        items = [{
            "question": "What kind of scene does this image show overall?",
            "answer": global_answer,
        }]
        for i in range(1, n):
            word = content[d[(i * 2) % len(d)] % len(content)]
            stem = _DETAIL_QUESTIONS[i % len(_DETAIL_QUESTIONS)]
            items.append({"question": f"{stem} (detail {i})?", "answer": word})
        return json.dumps(items, ensure_ascii=False)

    def _hier_semantic(self, d: bytes, bindings: dict) -> str:
        inner = {
            "type_theme": MOCK_THEMES[d[1] % len(MOCK_THEMES)],
            "domain_direction": MOCK_DOMAINS[d[2] % len(MOCK_DOMAINS)],
            "semantic_subcategory": MOCK_SUBCATS[d[3] % len(MOCK_SUBCATS)],
            "core_objects": _pick_distinct(MOCK_OBJECTS, d, 4, 2 + d[4] % 2),
            "core_concepts": _pick_distinct(MOCK_CONCEPTS, d, 7, 2 + d[5] % 2),
            "function_or_role": MOCK_ROLES[d[6] % len(MOCK_ROLES)],
            "distinguishing_key_information": _pick_distinct(MOCK_KEYS, d, 10, 3),
            "low_value_surface_information": _pick_distinct(MOCK_SURFACE, d, 14, 2),
        }
        return json.dumps({"hierarchical_semantic_information": inner}, ensure_ascii=False)

    def _pair_caption(self, d: bytes, bindings: dict) -> str:
        return (
            f"Both images concern {bindings['shared']}. "
            f"One shows {bindings['left']}. "
            f"The other shows {bindings['right']}. "
            f"They differ in {bindings['differing']}."
        )

    def _pair_filter(self, d: bytes, bindings: dict) -> str:
        if d[0] % 2 == 0:
            return "PASS: the images share one clear theme and differ in concrete, explainable details."
        return "FAIL: the relationship between the images is incidental and hard to explain simply."

    def _knowledge_extract(self, d: bytes, bindings: dict) -> str:
        toks = distinct_content_words(str(bindings.get("text", "")))
        facts = [{"fact": t, "level": "L1"} for t in toks[0::2]]
        abstracts = toks[1::2]
        return json.dumps({"Fact": facts, "Abstract": abstracts}, ensure_ascii=False)

    def _interleave(self, d: bytes, bindings: dict) -> str:
        lines = [ln for ln in str(bindings.get("group", "")).splitlines() if ln.strip()]
        n = max(1, len(lines))
        objs = _pick_distinct(MOCK_OBJECTS, d, 0, 3)
        concepts = _pick_distinct(MOCK_CONCEPTS, d, 3, 2)
        paragraphs = [
            f"This group of scenes traces a single theme of {concepts[0]} "
            f"through {n} closely related views."
        ]
        for k in range(1, n + 1):
            key = MOCK_KEYS[d[(k * 3) % len(d)] % len(MOCK_KEYS)]
            paragraphs.append(
                f"View {k} centers on a {objs[k % len(objs)]} marked by a {key}, "
                f"extending the shared thread of {concepts[k % len(concepts)]}. <Image_{k}>"
            )
        paragraphs.append(
            f"Taken together, the views show how {concepts[0]} connects each scene to the next."
        )
        return "\n\n".join(paragraphs)


class ReplayBackend:
    """Serves scripted outputs in order; entries may be exceptions to raise."""

    name = "replay"

    def __init__(self, outputs: list):
        self.outputs = list(outputs)
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, request: LlmRequest, prompt: str) -> str:
        with self._lock:
            if not self.outputs:
                raise BackendError("http_status", 500, "replay script exhausted")
            self.calls += 1
            item = self.outputs.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


class HttpBackend:
    """Minimal chat-completions client.

    Sends ``POST endpoint`` with ``{"model", "messages", "temperature",
    "max_tokens"}`` where messages is a single user turn; image URIs ride
    as ``image_url`` content parts. Reads the reply from
    ``choices[0].message.content``.
    """

    def __init__(self, endpoint: str, model: str, api_key: str | None = None,
                 timeout: float = 60.0, session: requests.Session | None = None):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.session = session or requests.Session()
        self.name = f"http:{model}"

    def complete(self, request: LlmRequest, prompt: str) -> str:
        if request.image_uris:
            content: object = [{"type": "text", "text": prompt}] + [
                {"type": "image_url", "image_url": {"url": uri}}
                for uri in request.image_uris
            ]
        else:
            content = prompt
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self.session.post(self.endpoint, json=body, headers=headers,
                                     timeout=self.timeout)
        except requests.Timeout as exc:
            raise BackendError("timeout", message=str(exc)) from exc
        except requests.RequestException as exc:
            raise BackendError("http_status", message=str(exc)) from exc
        if resp.status_code == 429:
            raise BackendError("rate_limited", 429)
        if resp.status_code >= 400:
            raise BackendError("http_status", resp.status_code)
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError("http_status", resp.status_code,
                               f"unexpected response shape: {exc}") from exc


_RETRYABLE = ("timeout", "rate_limited")


@dataclass
class GatewayStats:
    llm_calls: int = 0
    retries: int = 0
    reasks: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def bump(self, name: str, by: int = 1) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + by)

    def snapshot(self) -> dict:
        with self._lock:
            return {"llm_calls": self.llm_calls, "retries": self.retries,
                    "reasks": self.reasks}


class Gateway:
    """Thread-safe front door to one backend.

    Applies the retry policy to transport failures, enforces the in-flight
    cap and rate limit, and, for templates that must return JSON, performs
    the single re-ask on malformed output before failing.
    """

    def __init__(self, backend, retry: RetryPolicy | None = None,
                 rps: float | None = None, in_flight: int = 8,
                 sleep=time.sleep):
        self.backend = backend
        self.retry = retry or RetryPolicy()
        self.bucket = TokenBucket(rps)
        self.semaphore = threading.BoundedSemaphore(in_flight)
        self.stats = GatewayStats()
        self._sleep = sleep

    @property
    def backend_id(self) -> str:
        return getattr(self.backend, "name", type(self.backend).__name__)

    def _template(self, request: LlmRequest) -> PromptTemplate:
        template = REGISTRY.get(request.template_id)
        if template is None:
            raise ValidationError("template_id", f"unknown template {request.template_id!r}")
        lo, hi = template.image_arity
        n = len(request.image_uris)
        if n < lo or (hi is not None and n > hi):
            if hi == lo:
                bound = str(lo)
            elif hi is None:
                bound = f"{lo} or more"
            else:
                bound = f"{lo}..{hi}"
            raise ValidationError(
                "image_uris",
                f"template {request.template_id} requires {bound} images, got {n}")
        if request.temperature < 0:
            raise ValidationError("temperature", "must be >= 0")
        return template

    def _attempt(self, request: LlmRequest, prompt: str) -> str:
        last: BackendError | None = None
        for attempt in range(self.retry.max_attempts):
            if attempt:
                self.stats.bump("retries")
                self._sleep(self.retry.backoff_base * self.retry.backoff_factor ** (attempt - 1))
            self.bucket.acquire()
            with self.semaphore:
                self.stats.bump("llm_calls")
                try:
                    return self.backend.complete(request, prompt)
                except BackendError as exc:
                    retryable = exc.kind in _RETRYABLE or (
                        exc.kind == "http_status" and (exc.status or 0) >= 500)
                    last = exc
                    if not retryable:
                        raise
                    logger.debug("backend failure (attempt %d): %s", attempt + 1, exc)
        assert last is not None
        raise last

    def complete(self, request: LlmRequest) -> str:
        """Run one request, returning raw text that honors the template contract."""
        template = self._template(request)
        prompt = render_prompt(template, request.bindings)
        text = self._attempt(request, prompt)
        if template.expected_output in (JSON_LIST, JSON_OBJECT) and self.retry.reask_on_malformed:
            try:
                jsonx.extract_json(text, template.expected_output)
                return text
            except KforgeError:
                pass
            self.stats.bump("reasks")
            text = self._attempt(request, prompt + REASK_SUFFIX)
            try:
                jsonx.extract_json(text, template.expected_output)
            except KforgeError as exc:
                raise MalformedOutput(
                    f"{request.template_id}: output not valid {template.expected_output} after re-ask") from exc
        return text

    def complete_json(self, request: LlmRequest):
        """complete() plus JSON extraction for structured templates."""
        template = self._template(request)
        if template.expected_output not in (JSON_LIST, JSON_OBJECT):
            raise ValidationError("template_id", f"{request.template_id} is not a JSON template")
        return jsonx.extract_json(self.complete(request), template.expected_output)

    def reask(self, request: LlmRequest, suffix: str) -> str:
        """One follow-up attempt with extra instructions appended to the prompt."""
        template = self._template(request)
        prompt = render_prompt(template, request.bindings) + suffix
        self.stats.bump("reasks")
        return self._attempt(request, prompt)


def mock_gateway(**kwargs) -> Gateway:
    """Gateway over the deterministic mock backend (tests, offline runs)."""
    return Gateway(MockBackend(), **kwargs)
