"""Translation backends behind one dispatch contract, with a response
cache keyed on prompt content.

Three kinds are supported:

* ``chat_http``: a minimal JSON chat-completion call over HTTP; the
  answer text is pulled out of the response with a configurable dotted
  path, so either commercial provider shape fits without vendor code.
* ``replay``: answers from a previous run's JSONL, keyed by prompt
  hash; byte-identical, offline, errors on unknown prompts.
* ``mock_rule``: deterministic local transform of the segment text,
  for tests and dry pipelines.

The cache stores the provider's raw text; output post-processing (one
surrounding whitespace run and one echoed quote pair, on by default) is
applied when the record is built, so flipping the flag never poisons
cached data.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import time
import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import requests

from .corpus import Segment, TranslationRecord
from .errors import ConfigurationError, ProviderError, TermweaveError, TransportError
from .glossary import Glossary
from .prompting import DIGEST_ALGORITHM, PromptSpec, PromptTemplate, build_prompt
from .retrieval import Retriever

log = logging.getLogger(__name__)

BACKEND_KINDS = ("chat_http", "replay", "mock_rule")

# Quote pairs a chat model may echo around its answer.
_QUOTE_PAIRS = [('"', '"'), ("'", "'"), ("“", "”"), ("«", "»")]


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base: float = 0.5


@dataclass(frozen=True)
class BackendConfig:
    backend_kind: str
    endpoint_url: str | None = None
    model_name: str | None = None
    temperature: float = 1.0
    credential_env_var: str | None = None
    max_parallel: int = 4
    timeout: float = 30.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    response_path: str = "choices.0.message.content"
    replay_path: str | None = None
    rule: str = "identity"
    replacements: dict = field(default_factory=dict)
    strip_wrappers: bool = True

    def __post_init__(self):
        if self.backend_kind not in BACKEND_KINDS:
            raise ConfigurationError(
                f"unknown backend_kind {self.backend_kind!r} (expected one of {BACKEND_KINDS})")
        if self.temperature < 0:
            raise ConfigurationError("temperature must be >= 0")
        if self.max_parallel < 1:
            raise ConfigurationError("max_parallel must be a positive integer")
        if self.backend_kind == "chat_http":
            missing = [name for name, value in (
                ("endpoint_url", self.endpoint_url),
                ("model_name", self.model_name),
                ("credential_env_var", self.credential_env_var),
            ) if not value]
            if missing:
                raise ConfigurationError(
                    f"chat_http backend requires {', '.join(missing)}")
        if self.backend_kind == "replay" and not self.replay_path:
            raise ConfigurationError("replay backend requires replay_path")

    @classmethod
    def from_json_obj(cls, obj: dict) -> "BackendConfig":
        kwargs = dict(obj)
        retry = kwargs.pop("retry", None)
        if retry is not None:
            try:
                kwargs["retry"] = RetryPolicy(**retry)
            except TypeError as exc:
                raise ConfigurationError(f"bad retry policy: {exc}")
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigurationError(f"bad backend config: {exc}")


def cache_key(config: BackendConfig, prompt_hash: str) -> str:
    """Digest over the prompt and every config field that can change
    the response. Two systems sharing (kind, model, temperature) but
    differing in rule tables or replay sources must never share cache
    entries. Replacement order is preserved: it affects the output."""
    material = json.dumps(
        [config.backend_kind, config.model_name, config.temperature,
         config.endpoint_url, config.response_path, config.replay_path,
         config.rule, list(config.replacements.items()), prompt_hash])
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class ResponseCache:
    """One JSON file per entry in a content-addressed directory; writes
    go to a temp file and land with an atomic rename, so concurrent
    workers never observe torn entries."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None

    def put(self, key: str, output_text: str, raw_response: str | None = None) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {"key": key, "output_text": output_text,
                 "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
        if raw_response is not None:
            entry["raw_response"] = raw_response
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(entry, fh, ensure_ascii=False, sort_keys=True)
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except FileNotFoundError:
                pass
            raise


def _extract_path(obj, dotted: str):
    node = obj
    for part in dotted.split("."):
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError):
                raise ProviderError(f"response path {dotted!r}: bad index {part!r}")
        elif isinstance(node, dict):
            if part not in node:
                raise ProviderError(f"response path {dotted!r}: missing key {part!r}")
            node = node[part]
        else:
            raise ProviderError(f"response path {dotted!r}: hit a leaf at {part!r}")
    if not isinstance(node, str):
        raise ProviderError(f"response path {dotted!r} did not resolve to text")
    return node


class ChatHttpBackend:
    def __init__(self, config: BackendConfig):
        self.config = config
        secret = os.environ.get(config.credential_env_var or "")
        if not secret:
            raise ConfigurationError(
                f"environment variable {config.credential_env_var!r} is not set")
        self._secret = secret

    def complete(self, prompt: PromptSpec) -> str:
        cfg = self.config
        payload = {
            "model": cfg.model_name,
            "temperature": cfg.temperature,
            "messages": [{"role": "user", "content": prompt.rendered}],
        }
        headers = {"Authorization": f"Bearer {self._secret}",
                   "Content-Type": "application/json"}
        last_exc: Exception | None = None
        for attempt in range(cfg.retry.max_attempts):
            if attempt:
                time.sleep(cfg.retry.backoff_base * (2 ** (attempt - 1)))
            try:
                resp = requests.post(cfg.endpoint_url, json=payload,
                                     headers=headers, timeout=cfg.timeout)
            except requests.RequestException as exc:
                last_exc = exc
                log.warning("segment %s: attempt %d failed (%s)",
                            prompt.segment_id, attempt + 1, type(exc).__name__)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_exc = ProviderError(
                    f"segment {prompt.segment_id}: provider returned {resp.status_code}:"
                    f" {resp.text[:200]}")
                continue
            if not resp.ok:
                raise ProviderError(
                    f"segment {prompt.segment_id}: provider returned {resp.status_code}:"
                    f" {resp.text[:200]}")
            try:
                body = resp.json()
            except ValueError:
                raise ProviderError(
                    f"segment {prompt.segment_id}: provider sent non-JSON body:"
                    f" {resp.text[:200]}")
            text = _extract_path(body, cfg.response_path)
            if not text.strip():
                raise ProviderError(
                    f"segment {prompt.segment_id}: provider returned an empty"
                    " completion; rerun manually")
            return text
        if isinstance(last_exc, ProviderError):
            raise last_exc
        raise TransportError(
            f"segment {prompt.segment_id}: network failure after"
            f" {cfg.retry.max_attempts} attempt(s): {last_exc}")


class ReplayBackend:
    """Serves outputs recorded by a previous run, keyed by prompt hash."""

    def __init__(self, config: BackendConfig):
        self.config = config
        from .corpus import load_translations
        self._by_hash: dict[str, str] = {}
        for record in load_translations(config.replay_path):
            if record.prompt_hash:
                self._by_hash[record.prompt_hash] = record.output_text

    def complete(self, prompt: PromptSpec) -> str:
        try:
            return self._by_hash[prompt.prompt_hash]
        except KeyError:
            raise ProviderError(
                f"segment {prompt.segment_id}: prompt hash {prompt.prompt_hash[:12]}..."
                " not present in replay file") from None


class MockRuleBackend:
    """Deterministic offline backend: applies a named rule to the
    segment text, then optional literal replacements (handy for
    simulating terminology-following and terminology-breaking
    systems in fixtures)."""

    RULES: dict[str, Callable[[str], str]] = {
        "identity": lambda text: text,
        "upper": str.upper,
    }

    def __init__(self, config: BackendConfig):
        self.config = config
        try:
            self._rule = self.RULES[config.rule]
        except KeyError:
            raise ConfigurationError(
                f"unknown mock rule {config.rule!r} (expected one of {sorted(self.RULES)})")

    def complete(self, prompt: PromptSpec) -> str:
        out = self._rule(prompt.segment_text)
        for needle, replacement in self.config.replacements.items():
            out = out.replace(needle, replacement)
        return out


def make_backend(config: BackendConfig):
    if config.backend_kind == "chat_http":
        return ChatHttpBackend(config)
    if config.backend_kind == "replay":
        return ReplayBackend(config)
    return MockRuleBackend(config)


def strip_wrappers(text: str) -> tuple[str, bool]:
    """Remove one surrounding whitespace run and one echoed quote pair."""
    stripped = text.strip()
    for open_q, close_q in _QUOTE_PAIRS:
        if len(stripped) >= 2 and stripped.startswith(open_q) and stripped.endswith(close_q):
            stripped = stripped[1:-1]
            break
    return stripped, stripped != text


def translate_segment(prompt: PromptSpec, config: BackendConfig,
                      cache: ResponseCache | None, system_id: str,
                      backend=None) -> TranslationRecord:
    """Resolve one prompt to a translation record, consulting the cache
    first and recording full provenance in backend_meta."""
    key = cache_key(config, prompt.prompt_hash)
    cache_hit = False
    raw_text: str | None = None
    if cache is not None:
        entry = cache.get(key)
        if entry is not None:
            raw_text = entry["output_text"]
            cache_hit = True
    if raw_text is None:
        if backend is None:
            backend = make_backend(config)
        raw_text = backend.complete(prompt)
        if cache is not None:
            cache.put(key, raw_text)

    output_text = raw_text
    stripped = False
    if config.strip_wrappers:
        output_text, stripped = strip_wrappers(raw_text)
        if stripped:
            log.info("segment %s: stripped response wrappers", prompt.segment_id)
    meta = {
        "backend_kind": config.backend_kind,
        "model_name": config.model_name,
        "temperature": config.temperature,
        "digest": DIGEST_ALGORITHM,
        "mode": prompt.mode,
    }
    if stripped:
        meta["wrappers_stripped"] = True
    return TranslationRecord(
        segment_id=prompt.segment_id,
        system_id=system_id,
        output_text=output_text,
        prompt_hash=prompt.prompt_hash,
        backend_meta=meta,
        cache_hit=cache_hit,
    )


def translate_document(segments: Sequence[Segment], glossary: Glossary, mode: str,
                       config: BackendConfig, system_id: str,
                       cache: ResponseCache | None = None,
                       template: PromptTemplate | None = None,
                       progress: Callable[[int, int], None] | None = None,
                       ) -> tuple[TranslationRecord, ...]:
    """Retrieval -> prompting -> dispatch for a whole document.

    Segments are independent: one failure never corrupts another's
    cache entry. The call either returns one record per segment or
    raises with every failed segment named (completed segments stay
    cached, so a rerun resumes cheaply).
    """
    retriever = Retriever(glossary)
    if template is None:
        template = PromptTemplate.load_default()
    backend = make_backend(config)

    prompts = [
        build_prompt(segment, retriever.retrieve(segment) if mode == "rag" else (),
                     glossary, mode, template)
        for segment in segments
    ]

    results: dict[str, TranslationRecord] = {}
    failures: list[tuple[str, Exception]] = []
    done = 0

    def run_one(prompt: PromptSpec) -> TranslationRecord:
        return translate_segment(prompt, config, cache, system_id, backend=backend)

    if config.max_parallel > 1 and len(prompts) > 1:
        with ThreadPoolExecutor(max_workers=config.max_parallel) as pool:
            futures = {pool.submit(run_one, p): p for p in prompts}
            for future, prompt in futures.items():
                try:
                    results[prompt.segment_id] = future.result()
                except Exception as exc:
                    failures.append((prompt.segment_id, exc))
                done += 1
                if progress:
                    progress(done, len(prompts))
    else:
        for prompt in prompts:
            try:
                results[prompt.segment_id] = run_one(prompt)
            except Exception as exc:
                failures.append((prompt.segment_id, exc))
            done += 1
            if progress:
                progress(done, len(prompts))

    if failures:
        names = ", ".join(segment_id for segment_id, _ in failures)
        first = failures[0][1]
        err_type = type(first) if isinstance(first, TermweaveError) else ProviderError
        raise err_type(
            f"{len(failures)} segment(s) failed for system {system_id!r}: {names}"
            f" (first error: {first})")
    return tuple(results[s.segment_id] for s in segments)
