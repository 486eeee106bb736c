import json
import logging

import pytest

from stub_server import StubServer
from termweave.backends import (
    BackendConfig,
    ChatHttpBackend,
    MockRuleBackend,
    ReplayBackend,
    ResponseCache,
    RetryPolicy,
    cache_key,
    make_backend,
    strip_wrappers,
    translate_document,
    translate_segment,
)
from termweave.corpus import Segment, TranslationRecord, save_translations
from termweave.errors import ConfigurationError, ProviderError, TransportError
from termweave.glossary import Glossary, GlossaryEntry
from termweave.prompting import PromptSpec, build_prompt

SECRET = "sk-fixture-secret-0xDEADBEEF"
CRED_VAR = "TERMWEAVE_TEST_KEY"

GLOSSARY = Glossary((GlossaryEntry("e1", "ocre", "ochre"),))
SEGMENTS = (Segment("s1", 0, "El ocre primero."),
            Segment("s2", 1, "El ocre segundo."),
            Segment("s3", 2, "Sin términos."))


def prompt_for(segment, mode="simple"):
    return build_prompt(segment, [], GLOSSARY, mode)


def http_config(url, **kw):
    kw.setdefault("retry", RetryPolicy(max_attempts=3, backoff_base=0.0))
    return BackendConfig(backend_kind="chat_http", endpoint_url=url,
                         model_name="stub-model", credential_env_var=CRED_VAR,
                         **kw)


@pytest.fixture(autouse=True)
def credential(monkeypatch):
    monkeypatch.setenv(CRED_VAR, SECRET)


class TestBackendConfig:
    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError, match="backend_kind"):
            BackendConfig(backend_kind="carrier_pigeon")

    def test_chat_http_requires_endpoint_model_credential(self):
        with pytest.raises(ConfigurationError) as err:
            BackendConfig(backend_kind="chat_http")
        msg = str(err.value)
        assert "endpoint_url" in msg and "model_name" in msg
        assert "credential_env_var" in msg

    def test_replay_requires_path(self):
        with pytest.raises(ConfigurationError, match="replay_path"):
            BackendConfig(backend_kind="replay")

    def test_negative_temperature(self):
        with pytest.raises(ConfigurationError, match="temperature"):
            BackendConfig(backend_kind="mock_rule", temperature=-0.1)

    def test_zero_parallel(self):
        with pytest.raises(ConfigurationError, match="max_parallel"):
            BackendConfig(backend_kind="mock_rule", max_parallel=0)

    def test_from_json_obj_unknown_key(self):
        with pytest.raises(ConfigurationError, match="bad backend config"):
            BackendConfig.from_json_obj({"backend_kind": "mock_rule",
                                         "flavor": "mint"})

    def test_from_json_obj_bad_retry(self):
        with pytest.raises(ConfigurationError, match="retry"):
            BackendConfig.from_json_obj({"backend_kind": "mock_rule",
                                         "retry": {"attempts": 9}})

    def test_from_json_obj_round_trip(self):
        config = BackendConfig.from_json_obj({
            "backend_kind": "mock_rule", "rule": "identity",
            "replacements": {"a": "b"},
            "retry": {"max_attempts": 5, "backoff_base": 0.1}})
        assert config.retry.max_attempts == 5


class TestCacheKey:
    BASE = dict(backend_kind="mock_rule")

    def test_stable_for_same_inputs(self):
        a = BackendConfig(**self.BASE)
        b = BackendConfig(**self.BASE)
        assert cache_key(a, "h1") == cache_key(b, "h1")

    def test_prompt_hash_changes_key(self):
        config = BackendConfig(**self.BASE)
        assert cache_key(config, "h1") != cache_key(config, "h2")

    def test_replacement_tables_change_key(self):
        a = BackendConfig(backend_kind="mock_rule", replacements={"x": "y"})
        b = BackendConfig(backend_kind="mock_rule", replacements={"x": "z"})
        assert cache_key(a, "h") != cache_key(b, "h")

    def test_replacement_order_changes_key(self):
        a = BackendConfig(backend_kind="mock_rule",
                          replacements={"x": "y", "p": "q"})
        b = BackendConfig(backend_kind="mock_rule",
                          replacements={"p": "q", "x": "y"})
        assert cache_key(a, "h") != cache_key(b, "h")

    def test_replay_sources_never_share_entries(self, tmp_path):
        for name in ("one.jsonl", "two.jsonl"):
            save_translations((), tmp_path / name, meta={"x": 1})
        a = BackendConfig(backend_kind="replay", replay_path=str(tmp_path / "one.jsonl"))
        b = BackendConfig(backend_kind="replay", replay_path=str(tmp_path / "two.jsonl"))
        assert cache_key(a, "h") != cache_key(b, "h")

    def test_model_and_temperature_change_key(self):
        a = http_config("http://x", temperature=0.0)
        b = http_config("http://x", temperature=0.7)
        assert cache_key(a, "h") != cache_key(b, "h")


class TestResponseCache:
    def test_miss_returns_none(self, tmp_path):
        assert ResponseCache(tmp_path / "c").get("00" + "a" * 62) is None

    def test_put_get_round_trip(self, tmp_path):
        cache = ResponseCache(tmp_path / "c")
        key = "ab" + "0" * 62
        cache.put(key, "hello", raw_response='{"raw": true}')
        entry = cache.get(key)
        assert entry["output_text"] == "hello"
        assert entry["raw_response"] == '{"raw": true}'
        assert "created_at" in entry

    def test_sharded_layout_and_no_temp_leftovers(self, tmp_path):
        cache = ResponseCache(tmp_path / "c")
        key = "cd" + "1" * 62
        cache.put(key, "x")
        assert (tmp_path / "c" / "cd" / f"{key}.json").exists()
        leftovers = list((tmp_path / "c").rglob("*.tmp"))
        assert leftovers == []

    def test_overwrite_is_atomic_replace(self, tmp_path):
        cache = ResponseCache(tmp_path / "c")
        key = "ef" + "2" * 62
        cache.put(key, "first")
        cache.put(key, "second")
        assert cache.get(key)["output_text"] == "second"


class TestStripWrappers:
    @pytest.mark.parametrize("raw,expected", [
        ("  plain  ", "plain"),
        ('"quoted"', "quoted"),
        ("'single'", "single"),
        ("“curly”", "curly"),
        ("«guillemets»", "guillemets"),
        ('  "both"  ', "both"),
        ('say "hi" now', 'say "hi" now'),
        ('"only open', '"only open'),
    ])
    def test_cases(self, raw, expected):
        text, changed = strip_wrappers(raw)
        assert text == expected
        assert changed == (text != raw)

    def test_strips_one_layer_only(self):
        text, _ = strip_wrappers('""double""')
        assert text == '"double"'


class TestMockRuleBackend:
    def test_identity_with_replacements_in_order(self):
        config = BackendConfig(
            backend_kind="mock_rule",
            replacements={"ocre": "ochre", "ochre claro": "pale ochre"})
        out = MockRuleBackend(config).complete(prompt_for(
            Segment("s", 0, "El ocre claro.")))
        # First rule rewrites, second sees its output.
        assert out == "El pale ochre."

    def test_replacement_sequence_is_literal_and_ordered(self):
        config = BackendConfig(backend_kind="mock_rule",
                               replacements={"a": "b", "b": "c"})
        out = MockRuleBackend(config).complete(
            PromptSpec("simple", "i", None, "a", "i\n\na", "h", "s"))
        assert out == "c"

    def test_upper_rule(self):
        config = BackendConfig(backend_kind="mock_rule", rule="upper")
        assert MockRuleBackend(config).complete(prompt_for(SEGMENTS[2])) == "SIN TÉRMINOS."

    def test_unknown_rule(self):
        with pytest.raises(ConfigurationError, match="mock rule"):
            MockRuleBackend(BackendConfig(backend_kind="mock_rule", rule="reverse"))


class TestReplayBackend:
    def test_serves_recorded_output(self, tmp_path):
        prompt = prompt_for(SEGMENTS[0])
        path = tmp_path / "replay.jsonl"
        save_translations((TranslationRecord("s1", "old", "recorded text",
                                             prompt_hash=prompt.prompt_hash),), path)
        backend = ReplayBackend(BackendConfig(backend_kind="replay",
                                              replay_path=str(path)))
        assert backend.complete(prompt) == "recorded text"

    def test_unknown_prompt_names_segment(self, tmp_path):
        path = tmp_path / "replay.jsonl"
        save_translations((), path, meta={"note": "empty"})
        backend = ReplayBackend(BackendConfig(backend_kind="replay",
                                              replay_path=str(path)))
        with pytest.raises(ProviderError, match="segment s1"):
            backend.complete(prompt_for(SEGMENTS[0]))


class TestChatHttpBackend:
    def test_success_payload_and_auth(self):
        with StubServer(reply_fn=lambda p: "The first ochre.") as stub:
            backend = ChatHttpBackend(http_config(stub.url, temperature=0.25))
            out = backend.complete(prompt_for(SEGMENTS[0]))
            assert out == "The first ochre."
            assert stub.calls == 1
            assert stub.auth_headers == [f"Bearer {SECRET}"]
            assert stub.prompts[0].endswith("El ocre primero.")

    def test_retries_transient_500_then_succeeds(self):
        with StubServer(fail_when=lambda p, call_no: call_no == 1) as stub:
            backend = ChatHttpBackend(http_config(stub.url))
            out = backend.complete(prompt_for(SEGMENTS[0]))
            assert out == "El ocre primero."
            assert stub.calls == 2

    def test_persistent_500_exhausts_retries(self):
        with StubServer(fail_when=lambda p, call_no: True) as stub:
            backend = ChatHttpBackend(http_config(stub.url))
            with pytest.raises(ProviderError, match="500"):
                backend.complete(prompt_for(SEGMENTS[0]))
            assert stub.calls == 3

    def test_connection_refused_is_transport_error(self):
        backend = ChatHttpBackend(http_config("http://127.0.0.1:9/nope"))
        with pytest.raises(TransportError, match="segment s1"):
            backend.complete(prompt_for(SEGMENTS[0]))

    def test_empty_completion_rejected(self):
        with StubServer(reply_fn=lambda p: "   ") as stub:
            backend = ChatHttpBackend(http_config(stub.url))
            with pytest.raises(ProviderError, match="empty"):
                backend.complete(prompt_for(SEGMENTS[0]))

    def test_missing_credential_fails_before_network(self, monkeypatch):
        monkeypatch.delenv(CRED_VAR)
        with StubServer() as stub:
            with pytest.raises(ConfigurationError, match=CRED_VAR):
                ChatHttpBackend(http_config(stub.url))
            assert stub.calls == 0

    def test_response_path_missing_key(self):
        with StubServer() as stub:
            config = http_config(stub.url, response_path="choices.0.text")
            with pytest.raises(ProviderError, match="missing key"):
                ChatHttpBackend(config).complete(prompt_for(SEGMENTS[0]))

    def test_alternate_response_path(self):
        with StubServer() as stub:
            config = http_config(stub.url,
                                 response_path="choices.0.message.content")
            out = ChatHttpBackend(config).complete(prompt_for(SEGMENTS[1]))
            assert out == "El ocre segundo."


class TestCredentialHygiene:
    def test_secret_never_persisted_or_logged(self, tmp_path, caplog):
        cache_dir = tmp_path / "cache"
        with StubServer() as stub, caplog.at_level(logging.DEBUG):
            config = http_config(stub.url)
            cache = ResponseCache(cache_dir)
            records = translate_document(SEGMENTS, GLOSSARY, "simple", config,
                                         "sysA", cache=cache)
        assert len(records) == 3
        for record in records:
            blob = json.dumps(record.to_json_obj())
            assert SECRET not in blob
        for path in cache_dir.rglob("*.json"):
            assert SECRET not in path.read_text(encoding="utf-8")
        assert SECRET not in caplog.text


class TestTranslateSegment:
    class CountingBackend:
        def __init__(self, reply="out"):
            self.calls = 0
            self.reply = reply

        def complete(self, prompt):
            self.calls += 1
            return self.reply

    def test_cache_hit_skips_backend(self, tmp_path):
        config = BackendConfig(backend_kind="mock_rule")
        cache = ResponseCache(tmp_path / "c")
        backend = self.CountingBackend()
        prompt = prompt_for(SEGMENTS[0])
        first = translate_segment(prompt, config, cache, "sysA", backend=backend)
        second = translate_segment(prompt, config, cache, "sysA", backend=backend)
        assert backend.calls == 1
        assert first.output_text == second.output_text
        assert first.cache_hit is False
        assert second.cache_hit is True
        assert "cache_hit" not in second.backend_meta
        assert first == second

    def test_cache_stores_raw_strip_applied_after(self, tmp_path):
        config = BackendConfig(backend_kind="mock_rule")
        cache = ResponseCache(tmp_path / "c")
        backend = self.CountingBackend(reply='"wrapped"')
        prompt = prompt_for(SEGMENTS[0])
        record = translate_segment(prompt, config, cache, "sysA", backend=backend)
        assert record.output_text == "wrapped"
        assert record.backend_meta["wrappers_stripped"] is True
        key = cache_key(config, prompt.prompt_hash)
        assert cache.get(key)["output_text"] == '"wrapped"'

    def test_no_cache_still_works(self):
        config = BackendConfig(backend_kind="mock_rule")
        record = translate_segment(prompt_for(SEGMENTS[0]), config, None, "sysA",
                                   backend=self.CountingBackend("texto"))
        assert record.output_text == "texto"


class TestTranslateDocument:
    def test_records_follow_segment_order(self):
        config = BackendConfig(backend_kind="mock_rule", max_parallel=3)
        records = translate_document(SEGMENTS, GLOSSARY, "simple", config, "sysA")
        assert [r.segment_id for r in records] == ["s1", "s2", "s3"]
        assert records[2].output_text == "Sin términos."

    def test_serial_path_matches_parallel(self):
        serial = translate_document(
            SEGMENTS, GLOSSARY, "rag",
            BackendConfig(backend_kind="mock_rule", max_parallel=1), "sysA")
        parallel = translate_document(
            SEGMENTS, GLOSSARY, "rag",
            BackendConfig(backend_kind="mock_rule", max_parallel=4), "sysA")
        strip = lambda r: (r.segment_id, r.output_text, r.prompt_hash)
        assert [strip(r) for r in serial] == [strip(r) for r in parallel]

    def test_failure_names_failed_segments_and_keeps_cache(self, tmp_path):
        cache = ResponseCache(tmp_path / "c")
        with StubServer(fail_when=lambda p, n: "segundo" in p) as stub:
            config = http_config(stub.url, max_parallel=1)
            with pytest.raises(ProviderError, match="s2"):
                translate_document(SEGMENTS, GLOSSARY, "simple", config,
                                   "sysA", cache=cache)
            calls_after_first = stub.calls
            # s1 and s3 landed in the cache; a rerun only retries s2.
            stub.fail_when = None
            records = translate_document(SEGMENTS, GLOSSARY, "simple", config,
                                         "sysA", cache=cache)
            assert len(records) == 3
            assert stub.calls == calls_after_first + 1

    def test_progress_callback(self):
        seen = []
        config = BackendConfig(backend_kind="mock_rule", max_parallel=1)
        translate_document(SEGMENTS, GLOSSARY, "simple", config, "sysA",
                           progress=lambda done, total: seen.append((done, total)))
        assert seen == [(1, 3), (2, 3), (3, 3)]

    def test_make_backend_dispatch(self, tmp_path):
        assert isinstance(make_backend(BackendConfig(backend_kind="mock_rule")),
                          MockRuleBackend)
        path = tmp_path / "r.jsonl"
        save_translations((), path, meta={"x": 1})
        assert isinstance(
            make_backend(BackendConfig(backend_kind="replay", replay_path=str(path))),
            ReplayBackend)
