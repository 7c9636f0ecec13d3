from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tuso.errors import (
    BackendUnavailable,
    EmptyExtraction,
    TemplateBindingMissing,
    TransientBackendError,
    TusoError,
)
from tuso.gateway import (
    ASSET_ROLES,
    DATA_ASSETS,
    ROLE_HINTS,
    SOCKET_OPS,
    AssetStore,
    Completion,
    Gateway,
    HttpBackend,
    PromptAsset,
    ScriptedBackend,
    extract_pair_tagged,
    extract_tagged,
    parse_index_choice,
    render,
    strip_code_fences,
)


class TestAssetStore:
    def test_every_asset_loads_with_correct_role(self):
        store = AssetStore()
        for name, role in ASSET_ROLES.items():
            asset = store.get(name)
            assert asset.name == name
            assert asset.role_hint == role
            assert role in ROLE_HINTS
            assert asset.body.strip()

    def test_data_assets_load(self):
        store = AssetStore()
        for name in DATA_ASSETS:
            assert store.data_lines(name)

    def test_unknown_asset_rejected(self):
        store = AssetStore()
        with pytest.raises(TusoError, match="unknown prompt asset"):
            store.get("jailbreak")
        with pytest.raises(TusoError, match="unknown data asset"):
            store.data_lines("secrets")

    def test_custom_directory_overrides(self, tmp_path):
        (tmp_path / "optimize.txt").write_text("custom {instruction}", encoding="utf-8")
        store = AssetStore(tmp_path)
        assert store.get("optimize").body == "custom {instruction}"
        with pytest.raises(TusoError, match="not found"):
            store.get("implement")

    def test_diagnostic_seed_list_shape(self):
        # 17 predefined diagnostic instructions, each a "by ..." phrase.
        lines = AssetStore().data_lines("diagnostic_instructions")
        assert len(lines) == 17
        assert all(line.startswith("by ") for line in lines)


class TestRender:
    def test_fills_placeholders(self):
        asset = PromptAsset(name="x", body="a={a} b={b}", role_hint="optimizer")
        assert render(asset, {"a": 1, "b": "two"}) == "a=1 b=two"

    def test_missing_binding_raises_with_name(self):
        asset = PromptAsset(name="opt", body="{present} {absent}", role_hint="optimizer")
        with pytest.raises(TemplateBindingMissing) as exc:
            render(asset, {"present": "x"})
        assert "absent" in str(exc.value)
        assert "opt" in str(exc.value)

    def test_extra_bindings_ignored(self):
        asset = PromptAsset(name="x", body="{a}", role_hint="optimizer")
        assert render(asset, {"a": "1", "unused": "2"}) == "1"

    def test_placeholders_listed(self):
        asset = PromptAsset(name="x", body="{a} {{literal}} {b}", role_hint="optimizer")
        assert asset.placeholders() == {"a", "b"}


class TestExtraction:
    def test_tagged_spans_in_order(self):
        assert extract_tagged("<m>one</m> noise <m>two</m>", "m") == ["one", "two"]

    def test_multiline_span(self):
        assert extract_tagged("<p>line1\nline2</p>", "p") == ["line1\nline2"]

    def test_zero_spans_raises(self):
        with pytest.raises(EmptyExtraction):
            extract_tagged("no tags here", "c")

    def test_malformed_span_skipped(self):
        assert extract_tagged("<m>ok</m> <m>unclosed", "m") == ["ok"]

    def test_unsupported_tag(self):
        with pytest.raises(TusoError, match="unsupported"):
            extract_tagged("<z>x</z>", "z")

    def test_pairing_adjacent(self):
        pairs = extract_pair_tagged("<c>cat1</c><p>by a</p><c>cat2</c><p>by b</p>")
        assert pairs == [("cat1", "by a"), ("cat2", "by b")]

    def test_pairing_drops_orphans(self):
        # A second <c> before any <p> replaces the pending one.
        assert extract_pair_tagged("<c>A</c><c>B</c><p>by y</p>") == [("B", "by y")]
        # Trailing unpaired <c> and leading unpaired <p> are dropped.
        assert extract_pair_tagged("<p>by x</p><c>A</c>") == []

    def test_strip_code_fences_picks_largest(self):
        text = "```py\nshort\n```\ntext\n```\nmuch longer block here\n```"
        assert strip_code_fences(text) == "much longer block here\n"

    def test_strip_code_fences_no_fence(self):
        assert strip_code_fences("plain code") == "plain code"

    @pytest.mark.parametrize(
        "text,k,expected",
        [
            ("2", 3, 2),
            ("I pick option 3.", 3, 3),
            ("0", 3, None),
            ("4", 3, None),
            ("none", 3, None),
            ("-1", 3, None),
        ],
    )
    def test_parse_index_choice(self, text, k, expected):
        assert parse_index_choice(text, k) == expected

    @given(st.text(max_size=80), st.integers(min_value=1, max_value=9))
    def test_parse_index_choice_range_property(self, text, k):
        result = parse_index_choice(text, k)
        assert result is None or 1 <= result <= k


class TestScriptedBackend:
    def test_route_priority_asset_then_role_then_queue_then_default(self):
        backend = ScriptedBackend(
            queue=["from-queue"],
            by_asset={"optimize": ["from-asset"]},
            by_role={"optimizer": ["from-role"]},
            default="from-default",
        )
        assert backend.complete("", asset_name="optimize", role_hint="optimizer") == "from-asset"
        assert backend.complete("", asset_name="optimize", role_hint="optimizer") == "from-role"
        assert backend.complete("", asset_name="optimize", role_hint="optimizer") == "from-queue"
        assert backend.complete("", asset_name="optimize", role_hint="optimizer") == "from-default"
        assert backend.complete("", asset_name="optimize", role_hint="optimizer") == "from-default"

    def test_string_route_is_inexhaustible(self):
        backend = ScriptedBackend(by_asset={"feedback": "same"})
        for _ in range(5):
            assert backend.complete("", asset_name="feedback", role_hint="feedback_writer") == "same"

    def test_exhaustion_raises(self):
        backend = ScriptedBackend(by_asset={"optimize": ["only"]})
        backend.complete("", asset_name="optimize", role_hint="optimizer")
        with pytest.raises(BackendUnavailable, match="exhausted"):
            backend.complete("", asset_name="optimize", role_hint="optimizer")

    def test_from_file(self, tmp_path):
        path = tmp_path / "script.json"
        path.write_text(
            json.dumps({"by_asset": {"optimize": ["a"]}, "default": "d"}), encoding="utf-8"
        )
        backend = ScriptedBackend.from_file(path)
        assert backend.complete("", asset_name="optimize", role_hint="optimizer") == "a"
        assert backend.complete("", asset_name="optimize", role_hint="optimizer") == "d"

    def test_fast_forward_replays_consumption(self):
        make = lambda: ScriptedBackend(by_asset={"optimize": ["a", "b", "c"]})  # noqa: E731
        first = make()
        first.complete("", asset_name="optimize", role_hint="optimizer")
        first.complete("", asset_name="optimize", role_hint="optimizer")
        resumed = make()
        resumed.fast_forward([("optimize", "optimizer")] * 2)
        assert resumed.complete("", asset_name="optimize", role_hint="optimizer") == "c"

    def test_no_socket_ops(self):
        backend = ScriptedBackend(default="x")
        backend.complete("", asset_name="optimize", role_hint="optimizer")
        assert SOCKET_OPS.count == 0


class _FlakyBackend:
    """Fails transiently n times, then succeeds."""

    def __init__(self, failures: int, reply: str = "ok-reply") -> None:
        self.failures = failures
        self.reply = reply
        self.calls = 0

    def complete(self, prompt, *, asset_name, role_hint):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransientBackendError("flaky")
        return self.reply


def _gateway(backend, **kw):
    kw.setdefault("jitter_rng", np.random.default_rng(0))
    kw.setdefault("sleeper", lambda s: None)
    return Gateway(backend=backend, assets=AssetStore(), **kw)


class TestGateway:
    def test_renders_and_returns_completion(self):
        seen = {}

        class Echo:
            def complete(self, prompt, *, asset_name, role_hint):
                seen["prompt"] = prompt
                return "reply"

        gw = _gateway(Echo())
        completion = gw.complete(
            "feedback",
            {
                "instruction": "by x",
                "parent_code": "p",
                "child_code": "c",
                "parent_score": 0.1,
                "child_score": 0.2,
            },
        )
        assert completion.text == "reply"
        assert completion.asset == "feedback"
        assert completion.role_hint == "feedback_writer"
        assert completion.attempt == 1
        assert "by x" in seen["prompt"]

    def test_retries_transient_then_succeeds(self):
        backend = _FlakyBackend(failures=2)
        sleeps: list[float] = []
        gw = _gateway(backend, retry_attempts=3, sleeper=sleeps.append)
        completion = gw.complete("feedback", _feedback_bindings())
        assert completion.attempt == 3
        assert backend.calls == 3
        assert len(sleeps) == 2
        # Exponential base with positive jitter: 0.5+j, 1.0+j with j in [0, 0.5).
        assert 0.5 <= sleeps[0] < 1.0
        assert 1.0 <= sleeps[1] < 1.5

    def test_gives_up_after_retry_budget(self):
        backend = _FlakyBackend(failures=99)
        gw = _gateway(backend, retry_attempts=3)
        with pytest.raises(BackendUnavailable, match="after 3 attempts"):
            gw.complete("feedback", _feedback_bindings())
        assert backend.calls == 3

    def test_hard_unavailability_not_retried(self):
        class Hard:
            calls = 0

            def complete(self, prompt, *, asset_name, role_hint):
                Hard.calls += 1
                raise BackendUnavailable("no key")

        gw = _gateway(Hard())
        with pytest.raises(BackendUnavailable, match="no key"):
            gw.complete("feedback", _feedback_bindings())
        assert Hard.calls == 1

    def test_response_truncated_to_char_cap(self):
        gw = _gateway(ScriptedBackend(default="x" * 100), response_char_cap=10)
        assert gw.complete("feedback", _feedback_bindings()).text == "x" * 10

    def test_on_complete_hook_fires(self):
        seen: list[Completion] = []
        gw = _gateway(ScriptedBackend(default="r"), on_complete=seen.append)
        gw.complete("feedback", _feedback_bindings())
        assert [c.asset for c in seen] == ["feedback"]

    def test_jitter_comes_from_dedicated_stream(self):
        rng_a = np.random.default_rng(42)
        rng_b = np.random.default_rng(42)
        sleeps_a: list[float] = []
        sleeps_b: list[float] = []
        for rng, sink in ((rng_a, sleeps_a), (rng_b, sleeps_b)):
            gw = _gateway(
                _FlakyBackend(failures=1), jitter_rng=rng, sleeper=sink.append
            )
            gw.complete("feedback", _feedback_bindings())
        assert sleeps_a == sleeps_b


def _feedback_bindings():
    return {
        "instruction": "by x",
        "parent_code": "p",
        "child_code": "c",
        "parent_score": 0.1,
        "child_score": 0.2,
    }


class _FakeResponse:
    def __init__(self, status_code, payload=None):
        self.status_code = status_code
        self._payload = payload

    def json(self):
        if self._payload is None:
            raise ValueError("no body")
        return self._payload


class TestHttpBackend:
    def test_requires_api_key(self):
        with pytest.raises(BackendUnavailable, match="TUSO_API_KEY"):
            HttpBackend(base_url="https://x", model="m", api_key="")

    def test_success_parses_payload_and_counts_socket_op(self):
        SOCKET_OPS.reset()
        captured = {}

        def post(url, headers, json, timeout):
            captured.update(url=url, headers=headers, body=json)
            return _FakeResponse(
                200, {"choices": [{"message": {"content": "hello"}}]}
            )

        backend = HttpBackend(base_url="https://api.example/v1", model="m1", api_key="k", post=post)
        reply = backend.complete("prompt text", asset_name="optimize", role_hint="optimizer")
        assert reply == "hello"
        assert SOCKET_OPS.count == 1
        assert captured["url"] == "https://api.example/v1/chat/completions"
        assert captured["headers"]["Authorization"] == "Bearer k"
        assert captured["body"]["messages"][0]["content"] == "prompt text"

    @pytest.mark.parametrize("status", [401, 403])
    def test_auth_rejection_is_hard_failure(self, status):
        backend = HttpBackend(
            base_url="https://x", model="m", api_key="k", post=lambda *a, **k: _FakeResponse(status)
        )
        with pytest.raises(BackendUnavailable, match=str(status)):
            backend.complete("p", asset_name="optimize", role_hint="optimizer")

    def test_server_error_is_transient(self):
        backend = HttpBackend(
            base_url="https://x", model="m", api_key="k", post=lambda *a, **k: _FakeResponse(500)
        )
        with pytest.raises(TransientBackendError, match="500"):
            backend.complete("p", asset_name="optimize", role_hint="optimizer")

    def test_transport_error_is_transient(self):
        def post(*a, **k):
            raise OSError("connection reset")

        backend = HttpBackend(base_url="https://x", model="m", api_key="k", post=post)
        with pytest.raises(TransientBackendError, match="connection reset"):
            backend.complete("p", asset_name="optimize", role_hint="optimizer")

    def test_malformed_payload_is_transient(self):
        backend = HttpBackend(
            base_url="https://x", model="m", api_key="k",
            post=lambda *a, **k: _FakeResponse(200, {"unexpected": True}),
        )
        with pytest.raises(TransientBackendError, match="malformed"):
            backend.complete("p", asset_name="optimize", role_hint="optimizer")
