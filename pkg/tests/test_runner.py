import dataclasses
import json

import pytest

from glossmt.errors import ConfigurationError, EndpointError, UsageError
from glossmt.runner import (
    TOKEN_ENV_VAR,
    InferenceConfig,
    generate_batch,
    read_records,
    write_records,
    write_run_manifest,
    write_timing_sidecar,
)
from stub_server import echo_text


@dataclasses.dataclass(frozen=True)
class Prompt:
    segment_id: str
    rendered_text: str
    mode: str = "test"


def config(url, **overrides):
    defaults = dict(
        endpoint_url=url,
        model_name="stub-model",
        top_p=0.9,
        max_new_tokens=64,
        request_timeout=5.0,
        max_concurrent_requests=1,
        max_retries=2,
        retry_backoff=0.01,
    )
    defaults.update(overrides)
    return InferenceConfig(**defaults)


def prompts(n, prefix="translate this"):
    return [Prompt(str(i), f"{prefix} {i}") for i in range(n)]


class TestConfig:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            config("http://x", top_p=1.5)
        with pytest.raises(ConfigurationError):
            config("http://x", max_new_tokens=0)
        with pytest.raises(ConfigurationError):
            config("http://x", max_concurrent_requests=0)
        with pytest.raises(ConfigurationError):
            config("", model_name="m")

    def test_payload_omits_unset_temperature(self):
        cfg = config("http://x")
        payload = cfg.payload("hi")
        assert payload == {
            "model": "stub-model",
            "prompt": "hi",
            "top_p": 0.9,
            "max_tokens": 64,
        }
        warm = config("http://x", temperature=0.7)
        assert warm.payload("hi")["temperature"] == 0.7

    def test_snapshot_never_contains_token(self, monkeypatch):
        monkeypatch.setenv(TOKEN_ENV_VAR, "secret-token")
        snapshot = config("http://x").snapshot()
        assert "secret-token" not in json.dumps(snapshot)
        assert "authorization" not in {k.lower() for k in snapshot}


class TestGeneration:
    def test_echo_round_trip(self, stub_endpoint):
        stub_endpoint.reset()
        batch = prompts(5)
        records = generate_batch(batch, config(stub_endpoint.url + "/echo"))
        assert [r.segment_id for r in records] == [str(i) for i in range(5)]
        for record, prompt in zip(records, batch):
            assert record.ok
            assert record.error is None
            assert record.attempts == 1
            assert record.raw_output == echo_text(prompt.rendered_text)
            assert record.duration_s > 0

    def test_openai_response_shape(self, stub_endpoint):
        records = generate_batch(
            prompts(2), config(stub_endpoint.url + "/echo-openai")
        )
        assert all(r.ok for r in records)
        assert records[0].raw_output == echo_text("translate this 0")

    def test_order_preserved_under_concurrency(self, stub_endpoint):
        batch = prompts(40, prefix="concurrent")
        serial = generate_batch(batch, config(stub_endpoint.url + "/echo"))
        pooled = generate_batch(
            batch, config(stub_endpoint.url + "/echo", max_concurrent_requests=8)
        )
        assert [r.segment_id for r in pooled] == [r.segment_id for r in serial]
        assert [r.raw_output for r in pooled] == [r.raw_output for r in serial]

    def test_train_prompts_rejected(self, stub_endpoint):
        train = [Prompt("0", "text", mode="train")]
        with pytest.raises(UsageError):
            generate_batch(train, config(stub_endpoint.url + "/echo"))

    def test_bearer_token_sent_when_env_set(self, stub_endpoint, monkeypatch):
        stub_endpoint.reset()
        monkeypatch.setenv(TOKEN_ENV_VAR, "tok-123")
        generate_batch(prompts(1), config(stub_endpoint.url + "/echo"))
        (_, _, headers) = stub_endpoint.requests[-1]
        assert headers.get("Authorization") == "Bearer tok-123"

    def test_no_auth_header_without_env(self, stub_endpoint, monkeypatch):
        stub_endpoint.reset()
        monkeypatch.delenv(TOKEN_ENV_VAR, raising=False)
        generate_batch(prompts(1), config(stub_endpoint.url + "/echo"))
        (_, _, headers) = stub_endpoint.requests[-1]
        assert "Authorization" not in headers

    def test_request_body_matches_config(self, stub_endpoint):
        stub_endpoint.reset()
        cfg = config(stub_endpoint.url + "/echo", temperature=0.2, top_p=0.8)
        generate_batch(prompts(1, prefix="body-check"), cfg)
        (_, payload, _) = stub_endpoint.requests[-1]
        assert payload == {
            "model": "stub-model",
            "prompt": "body-check 0",
            "top_p": 0.8,
            "temperature": 0.2,
            "max_tokens": 64,
        }


class TestRetries:
    def test_flaky_endpoint_succeeds_on_second_attempt(self, stub_endpoint):
        stub_endpoint.reset()
        records = generate_batch(
            prompts(3, prefix="flaky"), config(stub_endpoint.url + "/flaky")
        )
        assert all(r.ok for r in records)
        assert all(r.attempts == 2 for r in records)

    def test_retry_exhaustion_yields_error_record(self, stub_endpoint):
        # /flaky fails only once, so force exhaustion with max_retries=0
        stub_endpoint.reset()
        records = generate_batch(
            prompts(1, prefix="exhaust"),
            config(stub_endpoint.url + "/flaky", max_retries=0),
        )
        assert len(records) == 1
        assert not records[0].ok
        assert records[0].raw_output == ""
        assert "500" in records[0].error

    def test_non_retryable_status_fails_immediately(self, stub_endpoint):
        stub_endpoint.reset()
        records = generate_batch(
            prompts(1, prefix="missing"), config(stub_endpoint.url + "/notfound")
        )
        assert not records[0].ok
        assert records[0].attempts == 1
        assert "404" in records[0].error
        # one request only: no retries burned on a permanent failure
        assert len(stub_endpoint.requests) == 1

    def test_malformed_json_is_an_error_record(self, stub_endpoint):
        records = generate_batch(
            prompts(1, prefix="garbled"), config(stub_endpoint.url + "/malformed")
        )
        assert not records[0].ok

    def test_missing_text_keys_is_an_error_record(self, stub_endpoint):
        records = generate_batch(
            prompts(1, prefix="shapeless"), config(stub_endpoint.url + "/empty")
        )
        assert not records[0].ok

    def test_timeout_retries_then_errors(self, stub_endpoint):
        records = generate_batch(
            prompts(1, prefix="sluggish"),
            config(
                stub_endpoint.url + "/slow",
                request_timeout=0.05,
                max_retries=1,
            ),
        )
        assert not records[0].ok
        assert records[0].attempts == 2


class TestUnreachable:
    def test_connection_error_aborts_batch(self):
        # a port from the TEST-NET range that nothing listens on
        cfg = config(
            "http://127.0.0.1:9", max_retries=0, request_timeout=0.2
        )
        with pytest.raises(EndpointError) as exc:
            generate_batch(prompts(4), cfg)
        partial = exc.value.partial_records
        assert 1 <= len(partial) <= 4
        assert any(not r.ok for r in partial)


class TestRecordIO:
    def sample_records(self, stub_endpoint):
        return generate_batch(prompts(3), config(stub_endpoint.url + "/echo"))

    def test_round_trip_excludes_timing(self, tmp_path, stub_endpoint):
        records = self.sample_records(stub_endpoint)
        path = tmp_path / "records.jsonl"
        write_records(path, records, manifest={"seed": 5})
        text = path.read_text(encoding="utf-8")
        assert "duration" not in text and "seconds" not in text
        loaded = read_records(path)
        assert [r.segment_id for r in loaded] == [r.segment_id for r in records]
        assert [r.raw_output for r in loaded] == [r.raw_output for r in records]
        assert all(r.duration_s == 0.0 for r in loaded)

    def test_request_payload_reconstructs_body(self, stub_endpoint):
        record = self.sample_records(stub_endpoint)[0]
        body = record.request_payload()
        assert body["prompt"] == record.prompt_text
        assert body["model"] == "stub-model"
        assert body["top_p"] == 0.9

    def test_timing_sidecar(self, tmp_path, stub_endpoint):
        records = self.sample_records(stub_endpoint)
        path = tmp_path / "timing.jsonl"
        write_timing_sidecar(path, records)
        rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]
        assert [row["segment_id"] for row in rows] == ["0", "1", "2"]
        assert all(row["seconds"] > 0 for row in rows)

    def test_run_manifest(self, tmp_path, stub_endpoint):
        records = self.sample_records(stub_endpoint)
        path = tmp_path / "manifest.json"
        write_run_manifest(
            path,
            config(stub_endpoint.url + "/echo"),
            records,
            config_hash="abc123",
            seed=7,
        )
        manifest = json.loads(path.read_text(encoding="utf-8"))
        assert manifest["records"] == 3
        assert manifest["errors"] == 0
        assert manifest["aborted"] is False
        assert manifest["config"]["model"] == "stub-model"

    def test_manifest_never_contains_token(self, tmp_path, stub_endpoint, monkeypatch):
        monkeypatch.setenv(TOKEN_ENV_VAR, "super-secret")
        records = generate_batch(prompts(1), config(stub_endpoint.url + "/echo"))
        record_path = tmp_path / "records.jsonl"
        manifest_path = tmp_path / "manifest.json"
        write_records(record_path, records, manifest={"seed": 1})
        write_run_manifest(
            manifest_path,
            config(stub_endpoint.url + "/echo"),
            records,
            config_hash="h",
            seed=1,
        )
        assert "super-secret" not in record_path.read_text(encoding="utf-8")
        assert "super-secret" not in manifest_path.read_text(encoding="utf-8")
