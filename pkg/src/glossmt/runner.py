"""Batch client for completion-style JSON-over-HTTP inference endpoints.

The outbound request is ``{model, prompt, top_p, temperature?, max_tokens}``
(temperature included only when set); the response must be a JSON object
carrying the generated text either as ``{"text": ...}`` or OpenAI-style as
``{"choices": [{"text": ...}]}``.

Failure policy: connection errors, timeouts, HTTP 429 and 5xx are retried
with exponential backoff. A request that still cannot *connect* after its
retries marks the endpoint unreachable and aborts the whole batch
(EndpointError, carrying the records completed so far); every other
exhausted failure — timeout, HTTP error status, malformed response body —
becomes a per-record error record so no prompt is ever silently dropped.

Credentials come from the ``GLOSSMT_API_TOKEN`` environment variable (sent
as a bearer token) and are never written to records or manifests.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import requests

from . import _jsonl
from .errors import ConfigurationError, EndpointError, FormatError, UsageError

log = logging.getLogger(__name__)

TOKEN_ENV_VAR = "GLOSSMT_API_TOKEN"

_RETRYABLE_STATUS = frozenset({429, *range(500, 600)})


@dataclass(frozen=True)
class InferenceConfig:
    endpoint_url: str
    model_name: str
    top_p: float = 0.9
    temperature: float | None = None
    max_new_tokens: int = 512
    request_timeout: float = 60.0
    max_concurrent_requests: int = 1
    max_retries: int = 2
    retry_backoff: float = 0.5

    def __post_init__(self):
        if not self.endpoint_url:
            raise ConfigurationError("endpoint_url must be non-empty")
        if not self.model_name:
            raise ConfigurationError("model_name must be non-empty")
        if not 0 < self.top_p <= 1:
            raise ConfigurationError(f"top_p must be in (0,1], got {self.top_p}")
        if self.temperature is not None and self.temperature < 0:
            raise ConfigurationError("temperature must be nonnegative")
        if self.max_new_tokens < 1:
            raise ConfigurationError("max_new_tokens must be positive")
        if self.request_timeout <= 0:
            raise ConfigurationError("request_timeout must be positive")
        if self.max_concurrent_requests < 1:
            raise ConfigurationError("max_concurrent_requests must be >= 1")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")
        if self.retry_backoff < 0:
            raise ConfigurationError("retry_backoff must be >= 0")

    def snapshot(self) -> dict[str, Any]:
        """The request settings stored on every record (token-free)."""
        return {
            "endpoint_url": self.endpoint_url,
            "model": self.model_name,
            "top_p": self.top_p,
            "temperature": self.temperature,
            "max_tokens": self.max_new_tokens,
        }

    def payload(self, prompt: str) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": self.model_name,
            "prompt": prompt,
            "top_p": self.top_p,
            "max_tokens": self.max_new_tokens,
        }
        if self.temperature is not None:
            body["temperature"] = self.temperature
        return body


@dataclass(frozen=True)
class GenerationRecord:
    """One prompt/output exchange with the settings that produced it.

    ``duration_s`` is wall-clock timing and is serialized only to the
    timing sidecar, never to the records artifact, so record files stay
    byte-identical across reruns.
    """

    segment_id: str
    prompt_text: str
    raw_output: str
    model_name: str
    config: dict[str, Any]
    attempts: int
    error: str | None = None
    duration_s: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None

    def request_payload(self) -> dict[str, Any]:
        """Rebuild the exact request body this record was produced by."""
        body = {
            "model": self.config["model"],
            "prompt": self.prompt_text,
            "top_p": self.config["top_p"],
            "max_tokens": self.config["max_tokens"],
        }
        if self.config.get("temperature") is not None:
            body["temperature"] = self.config["temperature"]
        return body


def _extract_text(body: Any) -> str:
    if isinstance(body, dict):
        if isinstance(body.get("text"), str):
            return body["text"]
        choices = body.get("choices")
        if (
            isinstance(choices, list)
            and choices
            and isinstance(choices[0], dict)
            and isinstance(choices[0].get("text"), str)
        ):
            return choices[0]["text"]
    raise ValueError("no text field in response body")


def generate_batch(examples: Sequence, cfg: InferenceConfig) -> list[GenerationRecord]:
    """Send one request per test example; results come back in input order
    regardless of completion order or concurrency level."""
    for example in examples:
        if example.mode != "test":
            raise UsageError(
                f"generate_batch takes test prompts only; segment {example.segment_id} is {example.mode}"
            )
    token = os.environ.get(TOKEN_ENV_VAR)
    headers = {"Authorization": f"Bearer {token}"} if token else {}
    snapshot = cfg.snapshot()
    abort = threading.Event()

    def make_record(example, output: str, attempts: int, error: str | None, started: float):
        return GenerationRecord(
            segment_id=example.segment_id,
            prompt_text=example.rendered_text,
            raw_output=output,
            model_name=cfg.model_name,
            config=snapshot,
            attempts=attempts,
            error=error,
            duration_s=time.monotonic() - started,
        )

    def worker(example):
        started = time.monotonic()
        if abort.is_set():
            return "skipped", None
        payload = cfg.payload(example.rendered_text)
        attempts = 0
        while True:
            attempts += 1
            try:
                response = requests.post(
                    cfg.endpoint_url,
                    json=payload,
                    headers=headers,
                    timeout=cfg.request_timeout,
                )
            except requests.exceptions.ConnectionError as exc:
                if attempts <= cfg.max_retries:
                    time.sleep(cfg.retry_backoff * 2 ** (attempts - 1))
                    continue
                abort.set()
                log.error("segment=%s endpoint_unreachable attempts=%d", example.segment_id, attempts)
                return "unreachable", make_record(
                    example, "", attempts, f"endpoint unreachable after {attempts} attempts: {exc}", started
                )
            except requests.exceptions.Timeout:
                if attempts <= cfg.max_retries:
                    time.sleep(cfg.retry_backoff * 2 ** (attempts - 1))
                    continue
                return "done", make_record(
                    example, "", attempts, f"timed out after {attempts} attempts", started
                )
            if response.status_code in _RETRYABLE_STATUS:
                if attempts <= cfg.max_retries:
                    time.sleep(cfg.retry_backoff * 2 ** (attempts - 1))
                    continue
                return "done", make_record(
                    example, "", attempts,
                    f"HTTP {response.status_code} after {attempts} attempts", started,
                )
            if response.status_code != 200:
                return "done", make_record(
                    example, "", attempts, f"HTTP {response.status_code}", started
                )
            try:
                text = _extract_text(response.json())
            except (ValueError, json.JSONDecodeError) as exc:
                return "done", make_record(
                    example, "", attempts, f"malformed response: {exc}", started
                )
            return "done", make_record(example, text, attempts, None, started)

    with ThreadPoolExecutor(max_workers=cfg.max_concurrent_requests) as pool:
        outcomes = list(pool.map(worker, examples))

    records = [record for status, record in outcomes if status != "skipped"]
    if any(status == "unreachable" for status, _ in outcomes):
        raise EndpointError(
            f"endpoint {cfg.endpoint_url} unreachable; "
            f"{sum(1 for s, r in outcomes if s == 'done')} of {len(examples)} prompts completed",
            partial_records=records,
        )
    failures = sum(1 for record in records if not record.ok)
    if failures:
        log.warning("batch_failures=%d total=%d", failures, len(records))
    return records


# ---------------------------------------------------------------------------
# Serialization

def write_records(path, records: Sequence[GenerationRecord], manifest: dict | None = None) -> None:
    """Records as JSONL (timing excluded; see write_timing_sidecar)."""
    _jsonl.write_jsonl(
        path,
        (
            {
                "segment_id": r.segment_id,
                "prompt": r.prompt_text,
                "output": r.raw_output,
                "model": r.model_name,
                "config": r.config,
                "attempts": r.attempts,
                "error": r.error,
            }
            for r in records
        ),
        manifest=manifest,
    )


def read_records(path) -> list[GenerationRecord]:
    records = []
    for line_number, record in _jsonl.iter_jsonl(path):
        try:
            records.append(
                GenerationRecord(
                    segment_id=record["segment_id"],
                    prompt_text=record["prompt"],
                    raw_output=record["output"],
                    model_name=record["model"],
                    config=record["config"],
                    attempts=record["attempts"],
                    error=record.get("error"),
                )
            )
        except KeyError as exc:
            raise FormatError(f"missing field {exc}", path=path, line=line_number) from exc
    return records


def write_timing_sidecar(path, records: Sequence[GenerationRecord]) -> None:
    _jsonl.write_jsonl(
        path,
        (
            {"segment_id": r.segment_id, "seconds": round(r.duration_s, 6), "attempts": r.attempts}
            for r in records
        ),
    )


def write_run_manifest(
    path,
    cfg: InferenceConfig,
    records: Sequence[GenerationRecord],
    *,
    config_hash: str,
    seed: int,
    aborted: bool = False,
) -> None:
    """Config snapshot plus failure summary for one generation run."""
    manifest = {
        "config": cfg.snapshot(),
        "config_hash": config_hash,
        "seed": seed,
        "records": len(records),
        "errors": sum(1 for r in records if not r.ok),
        "error_segment_ids": [r.segment_id for r in records if not r.ok],
        "aborted": aborted,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
