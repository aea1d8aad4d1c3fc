"""JSON Lines helpers shared by the artifact writers.

Every artifact file starts with a manifest record (``record_type:
"manifest"``) carrying at least the config hash and seed, so a file can be
traced back to the run that produced it. Readers skip the manifest
transparently; :func:`read_manifest` retrieves it.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable

from .errors import FormatError

MANIFEST_TYPE = "manifest"


def dumps(record: dict[str, Any]) -> str:
    # Stable key order and no trailing spaces: artifacts must be
    # byte-identical across runs with the same config and seed.
    return json.dumps(record, ensure_ascii=False, sort_keys=True, separators=(",", ": "))


def write_jsonl(path, records: Iterable[dict[str, Any]], manifest: dict[str, Any] | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        if manifest is not None:
            handle.write(dumps({"record_type": MANIFEST_TYPE, **manifest}) + "\n")
        for record in records:
            handle.write(dumps(record) + "\n")


def iter_jsonl(path) -> Iterable[tuple[int, dict[str, Any]]]:
    """Yield (line_number, record) for every data record, skipping the manifest."""
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", path=path, line=line_number) from exc
            if not isinstance(record, dict):
                raise FormatError("record is not a JSON object", path=path, line=line_number)
            if record.get("record_type") == MANIFEST_TYPE:
                continue
            yield line_number, record


def read_jsonl(path) -> list[dict[str, Any]]:
    return [record for _, record in iter_jsonl(path)]


def read_manifest(path) -> dict[str, Any] | None:
    """Return the manifest record of a JSONL artifact, or None if absent."""
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", path=path, line=1) from exc
            if isinstance(record, dict) and record.get("record_type") == MANIFEST_TYPE:
                return {k: v for k, v in record.items() if k != "record_type"}
            return None
    return None
