"""Parallel corpus ingestion, validation, and deterministic splitting.

Input corpora are line-aligned plain-text file pairs (one segment per line,
line N of the source file translating to line N of the target file). All
segment text is whitespace-normalized on construction — runs of whitespace
collapse to single spaces and the ends are trimmed — so downstream matching
and prompt rendering always see one canonical form.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from . import _jsonl
from .errors import AlignmentError, ConfigurationError, FormatError, UsageError
from .prng import seeded_permutation, seeded_shuffle

log = logging.getLogger(__name__)

_WS_RUN = re.compile(r"\s+")

# Display names rendered verbatim into prompts ("English:", "Spanish:").
DISPLAY_NAMES = {
    "en": "English",
    "es": "Spanish",
    "de": "German",
    "ro": "Romanian",
    "fr": "French",
    "it": "Italian",
    "pt": "Portuguese",
    "nl": "Dutch",
}


def normalize_text(text: str) -> str:
    """Collapse whitespace runs to single spaces and trim both ends."""
    return _WS_RUN.sub(" ", text).strip()


@dataclass(frozen=True)
class LanguagePair:
    """A translation direction with the display names used in prompts."""

    source_lang: str
    target_lang: str
    source_name: str
    target_name: str

    def __post_init__(self):
        if not self.source_lang or not self.target_lang:
            raise ConfigurationError("language codes must be non-empty")
        if self.source_lang == self.target_lang:
            raise ConfigurationError(
                f"source and target language are both {self.source_lang!r}"
            )
        if not self.source_name or not self.target_name:
            raise ConfigurationError("language display names must be non-empty")

    @property
    def code(self) -> str:
        return f"{self.source_lang}-{self.target_lang}"

    @classmethod
    def from_code(
        cls,
        code: str,
        source_name: str | None = None,
        target_name: str | None = None,
    ) -> "LanguagePair":
        source_lang, sep, target_lang = code.partition("-")
        if not sep or not source_lang or not target_lang:
            raise ConfigurationError(f"language pair {code!r} is not of the form xx-yy")
        source_name = source_name or DISPLAY_NAMES.get(source_lang)
        target_name = target_name or DISPLAY_NAMES.get(target_lang)
        if source_name is None or target_name is None:
            raise ConfigurationError(
                f"no display name known for pair {code!r}; "
                "provide source/target names explicitly"
            )
        return cls(source_lang, target_lang, source_name, target_name)


@dataclass(frozen=True)
class ParallelSegment:
    """One aligned sentence pair. Text is normalized at construction."""

    id: str
    pair: LanguagePair
    source_text: str
    target_text: str

    def __post_init__(self):
        object.__setattr__(self, "source_text", normalize_text(self.source_text))
        object.__setattr__(self, "target_text", normalize_text(self.target_text))
        if not self.id:
            raise UsageError("segment id must be non-empty")
        if not self.source_text or not self.target_text:
            raise UsageError(f"segment {self.id!r} has an empty side")


@dataclass(frozen=True)
class SplitSpec:
    """Per-pair split sizes plus the seed that fixes the assignment."""

    tuning_size: int
    validation_size: int
    test_size: int
    seed: int

    def __post_init__(self):
        for name in ("tuning_size", "validation_size", "test_size"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")

    @property
    def total(self) -> int:
        return self.tuning_size + self.validation_size + self.test_size


def load_parallel(source_path, target_path, pair: LanguagePair) -> list[ParallelSegment]:
    """Load a line-aligned file pair into segments.

    Lines that are empty (after whitespace normalization) on either side are
    dropped, with the count logged; dropped lines still consume their line
    index, so segment ids always equal the 0-based line number in the input
    files. Files with different line counts raise AlignmentError.
    """
    source_lines = Path(source_path).read_text(encoding="utf-8").splitlines()
    target_lines = Path(target_path).read_text(encoding="utf-8").splitlines()
    if len(source_lines) != len(target_lines):
        raise AlignmentError(
            f"line counts differ: {source_path} has {len(source_lines)}, "
            f"{target_path} has {len(target_lines)}"
        )
    segments = []
    dropped = 0
    for index, (source_line, target_line) in enumerate(zip(source_lines, target_lines)):
        source_text = normalize_text(source_line)
        target_text = normalize_text(target_line)
        if not source_text or not target_text:
            dropped += 1
            continue
        segments.append(ParallelSegment(str(index), pair, source_text, target_text))
    if dropped:
        log.info("pair=%s dropped_empty_lines=%d kept=%d", pair.code, dropped, len(segments))
    return segments


def _check_unique_ids(segments: Sequence[ParallelSegment]) -> None:
    seen: set[str] = set()
    for segment in segments:
        if segment.id in seen:
            raise UsageError(f"duplicate segment id {segment.id!r}")
        seen.add(segment.id)


def split_corpus(
    segments: Sequence[ParallelSegment], spec: SplitSpec
) -> tuple[list[ParallelSegment], list[ParallelSegment], list[ParallelSegment]]:
    """Partition segments into (tuning, validation, test) sets.

    The assignment is a seeded permutation of the input followed by slicing,
    so it depends only on the input order and the seed. The three sets are
    disjoint by construction; leftover segments beyond the requested sizes
    are discarded.
    """
    _check_unique_ids(segments)
    if spec.total > len(segments):
        raise ConfigurationError(
            f"split needs {spec.total} segments but corpus has {len(segments)}"
        )
    order = seeded_permutation(len(segments), spec.seed)
    shuffled = [segments[i] for i in order]
    tuning = shuffled[: spec.tuning_size]
    validation = shuffled[spec.tuning_size : spec.tuning_size + spec.validation_size]
    test = shuffled[spec.tuning_size + spec.validation_size : spec.total]
    return tuning, validation, test


def merge_tuning_sets(
    tuning_sets: Sequence[Sequence[ParallelSegment]], seed: int
) -> list[ParallelSegment]:
    """Interleave per-pair tuning sets into one shuffled multilingual set.

    Segment ids are re-qualified as ``<pair-code>:<id>`` so ids stay unique
    across pairs; the final order is a seeded shuffle of the concatenation.
    """
    if not tuning_sets or all(len(s) == 0 for s in tuning_sets):
        raise ConfigurationError("merge needs at least one non-empty tuning set")
    merged = [
        replace(segment, id=f"{segment.pair.code}:{segment.id}")
        for tuning_set in tuning_sets
        for segment in tuning_set
    ]
    _check_unique_ids(merged)
    return seeded_shuffle(merged, seed)


# ---------------------------------------------------------------------------
# Serialization: {id, pair, split, source, target} records, one per segment.

def write_segments(
    path,
    segments_by_split: dict[str, Sequence[ParallelSegment]],
    manifest: dict | None = None,
) -> None:
    """Write segments as JSONL, labelled with their split name (or "")."""

    def records() -> Iterable[dict]:
        for split_name, segments in segments_by_split.items():
            for segment in segments:
                yield {
                    "id": segment.id,
                    "pair": segment.pair.code,
                    "split": split_name,
                    "source": segment.source_text,
                    "target": segment.target_text,
                }

    _jsonl.write_jsonl(path, records(), manifest=manifest)


def read_segments(path, pair: LanguagePair, split: str | None = None) -> list[ParallelSegment]:
    """Read segments back, optionally keeping only one split label."""
    segments = []
    for line_number, record in _jsonl.iter_jsonl(path):
        try:
            record_pair = record["pair"]
            if record_pair != pair.code:
                raise FormatError(
                    f"record pair {record_pair!r} does not match {pair.code!r}",
                    path=path,
                    line=line_number,
                )
            if split is not None and record.get("split") != split:
                continue
            segments.append(
                ParallelSegment(record["id"], pair, record["source"], record["target"])
            )
        except KeyError as exc:
            raise FormatError(f"missing field {exc}", path=path, line=line_number) from exc
    return segments
