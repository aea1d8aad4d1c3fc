"""Glossary ingestion, reliability filtering, and strict term matching.

Glossaries are 4-column TSV files: source term, target term, reliability
(1-4 stars), domain id. A converter for TBX term-base exports is included
for producing that TSV from standard terminology dumps.

Matching semantics (shared by the matcher, :func:`term_in_text`, and the
candidate lists rendered into prompts):

* comparison is Unicode-casefolded;
* matches must sit on word boundaries — the characters adjacent to the
  match, if any, must not be letters or digits;
* internal whitespace in a multi-word term matches exactly one space
  (segment text and terms are both whitespace-normalized, so this holds by
  construction);
* a glossary pair is emitted for a segment only when the source term occurs
  in the source text AND the target term occurs in the target text.
"""

from __future__ import annotations

import csv
import logging
import xml.etree.ElementTree as ET
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from . import _jsonl
from .corpus import LanguagePair, ParallelSegment, normalize_text
from .errors import FormatError, UsageError

log = logging.getLogger(__name__)

_XML_LANG = "{http://www.w3.org/XML/1998/namespace}lang"

MIN_RELIABILITY = 1
MAX_RELIABILITY = 4


@dataclass(frozen=True)
class GlossaryEntry:
    """One term pair with its reliability rating and domain tag."""

    source_term: str
    target_term: str
    reliability: int
    domain_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "source_term", normalize_text(self.source_term))
        object.__setattr__(self, "target_term", normalize_text(self.target_term))
        if not self.source_term or not self.target_term:
            raise UsageError("glossary terms must be non-empty")
        if not MIN_RELIABILITY <= self.reliability <= MAX_RELIABILITY:
            raise UsageError(
                f"reliability must be in {MIN_RELIABILITY}..{MAX_RELIABILITY}, "
                f"got {self.reliability}"
            )

    @property
    def key(self) -> tuple[str, str]:
        """Casefolded (source, target) pair; duplicates collapse on this."""
        return (self.source_term.casefold(), self.target_term.casefold())


@dataclass(frozen=True)
class Glossary:
    pair: LanguagePair
    entries: tuple[GlossaryEntry, ...]

    def __post_init__(self):
        seen: set[tuple[str, str]] = set()
        for entry in self.entries:
            if entry.key in seen:
                raise UsageError(
                    f"duplicate glossary pair {entry.source_term!r} -> {entry.target_term!r}"
                )
            seen.add(entry.key)

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def build(cls, pair: LanguagePair, entries: Iterable[GlossaryEntry]) -> "Glossary":
        """Construct a glossary, dropping casefolded duplicate pairs (first wins)."""
        kept: list[GlossaryEntry] = []
        seen: set[tuple[str, str]] = set()
        duplicates = 0
        for entry in entries:
            if entry.key in seen:
                duplicates += 1
                continue
            seen.add(entry.key)
            kept.append(entry)
        if duplicates:
            log.info("pair=%s dropped_duplicate_pairs=%d kept=%d", pair.code, duplicates, len(kept))
        return cls(pair, tuple(kept))


def load_glossary(path, pair: LanguagePair) -> Glossary:
    """Load a 4-column TSV glossary.

    Malformed rows — wrong column count, empty terms, a reliability that is
    not an integer in 1..4 — are skipped with a logged count rather than
    aborting the load. Lines starting with ``#`` are comments. Files that
    are not valid UTF-8 raise FormatError with the offending line number.
    """
    raw_lines = Path(path).read_bytes().splitlines()
    lines: list[str] = []
    for line_number, raw in enumerate(raw_lines, start=1):
        try:
            lines.append(raw.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError("not valid UTF-8", path=path, line=line_number) from exc

    entries: list[GlossaryEntry] = []
    skipped = 0
    for line_number, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        row = next(csv.reader([line], delimiter="\t"))
        if len(row) != 4:
            skipped += 1
            log.warning("path=%s line=%d skipped_row reason=column_count", path, line_number)
            continue
        source_term, target_term, reliability_text, domain_id = row
        try:
            reliability = int(reliability_text)
        except ValueError:
            skipped += 1
            log.warning("path=%s line=%d skipped_row reason=bad_reliability", path, line_number)
            continue
        try:
            entry = GlossaryEntry(source_term, target_term, reliability, domain_id.strip())
        except UsageError:
            skipped += 1
            log.warning("path=%s line=%d skipped_row reason=invalid_entry", path, line_number)
            continue
        entries.append(entry)
    if skipped:
        log.info("path=%s skipped_rows=%d", path, skipped)
    return Glossary.build(pair, entries)


def filter_by_reliability(glossary: Glossary, min_stars: int) -> Glossary:
    """Keep only entries rated at or above ``min_stars`` (1..4)."""
    if not MIN_RELIABILITY <= min_stars <= MAX_RELIABILITY:
        raise UsageError(f"min_stars must be in {MIN_RELIABILITY}..{MAX_RELIABILITY}")
    kept = tuple(e for e in glossary.entries if e.reliability >= min_stars)
    return Glossary(glossary.pair, kept)


# ---------------------------------------------------------------------------
# Matching

def casefold_with_map(text: str) -> tuple[str, list[int]]:
    """Casefold ``text``, returning the folded string and, per folded
    character, the index of the original character it came from (casefolding
    can expand one character into several, e.g. ß -> ss)."""
    folded_chars: list[str] = []
    index_map: list[int] = []
    for index, char in enumerate(text):
        folded = char.casefold()
        folded_chars.append(folded)
        index_map.extend([index] * len(folded))
    return "".join(folded_chars), index_map


def _on_word_boundaries(text: str, start: int, end: int) -> bool:
    if start > 0 and text[start - 1].isalnum():
        return False
    if end < len(text) and text[end].isalnum():
        return False
    return True


class _Automaton:
    """Aho-Corasick automaton over a fixed set of (casefolded) patterns."""

    def __init__(self, patterns: Sequence[str]):
        self._children: list[dict[str, int]] = [{}]
        self._fail: list[int] = [0]
        self._outputs: list[tuple[tuple[int, int], ...]] = [()]
        for pattern_id, pattern in enumerate(patterns):
            node = 0
            for char in pattern:
                next_node = self._children[node].get(char)
                if next_node is None:
                    self._children.append({})
                    self._fail.append(0)
                    self._outputs.append(())
                    next_node = len(self._children) - 1
                    self._children[node][char] = next_node
                node = next_node
            self._outputs[node] += ((pattern_id, len(pattern)),)
        # Breadth-first failure links; outputs are flattened onto each node
        # so the scan never has to walk the failure chain for reporting.
        queue = deque(self._children[0].values())
        while queue:
            node = queue.popleft()
            for char, child in self._children[node].items():
                queue.append(child)
                fail = self._fail[node]
                while fail and char not in self._children[fail]:
                    fail = self._fail[fail]
                fallback = self._children[fail].get(char, 0)
                if fallback != child:
                    self._fail[child] = fallback
                    self._outputs[child] += self._outputs[fallback]

    def iter_matches(self, text: str) -> Iterator[tuple[int, int, int]]:
        """Yield (pattern_id, start, end) for every occurrence, in order of
        match end position."""
        node = 0
        for position, char in enumerate(text):
            while node and char not in self._children[node]:
                node = self._fail[node]
            node = self._children[node].get(char, 0)
            for pattern_id, length in self._outputs[node]:
                yield pattern_id, position - length + 1, position + 1


@dataclass(frozen=True)
class TermPair:
    """A glossary pair realized in a segment.

    ``first_source_offset`` is the character index (into the normalized
    source text) of the first boundary-valid occurrence of the source term;
    it is None for pairs re-read from serialized artifacts, which do not
    store offsets.
    """

    source_term: str
    target_term: str
    first_source_offset: int | None = None


class TermMatcher:
    """Multi-pattern matcher for one glossary.

    Builds one automaton over the source terms and one over the target
    terms; a candidate pair for a segment is any glossary entry whose source
    pattern hits the source text and whose target pattern hits the target
    text, both on word boundaries.
    """

    def __init__(self, glossary: Glossary):
        if not glossary.entries:
            raise UsageError("cannot build a matcher from an empty glossary")
        self.glossary = glossary
        self.pair = glossary.pair
        self._source_patterns: list[str] = []
        self._target_patterns: list[str] = []
        source_ids: dict[str, int] = {}
        target_ids: dict[str, int] = {}
        # entry -> (source pattern id, target pattern id); several entries
        # may share a pattern (same term under casefolding).
        self._entry_patterns: list[tuple[int, int]] = []
        for entry in glossary.entries:
            source_key = entry.source_term.casefold()
            target_key = entry.target_term.casefold()
            if source_key not in source_ids:
                source_ids[source_key] = len(self._source_patterns)
                self._source_patterns.append(source_key)
            if target_key not in target_ids:
                target_ids[target_key] = len(self._target_patterns)
                self._target_patterns.append(target_key)
            self._entry_patterns.append((source_ids[source_key], target_ids[target_key]))
        self._source_automaton = _Automaton(self._source_patterns)
        self._target_automaton = _Automaton(self._target_patterns)

    def find_candidates(self, segment: ParallelSegment) -> list[TermPair]:
        """All glossary pairs realized in the segment, sorted by descending
        source-term length, then lexicographically."""
        if segment.pair != self.pair:
            raise UsageError(
                f"segment pair {segment.pair.code} does not match matcher pair {self.pair.code}"
            )
        folded_source, source_map = casefold_with_map(segment.source_text)
        first_offset: dict[int, int] = {}
        for pattern_id, start, end in self._source_automaton.iter_matches(folded_source):
            if pattern_id not in first_offset and _on_word_boundaries(folded_source, start, end):
                first_offset[pattern_id] = source_map[start]
        folded_target, _ = casefold_with_map(segment.target_text)
        target_hits: set[int] = set()
        for pattern_id, start, end in self._target_automaton.iter_matches(folded_target):
            if pattern_id not in target_hits and _on_word_boundaries(folded_target, start, end):
                target_hits.add(pattern_id)

        found = [
            TermPair(entry.source_term, entry.target_term, first_offset[source_id])
            for entry, (source_id, target_id) in zip(self.glossary.entries, self._entry_patterns)
            if source_id in first_offset and target_id in target_hits
        ]
        found.sort(key=_candidate_sort_key)
        return found


def _candidate_sort_key(pair: TermPair):
    return (
        -len(pair.source_term),
        pair.source_term.casefold(),
        pair.target_term.casefold(),
        pair.source_term,
        pair.target_term,
    )


def build_matcher(glossary: Glossary) -> TermMatcher:
    return TermMatcher(glossary)


def term_in_text(term: str, text: str) -> bool:
    """Whether ``term`` occurs in ``text`` under the matching semantics
    (casefolded, word-boundary-anchored, single internal spaces)."""
    pattern = normalize_text(term).casefold()
    if not pattern:
        raise UsageError("term must be non-empty")
    haystack, _ = casefold_with_map(normalize_text(text))
    start = haystack.find(pattern)
    while start != -1:
        if _on_word_boundaries(haystack, start, start + len(pattern)):
            return True
        start = haystack.find(pattern, start + 1)
    return False


# ---------------------------------------------------------------------------
# Serialization

def write_candidates(
    path,
    candidates_by_segment: Sequence[tuple[str, Sequence[TermPair]]],
    manifest: dict | None = None,
) -> None:
    """Write per-segment candidate lists as JSONL records
    {segment_id, pairs: [{src, tgt}, ...]}."""
    records = (
        {
            "segment_id": segment_id,
            "pairs": [{"src": p.source_term, "tgt": p.target_term} for p in pairs],
        }
        for segment_id, pairs in candidates_by_segment
    )
    _jsonl.write_jsonl(path, records, manifest=manifest)


def read_candidates(path) -> list[tuple[str, list[TermPair]]]:
    result = []
    for line_number, record in _jsonl.iter_jsonl(path):
        try:
            pairs = [TermPair(p["src"], p["tgt"]) for p in record["pairs"]]
            result.append((record["segment_id"], pairs))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bad candidate record: {exc}", path=path, line=line_number) from exc
    return result


def write_glossary_tsv(path, entries: Iterable[GlossaryEntry], manifest: dict | None = None) -> None:
    """Write entries in the 4-column TSV format load_glossary reads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        if manifest is not None:
            handle.write("# " + _jsonl.dumps(manifest) + "\n")
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        for entry in entries:
            writer.writerow(
                [entry.source_term, entry.target_term, entry.reliability, entry.domain_id]
            )


# ---------------------------------------------------------------------------
# TBX conversion

def tbx_to_entries(path, pair: LanguagePair, domain_id: str | None = None) -> list[GlossaryEntry]:
    """Convert a TBX term-base export into glossary entries.

    For every concept (``termEntry``) holding terms in both languages of the
    pair, all source-term x target-term combinations are emitted; the pair's
    reliability is the minimum of the two term reliability codes (missing
    codes count as 1). ``domain_id``, when given, keeps only concepts whose
    subjectField contains that id.
    """
    try:
        tree = ET.parse(path)
    except ET.ParseError as exc:
        raise FormatError(f"not well-formed XML: {exc}", path=path) from exc
    entries: list[GlossaryEntry] = []
    for concept in tree.getroot().iter("termEntry"):
        subject = concept.findtext("descrip[@type='subjectField']", default="")
        if domain_id is not None:
            subject_ids = {part.strip() for part in subject.replace(";", ",").split(",")}
            if domain_id not in subject_ids:
                continue
        terms_by_lang: dict[str, list[tuple[str, int]]] = {}
        for lang_set in concept.iter("langSet"):
            lang = lang_set.get(_XML_LANG, "").lower()
            for tig in lang_set.iter("tig"):
                term = normalize_text(tig.findtext("term", default=""))
                if not term:
                    continue
                reliability_text = tig.findtext("termNote[@type='reliabilityCode']", default="1")
                try:
                    reliability = int(reliability_text)
                except ValueError:
                    reliability = MIN_RELIABILITY
                reliability = min(max(reliability, MIN_RELIABILITY), MAX_RELIABILITY)
                terms_by_lang.setdefault(lang, []).append((term, reliability))
        for source_term, source_rel in terms_by_lang.get(pair.source_lang, []):
            for target_term, target_rel in terms_by_lang.get(pair.target_lang, []):
                entries.append(
                    GlossaryEntry(
                        source_term,
                        target_term,
                        min(source_rel, target_rel),
                        subject.strip(),
                    )
                )
    return entries
