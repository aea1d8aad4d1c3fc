"""MQM scoring from error-span annotations.

Annotations come in as JSONL records {segment_id, span, start?, end?,
severity, confidence} — the export shape of span-level quality annotators.
Severities reduce to the three-level MIN/MAJ/CRIT scheme with fixed weights
1/5/10, and the score is

    100 * (1 - (10*critical + 5*major + minor) / token_total)

unclamped, so heavily penalized systems can go negative. token_total is a
corpus-level token count whose counting scheme is recorded alongside the
tallies; a per-segment view is available via mqm_per_segment.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from . import _jsonl
from .errors import FormatError, UsageError

log = logging.getLogger(__name__)

SEVERITY_MINOR = "MIN"
SEVERITY_MAJOR = "MAJ"
SEVERITY_CRITICAL = "CRIT"
SEVERITIES = (SEVERITY_MINOR, SEVERITY_MAJOR, SEVERITY_CRITICAL)

# Fixed by the MQM weighting scheme; deliberately not configurable.
SEVERITY_WEIGHTS = {SEVERITY_MINOR: 1, SEVERITY_MAJOR: 5, SEVERITY_CRITICAL: 10}

_SEVERITY_ALIASES = {
    "min": SEVERITY_MINOR,
    "minor": SEVERITY_MINOR,
    "maj": SEVERITY_MAJOR,
    "major": SEVERITY_MAJOR,
    "crit": SEVERITY_CRITICAL,
    "critical": SEVERITY_CRITICAL,
}


def normalize_severity(value) -> str | None:
    """Map a severity label onto MIN/MAJ/CRIT; None when unknown."""
    if not isinstance(value, str):
        return None
    return _SEVERITY_ALIASES.get(value.strip().lower())


@dataclass(frozen=True)
class ErrorSpan:
    segment_id: str
    span_text: str
    severity: str
    confidence: float
    start: int | None = None
    end: int | None = None

    def __post_init__(self):
        if self.severity not in SEVERITIES:
            raise UsageError(f"severity must be one of {SEVERITIES}, got {self.severity!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise UsageError(f"confidence must be in [0,1], got {self.confidence}")
        if (self.start is None) != (self.end is None):
            raise UsageError("start and end offsets must be given together")
        if self.start is not None and not 0 <= self.start < self.end:
            raise UsageError(f"bad span offsets [{self.start}, {self.end})")


@dataclass(frozen=True)
class SeverityCounts:
    minor: int
    major: int
    critical: int
    token_total: int
    counting_scheme: str

    def __post_init__(self):
        if min(self.minor, self.major, self.critical) < 0:
            raise UsageError("severity counts must be nonnegative")
        if self.token_total < 0:
            raise UsageError("token_total must be nonnegative")

    @property
    def penalty(self) -> int:
        return (
            SEVERITY_WEIGHTS[SEVERITY_CRITICAL] * self.critical
            + SEVERITY_WEIGHTS[SEVERITY_MAJOR] * self.major
            + SEVERITY_WEIGHTS[SEVERITY_MINOR] * self.minor
        )

    def to_dict(self) -> dict:
        return {
            "minor": self.minor,
            "major": self.major,
            "critical": self.critical,
            "token_total": self.token_total,
            "counting_scheme": self.counting_scheme,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SeverityCounts":
        return cls(
            minor=data["minor"],
            major=data["major"],
            critical=data["critical"],
            token_total=data["token_total"],
            counting_scheme=data["counting_scheme"],
        )


def load_annotations(path, outputs_by_id: Mapping[str, str] | None = None) -> list[ErrorSpan]:
    """Load spans, rejecting (with a logged count) records whose severity is
    not recognizable, whose confidence is out of [0,1], or whose offsets are
    inconsistent. When ``outputs_by_id`` (segment_id -> MT text) is given,
    spans with offsets must slice their output to span_text."""
    spans: list[ErrorSpan] = []
    rejected = 0
    for line_number, record in _jsonl.iter_jsonl(path):
        try:
            segment_id = record["segment_id"]
            span_text = record["span"]
            raw_severity = record["severity"]
            confidence = record["confidence"]
        except KeyError as exc:
            raise FormatError(f"missing field {exc}", path=path, line=line_number) from exc
        severity = normalize_severity(raw_severity)
        if severity is None:
            rejected += 1
            log.warning("path=%s line=%d rejected_span reason=unknown_severity value=%r",
                        path, line_number, raw_severity)
            continue
        if isinstance(confidence, bool) or not isinstance(confidence, (int, float)):
            rejected += 1
            log.warning("path=%s line=%d rejected_span reason=bad_confidence", path, line_number)
            continue
        try:
            span = ErrorSpan(
                segment_id=segment_id,
                span_text=span_text,
                severity=severity,
                confidence=float(confidence),
                start=record.get("start"),
                end=record.get("end"),
            )
        except UsageError:
            rejected += 1
            log.warning("path=%s line=%d rejected_span reason=invalid", path, line_number)
            continue
        if (
            outputs_by_id is not None
            and span.start is not None
            and (
                span.segment_id not in outputs_by_id
                or outputs_by_id[span.segment_id][span.start : span.end] != span.span_text
            )
        ):
            rejected += 1
            log.warning("path=%s line=%d rejected_span reason=offsets_mismatch", path, line_number)
            continue
        spans.append(span)
    if rejected:
        log.info("path=%s rejected_spans=%d loaded=%d", path, rejected, len(spans))
    return spans


def filter_by_confidence(spans: Sequence[ErrorSpan], threshold: float) -> list[ErrorSpan]:
    """Keep spans with confidence >= threshold, order preserved."""
    if not 0.0 <= threshold <= 1.0:
        raise UsageError(f"threshold must be in [0,1], got {threshold}")
    return [span for span in spans if span.confidence >= threshold]


def tally(spans: Sequence[ErrorSpan], token_total: int, scheme: str) -> SeverityCounts:
    """Count spans by severity against a token denominator."""
    if token_total <= 0:
        raise UsageError(f"token_total must be positive, got {token_total}")
    counts = Counter(span.severity for span in spans)
    return SeverityCounts(
        minor=counts[SEVERITY_MINOR],
        major=counts[SEVERITY_MAJOR],
        critical=counts[SEVERITY_CRITICAL],
        token_total=token_total,
        counting_scheme=scheme,
    )


def mqm_score(counts: SeverityCounts) -> float:
    if counts.token_total <= 0:
        raise UsageError("token_total must be positive for scoring")
    return 100.0 * (1.0 - counts.penalty / counts.token_total)


def mqm_per_segment(
    spans: Sequence[ErrorSpan],
    token_counts: Mapping[str, int],
    scheme: str,
) -> dict[str, float]:
    """Secondary per-segment view: one MQM score per segment id in
    ``token_counts`` (segments without spans score 100)."""
    by_segment: dict[str, list[ErrorSpan]] = {}
    for span in spans:
        if span.segment_id not in token_counts:
            raise UsageError(f"no token count for annotated segment {span.segment_id!r}")
        by_segment.setdefault(span.segment_id, []).append(span)
    scores = {}
    for segment_id, tokens in token_counts.items():
        scores[segment_id] = mqm_score(
            tally(by_segment.get(segment_id, []), tokens, scheme)
        )
    return scores


def write_spans(path, spans: Sequence[ErrorSpan], manifest: dict | None = None) -> None:
    def records():
        for span in spans:
            record = {
                "segment_id": span.segment_id,
                "span": span.span_text,
                "severity": span.severity,
                "confidence": span.confidence,
            }
            if span.start is not None:
                record["start"] = span.start
                record["end"] = span.end
            yield record

    _jsonl.write_jsonl(path, records(), manifest=manifest)
