"""Corpus-level surface metrics, terminology accuracy, and significance.

BLEU uses the standard international (mteval-13a-compatible) tokenization —
punctuation split off, digit-adjacent periods/commas kept — and no smoothing:
any n-gram order with zero matches scores 0.0, and identical corpora score
exactly 100.0. chrF is the character n-gram F-score (orders 1..6, beta=2)
with all whitespace removed before n-gram extraction, likewise unsmoothed.

Neural metric scores (COMET and friends) are never computed here; they are
ingested from external score files and merged into reports.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from statistics import fmean
from typing import Sequence

from . import _jsonl
from .corpus import LanguagePair, ParallelSegment
from .errors import FormatError, UsageError
from .postprocess import ModelOutput
from .prng import SplitMix64
from .terminology import TermMatcher, term_in_text

BLEU_MAX_ORDER = 4
CHRF_MAX_ORDER = 6
CHRF_BETA = 2.0

_13A_PUNCT = re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])")
_13A_PERIOD_BEFORE = re.compile(r"([^0-9])([\.,])")
_13A_PERIOD_AFTER = re.compile(r"([\.,])([^0-9])")
_13A_DASH = re.compile(r"([0-9])(-)")
_WS = re.compile(r"\s+")


def tokenize_13a(line: str) -> list[str]:
    """mteval-13a-compatible tokenization used for BLEU."""
    norm = line.replace("<skipped>", "")
    norm = norm.replace("-\n", "").replace("\n", " ")
    norm = (
        norm.replace("&quot;", '"')
        .replace("&amp;", "&")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
    )
    norm = f" {norm} "
    norm = _13A_PUNCT.sub(r" \1 ", norm)
    norm = _13A_PERIOD_BEFORE.sub(r"\1 \2 ", norm)
    norm = _13A_PERIOD_AFTER.sub(r" \1 \2", norm)
    norm = _13A_DASH.sub(r"\1 \2 ", norm)
    return _WS.sub(" ", norm).strip().split()


def _check_paired(hypotheses: Sequence[str], references: Sequence[str]) -> None:
    if len(hypotheses) != len(references):
        raise UsageError(
            f"hypothesis/reference length mismatch: {len(hypotheses)} vs {len(references)}"
        )
    if not hypotheses:
        raise UsageError("need at least one hypothesis/reference pair")


def bleu(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    """Corpus BLEU: modified n-gram precisions for n=1..4, geometric mean,
    exponential brevity penalty, scale 0..100."""
    _check_paired(hypotheses, references)
    matches = [0] * BLEU_MAX_ORDER
    totals = [0] * BLEU_MAX_ORDER
    hypothesis_length = 0
    reference_length = 0
    for hypothesis, reference in zip(hypotheses, references):
        hyp_tokens = tokenize_13a(hypothesis)
        ref_tokens = tokenize_13a(reference)
        hypothesis_length += len(hyp_tokens)
        reference_length += len(ref_tokens)
        for n in range(1, BLEU_MAX_ORDER + 1):
            hyp_ngrams = Counter(
                tuple(hyp_tokens[i : i + n]) for i in range(len(hyp_tokens) - n + 1)
            )
            ref_ngrams = Counter(
                tuple(ref_tokens[i : i + n]) for i in range(len(ref_tokens) - n + 1)
            )
            totals[n - 1] += max(len(hyp_tokens) - n + 1, 0)
            matches[n - 1] += sum((hyp_ngrams & ref_ngrams).values())
    if hypothesis_length == 0 or any(m == 0 for m in matches):
        return 0.0
    log_precision_sum = sum(
        math.log(m / t) for m, t in zip(matches, totals)
    ) / BLEU_MAX_ORDER
    if hypothesis_length >= reference_length:
        brevity_penalty = 1.0
    else:
        brevity_penalty = math.exp(1 - reference_length / hypothesis_length)
    return 100.0 * brevity_penalty * math.exp(log_precision_sum)


def _char_ngrams(text: str, n: int) -> Counter:
    return Counter(text[i : i + n] for i in range(len(text) - n + 1))


def chrf(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    """Corpus chrF: per-order F-scores (beta=2) over character n-grams 1..6
    with whitespace removed, averaged over the orders present in the data."""
    _check_paired(hypotheses, references)
    matches = [0] * CHRF_MAX_ORDER
    hyp_totals = [0] * CHRF_MAX_ORDER
    ref_totals = [0] * CHRF_MAX_ORDER
    for hypothesis, reference in zip(hypotheses, references):
        hyp_chars = "".join(hypothesis.split())
        ref_chars = "".join(reference.split())
        for n in range(1, CHRF_MAX_ORDER + 1):
            hyp_ngrams = _char_ngrams(hyp_chars, n)
            ref_ngrams = _char_ngrams(ref_chars, n)
            matches[n - 1] += sum((hyp_ngrams & ref_ngrams).values())
            hyp_totals[n - 1] += sum(hyp_ngrams.values())
            ref_totals[n - 1] += sum(ref_ngrams.values())
    beta_squared = CHRF_BETA**2
    f_scores = []
    for match, hyp_total, ref_total in zip(matches, hyp_totals, ref_totals):
        if hyp_total == 0 and ref_total == 0:
            continue  # order longer than anything in the corpus
        precision = match / hyp_total if hyp_total else 0.0
        recall = match / ref_total if ref_total else 0.0
        if precision + recall == 0.0:
            f_scores.append(0.0)
        else:
            f_scores.append(
                (1 + beta_squared) * precision * recall / (beta_squared * precision + recall)
            )
    if not f_scores:
        return 0.0
    return 100.0 * fmean(f_scores)


def term_accuracy(
    outputs: Sequence[ModelOutput],
    references: Sequence[ParallelSegment],
    matcher: TermMatcher,
) -> tuple[float, int, int]:
    """Micro-averaged terminology accuracy.

    The expected set per segment is what strict matching finds on (source,
    reference); a pair counts as correct when its target term occurs in the
    cleaned MT output under the same matching semantics. Returns (accuracy,
    correct, total); a test set with zero expected pairs scores 0.0.
    """
    outputs_by_id = {output.segment_id: output for output in outputs}
    if len(outputs_by_id) != len(outputs):
        raise UsageError("duplicate segment ids in outputs")
    reference_ids = {segment.id for segment in references}
    if reference_ids != set(outputs_by_id):
        missing = sorted(reference_ids - set(outputs_by_id))[:5]
        extra = sorted(set(outputs_by_id) - reference_ids)[:5]
        raise UsageError(
            f"outputs and references are not aligned (missing={missing}, extra={extra})"
        )
    correct = 0
    total = 0
    for segment in references:
        expected = matcher.find_candidates(segment)
        if not expected:
            continue
        cleaned = outputs_by_id[segment.id].cleaned_text
        total += len(expected)
        correct += sum(1 for pair in expected if term_in_text(pair.target_term, cleaned))
    accuracy = correct / total if total else 0.0
    return accuracy, correct, total


def significance_test(
    scores_a: Sequence[float], scores_b: Sequence[float], resamples: int, seed: int
) -> float:
    """Paired approximate randomization test on the difference of means.

    Per resample, each aligned score pair is swapped with probability 1/2;
    the p-value is the add-one-smoothed fraction of resamples whose absolute
    mean difference reaches the observed one. Identical inputs give exactly
    1.0. Deterministic given the seed.
    """
    if len(scores_a) != len(scores_b):
        raise UsageError(
            f"score list length mismatch: {len(scores_a)} vs {len(scores_b)}"
        )
    if len(scores_a) < 2:
        raise UsageError("need at least two aligned scores")
    if resamples < 1:
        raise UsageError("resamples must be positive")
    n = len(scores_a)
    observed = abs(fmean(scores_a) - fmean(scores_b))
    rng = SplitMix64(seed)
    at_least_as_extreme = 0
    for _ in range(resamples):
        difference_total = 0.0
        for a, b in zip(scores_a, scores_b):
            if rng.next_u64() & 1:
                difference_total += b - a
            else:
                difference_total += a - b
        if abs(difference_total) / n >= observed:
            at_least_as_extreme += 1
    return (at_least_as_extreme + 1) / (resamples + 1)


@dataclass(frozen=True)
class ScoreReport:
    """Per (system, pair) evaluation summary."""

    pair: LanguagePair
    system: str
    bleu: float
    chrf: float
    term_accuracy: float
    term_correct: int
    term_total: int
    external_scores: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.system:
            raise UsageError("system name must be non-empty")
        if not 0.0 <= self.bleu <= 100.0:
            raise UsageError(f"bleu out of range: {self.bleu}")
        if not 0.0 <= self.chrf <= 100.0:
            raise UsageError(f"chrf out of range: {self.chrf}")
        if self.term_correct > self.term_total or self.term_correct < 0:
            raise UsageError("term_correct must be in 0..term_total")
        if self.term_total > 0:
            expected = self.term_correct / self.term_total
            if abs(self.term_accuracy - expected) > 1e-9:
                raise UsageError("term_accuracy does not equal term_correct/term_total")
        elif self.term_accuracy != 0.0:
            raise UsageError("term_accuracy must be 0.0 when term_total is 0")

    def to_dict(self) -> dict:
        return {
            "pair": self.pair.code,
            "system": self.system,
            "bleu": self.bleu,
            "chrf": self.chrf,
            "term_accuracy": self.term_accuracy,
            "term_correct": self.term_correct,
            "term_total": self.term_total,
            "external_scores": dict(self.external_scores),
        }

    @classmethod
    def from_dict(cls, data: dict, pair: LanguagePair) -> "ScoreReport":
        return cls(
            pair=pair,
            system=data["system"],
            bleu=data["bleu"],
            chrf=data["chrf"],
            term_accuracy=data["term_accuracy"],
            term_correct=data["term_correct"],
            term_total=data["term_total"],
            external_scores=dict(data.get("external_scores", {})),
        )


def load_external_scores(path) -> dict[str, float]:
    """Mean per metric name over a JSONL file of {segment_id, name, value}."""
    values: dict[str, list[float]] = {}
    for line_number, record in _jsonl.iter_jsonl(path):
        try:
            name = record["name"]
            value = record["value"]
        except KeyError as exc:
            raise FormatError(f"missing field {exc}", path=path, line=line_number) from exc
        if not isinstance(name, str) or not name:
            raise FormatError("name must be a non-empty string", path=path, line=line_number)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise FormatError(f"value must be numeric, got {value!r}", path=path, line=line_number)
        values.setdefault(name, []).append(float(value))
    return {name: fmean(vals) for name, vals in sorted(values.items())}
