"""CSV and Markdown result tables.

Four tables, shaped like the usual MT-evaluation layout: surface metrics
(BLEU/chrF plus any externally ingested scores such as COMET or QE) per
system and pair, terminology accuracy, MQM severity counts, and MQM scores.
Rows are systems (sorted), column groups are language pairs (sorted), so
output is deterministic regardless of input order. Every file carries a
leading ``#`` manifest comment; the Markdown report states the manifest in
its footer.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

from . import _jsonl
from .metrics import ScoreReport
from .mqm import SeverityCounts, mqm_score


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence[str]], manifest: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        if manifest is not None:
            handle.write("# " + _jsonl.dumps(manifest) + "\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def markdown_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = [
        "| " + " | ".join(header) + " |",
        "| " + " | ".join("---" for _ in header) + " |",
    ]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return "\n".join(lines)


def _systems_and_pairs(reports: Sequence[ScoreReport]) -> tuple[list[str], list[str]]:
    systems = sorted({r.system for r in reports})
    pairs = sorted({r.pair.code for r in reports})
    return systems, pairs


def build_metric_table(reports: Sequence[ScoreReport]) -> tuple[list[str], list[list[str]]]:
    """BLEU, chrF, and any external score names, grouped per pair."""
    systems, pairs = _systems_and_pairs(reports)
    external_names = sorted({name for r in reports for name in r.external_scores})
    by_key = {(r.system, r.pair.code): r for r in reports}
    header = ["system"]
    for pair in pairs:
        header.extend([f"{pair} BLEU", f"{pair} chrF"])
        header.extend(f"{pair} {name}" for name in external_names)
    rows = []
    for system in systems:
        row = [system]
        for pair in pairs:
            report = by_key.get((system, pair))
            if report is None:
                row.extend([""] * (2 + len(external_names)))
                continue
            row.extend([_fmt(report.bleu), _fmt(report.chrf)])
            row.extend(
                _fmt(report.external_scores[name]) if name in report.external_scores else ""
                for name in external_names
            )
        rows.append(row)
    return header, rows


def build_term_accuracy_table(reports: Sequence[ScoreReport]) -> tuple[list[str], list[list[str]]]:
    systems, pairs = _systems_and_pairs(reports)
    by_key = {(r.system, r.pair.code): r for r in reports}
    header = ["system"]
    for pair in pairs:
        header.extend([f"{pair} accuracy", f"{pair} correct", f"{pair} expected"])
    rows = []
    for system in systems:
        row = [system]
        for pair in pairs:
            report = by_key.get((system, pair))
            if report is None:
                row.extend(["", "", ""])
            else:
                row.extend(
                    [_fmt(report.term_accuracy), str(report.term_correct), str(report.term_total)]
                )
        rows.append(row)
    return header, rows


def build_mqm_counts_table(
    entries: Sequence[tuple[str, str, SeverityCounts]],
) -> tuple[list[str], list[list[str]]]:
    """entries: (system, pair_code, counts)."""
    systems = sorted({system for system, _, _ in entries})
    pairs = sorted({pair for _, pair, _ in entries})
    by_key = {(system, pair): counts for system, pair, counts in entries}
    header = ["system"]
    for pair in pairs:
        header.extend([f"{pair} MIN", f"{pair} MAJ", f"{pair} CRIT", f"{pair} tokens"])
    rows = []
    for system in systems:
        row = [system]
        for pair in pairs:
            counts = by_key.get((system, pair))
            if counts is None:
                row.extend(["", "", "", ""])
            else:
                row.extend(
                    [str(counts.minor), str(counts.major), str(counts.critical), str(counts.token_total)]
                )
        rows.append(row)
    return header, rows


def build_mqm_score_table(
    entries: Sequence[tuple[str, str, SeverityCounts]],
) -> tuple[list[str], list[list[str]]]:
    systems = sorted({system for system, _, _ in entries})
    pairs = sorted({pair for _, pair, _ in entries})
    by_key = {(system, pair): counts for system, pair, counts in entries}
    header = ["system"] + [f"{pair} MQM" for pair in pairs]
    rows = []
    for system in systems:
        row = [system]
        for pair in pairs:
            counts = by_key.get((system, pair))
            row.append("" if counts is None else _fmt(mqm_score(counts)))
        rows.append(row)
    return header, rows


def write_report_files(
    directory,
    reports: Sequence[ScoreReport],
    mqm_entries: Sequence[tuple[str, str, SeverityCounts]],
    manifest: dict | None = None,
) -> list[Path]:
    """Write metrics/term-accuracy/MQM CSVs plus a combined report.md;
    returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    sections: list[tuple[str, list[str], list[list[str]]]] = []

    if reports:
        header, rows = build_metric_table(reports)
        write_csv(directory / "metrics.csv", header, rows, manifest=manifest)
        written.append(directory / "metrics.csv")
        sections.append(("Surface metrics", header, rows))

        header, rows = build_term_accuracy_table(reports)
        write_csv(directory / "term_accuracy.csv", header, rows, manifest=manifest)
        written.append(directory / "term_accuracy.csv")
        sections.append(("Terminology accuracy", header, rows))

    if mqm_entries:
        header, rows = build_mqm_counts_table(mqm_entries)
        write_csv(directory / "mqm_counts.csv", header, rows, manifest=manifest)
        written.append(directory / "mqm_counts.csv")
        sections.append(("MQM severity counts", header, rows))

        header, rows = build_mqm_score_table(mqm_entries)
        write_csv(directory / "mqm_scores.csv", header, rows, manifest=manifest)
        written.append(directory / "mqm_scores.csv")
        sections.append(("MQM scores", header, rows))

    parts = ["# Evaluation report", ""]
    for title, header, rows in sections:
        parts.extend([f"## {title}", "", markdown_table(header, rows), ""])
    if manifest is not None:
        parts.extend(["---", "", "Manifest: `" + _jsonl.dumps(manifest) + "`", ""])
    report_path = directory / "report.md"
    report_path.write_text("\n".join(parts), encoding="utf-8", newline="\n")
    written.append(report_path)
    return written
