"""Command-line pipeline orchestration.

Subcommands walk the pipeline: ingest (corpora + glossaries in, validated
artifacts out), build (splits, candidate matching, rendered datasets),
translate (batch generation against the endpoint, then post-processing),
postprocess (re-run cleaning/counting from stored generations), score
(metrics, terminology accuracy, MQM), report (regenerate tables from stored
score files).

Exit codes: 0 success; 1 usage or configuration error; 2 broken input data
or I/O failure; 3 inference endpoint failure. Logs go to standard error;
data goes to files and standard output only. Every artifact carries a
manifest with the resolved-config hash and the seed, and every subcommand
is re-runnable: same config and seed give byte-identical artifacts (timing
lives in a separate sidecar).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus, metrics, mqm, postprocess, promptgen, report, runner, terminology
from .config import PairConfig, PipelineConfig, load_config
from .errors import DataError, EndpointError, UsageError

log = logging.getLogger(__name__)


class Layout:
    """Artifact paths under the configured output directory."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def corpus(self, code: str) -> Path:
        return self.root / "corpus" / f"{code}.jsonl"

    def glossary(self, code: str) -> Path:
        return self.root / "glossary" / f"{code}.tsv"

    def splits(self, code: str) -> Path:
        return self.root / "splits" / f"{code}.jsonl"

    def train_dataset(self, code: str) -> Path:
        return self.root / "datasets" / f"train-{code}.jsonl"

    def test_dataset(self, code: str) -> Path:
        return self.root / "datasets" / f"test-{code}.jsonl"

    def train_merged(self) -> Path:
        return self.root / "datasets" / "train-merged.jsonl"

    def train_merged_text(self) -> Path:
        return self.root / "datasets" / "train-merged.txt"

    def candidates(self, code: str, mode: str) -> Path:
        return self.root / "candidates" / f"{code}.{mode}.jsonl"

    def generations(self, code: str) -> Path:
        return self.root / "generations" / f"{code}.jsonl"

    def generation_manifest(self, code: str) -> Path:
        return self.root / "generations" / f"{code}.manifest.json"

    def timing(self, code: str) -> Path:
        return self.root / "generations" / f"{code}.timing.jsonl"

    def outputs(self, code: str) -> Path:
        return self.root / "outputs" / f"{code}.jsonl"

    def totals(self, code: str) -> Path:
        return self.root / "outputs" / f"{code}.totals.json"

    def score_file(self, system: str, code: str) -> Path:
        return self.root / "scores" / f"{system}.{code}.json"

    def scores_dir(self) -> Path:
        return self.root / "scores"

    def reports_dir(self) -> Path:
        return self.root / "reports"


def _require(path: Path, produced_by: str) -> Path:
    if not path.is_file():
        raise UsageError(f"missing artifact {path}; run `glossmt {produced_by}` first")
    return path


def _write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Subcommands

def cmd_ingest(config: PipelineConfig, pair_code: str | None = None) -> int:
    layout = Layout(config.output_dir)
    base_manifest = config.manifest()
    for pair_config in config.select_pairs(pair_code):
        code = pair_config.pair.code
        segments = corpus.load_parallel(
            pair_config.source_path, pair_config.target_path, pair_config.pair
        )
        corpus.write_segments(
            layout.corpus(code),
            {"": segments},
            manifest={**base_manifest, "pair": code, "segments": len(segments)},
        )
        glossary = terminology.load_glossary(pair_config.glossary_path, pair_config.pair)
        filtered = terminology.filter_by_reliability(glossary, config.min_stars)
        terminology.write_glossary_tsv(
            layout.glossary(code),
            filtered.entries,
            manifest={
                **base_manifest,
                "pair": code,
                "entries": len(filtered),
                "loaded": len(glossary),
                "min_stars": config.min_stars,
            },
        )
        print(
            f"{code}: segments={len(segments)} "
            f"glossary_entries={len(filtered)} (loaded {len(glossary)}, "
            f"min_stars={config.min_stars})"
        )
    return 0


def _load_matcher(layout: Layout, pair_config: PairConfig) -> terminology.TermMatcher:
    glossary_path = _require(layout.glossary(pair_config.pair.code), "ingest")
    glossary = terminology.load_glossary(glossary_path, pair_config.pair)
    return terminology.build_matcher(glossary)


def cmd_build(config: PipelineConfig, pair_code: str | None = None) -> int:
    layout = Layout(config.output_dir)
    template = config.template()
    base_manifest = config.manifest()
    selected = config.select_pairs(pair_code)
    per_pair_tuning = []
    matchers: dict[str, terminology.TermMatcher] = {}
    for pair_config in selected:
        code = pair_config.pair.code
        segments = corpus.read_segments(_require(layout.corpus(code), "ingest"), pair_config.pair)
        tuning, validation, test = corpus.split_corpus(segments, config.split)
        corpus.write_segments(
            layout.splits(code),
            {"tuning": tuning, "validation": validation, "test": test},
            manifest={**base_manifest, "pair": code},
        )
        matcher = _load_matcher(layout, pair_config)
        matchers[code] = matcher
        train = promptgen.build_dataset(tuning, matcher, template, "train")
        test_prompts = promptgen.build_dataset(test, matcher, template, "test")
        for mode, examples, path in (
            ("train", train, layout.train_dataset(code)),
            ("test", test_prompts, layout.test_dataset(code)),
        ):
            promptgen.write_dataset(
                path,
                examples,
                manifest={**base_manifest, "pair": code, "family": template.family_id, "mode": mode},
            )
            terminology.write_candidates(
                layout.candidates(code, mode),
                [(e.segment_id, e.term_pairs) for e in examples],
                manifest={**base_manifest, "pair": code, "mode": mode},
            )
        per_pair_tuning.append(tuning)
        stats = promptgen.dataset_stats(train)
        coverage = stats["with_terms"] / stats["examples"] if stats["examples"] else 0.0
        print(
            f"{code}: train={stats['examples']} test={len(test_prompts)} "
            f"with_terms={stats['with_terms']} total_pairs={stats['total_pairs']} "
            f"coverage={coverage:.2f}"
        )
    merged_segments = corpus.merge_tuning_sets(per_pair_tuning, config.seed)
    merged = [
        promptgen.render_example(
            segment, matchers[segment.pair.code].find_candidates(segment), template, "train"
        )
        for segment in merged_segments
    ]
    promptgen.write_dataset(
        layout.train_merged(),
        merged,
        manifest={**base_manifest, "family": template.family_id, "mode": "train", "merged": True},
    )
    promptgen.write_dataset_rawtext(layout.train_merged_text(), merged)
    print(f"merged: train={len(merged)}")
    return 0


def _resolve_scheme(config: PipelineConfig, pair_config: PairConfig, counts_file: Path | None):
    if counts_file is not None:
        return postprocess.ExternalCounts.load(counts_file)
    if config.counting_scheme == "external":
        if pair_config.external_counts_path is None:
            raise UsageError(
                f"pair {pair_config.pair.code}: counting_scheme=external needs "
                "external_counts in the pair section or --counts-file"
            )
        return postprocess.ExternalCounts.load(pair_config.external_counts_path)
    return config.counting_scheme


def _postprocess_pair(
    config: PipelineConfig,
    layout: Layout,
    pair_config: PairConfig,
    records,
    counts_file: Path | None = None,
) -> dict:
    code = pair_config.pair.code
    template = config.template()
    scheme = _resolve_scheme(config, pair_config, counts_file)
    outputs, totals = postprocess.postprocess_batch(records, template, scheme)
    base_manifest = config.manifest()
    postprocess.write_outputs(
        layout.outputs(code), outputs, manifest={**base_manifest, "pair": code}
    )
    _write_json(layout.totals(code), {**base_manifest, "pair": code, "totals": totals})
    return totals


def cmd_translate(config: PipelineConfig, pair_code: str | None = None, resume: bool = False) -> int:
    layout = Layout(config.output_dir)
    base_manifest = config.manifest()
    for pair_config in config.select_pairs(pair_code):
        code = pair_config.pair.code
        examples = promptgen.read_dataset(_require(layout.test_dataset(code), "build"), pair_config.pair)
        completed: dict[str, runner.GenerationRecord] = {}
        if resume and layout.generations(code).is_file():
            completed = {
                record.segment_id: record
                for record in runner.read_records(layout.generations(code))
                if record.ok
            }
            log.info("pair=%s resume_completed=%d", code, len(completed))
        pending = [e for e in examples if e.segment_id not in completed]
        try:
            new_records = runner.generate_batch(pending, config.inference)
        except EndpointError as exc:
            by_id = {**completed, **{r.segment_id: r for r in exc.partial_records}}
            partial = [by_id[e.segment_id] for e in examples if e.segment_id in by_id]
            runner.write_records(
                layout.generations(code), partial, manifest={**base_manifest, "pair": code}
            )
            runner.write_run_manifest(
                layout.generation_manifest(code),
                config.inference,
                partial,
                config_hash=base_manifest["config_hash"],
                seed=config.seed,
                aborted=True,
            )
            raise
        by_id = {**completed, **{r.segment_id: r for r in new_records}}
        records = [by_id[e.segment_id] for e in examples]
        runner.write_records(
            layout.generations(code), records, manifest={**base_manifest, "pair": code}
        )
        runner.write_timing_sidecar(layout.timing(code), records)
        runner.write_run_manifest(
            layout.generation_manifest(code),
            config.inference,
            records,
            config_hash=base_manifest["config_hash"],
            seed=config.seed,
        )
        totals = _postprocess_pair(config, layout, pair_config, records)
        errors = sum(1 for r in records if not r.ok)
        print(
            f"{code}: records={len(records)} errors={errors} "
            f"truncated={totals['truncated_count']} "
            f"tokens_raw={totals['token_total_raw']} tokens_cleaned={totals['token_total_cleaned']}"
        )
    return 0


def cmd_postprocess(
    config: PipelineConfig, pair_code: str | None = None, counts_file: Path | None = None
) -> int:
    layout = Layout(config.output_dir)
    for pair_config in config.select_pairs(pair_code):
        code = pair_config.pair.code
        records = runner.read_records(_require(layout.generations(code), "translate"))
        totals = _postprocess_pair(config, layout, pair_config, records, counts_file=counts_file)
        print(
            f"{code}: outputs={totals['outputs']} truncated={totals['truncated_count']} "
            f"tokens_raw={totals['token_total_raw']} tokens_cleaned={totals['token_total_cleaned']} "
            f"scheme={totals['counting_scheme']}"
        )
    return 0


def cmd_score(
    config: PipelineConfig,
    pair_code: str | None = None,
    system: str | None = None,
    annotations: Path | None = None,
    external_scores: Path | None = None,
) -> int:
    layout = Layout(config.output_dir)
    system = system or config.inference.model_name
    base_manifest = config.manifest()
    selected = config.select_pairs(pair_code)
    if annotations is not None and len(selected) > 1:
        raise UsageError("--annotations applies to a single pair; use --pair")
    if external_scores is not None and len(selected) > 1:
        raise UsageError("--external-scores applies to a single pair; use --pair")
    for pair_config in selected:
        code = pair_config.pair.code
        references = corpus.read_segments(
            _require(layout.splits(code), "build"), pair_config.pair, split="test"
        )
        outputs = postprocess.read_outputs(_require(layout.outputs(code), "translate"))
        outputs_by_id = {o.segment_id: o for o in outputs}
        if {r.id for r in references} != set(outputs_by_id):
            raise UsageError(
                f"pair {code}: outputs and test references do not cover the same segment ids"
            )
        hypotheses = [outputs_by_id[r.id].cleaned_text for r in references]
        reference_texts = [r.target_text for r in references]
        matcher = _load_matcher(layout, pair_config)
        accuracy, correct, total = metrics.term_accuracy(outputs, references, matcher)
        external = {}
        scores_path = external_scores or pair_config.external_scores_path
        if scores_path is not None:
            external = metrics.load_external_scores(scores_path)
        score_report = metrics.ScoreReport(
            pair=pair_config.pair,
            system=system,
            bleu=metrics.bleu(hypotheses, reference_texts),
            chrf=metrics.chrf(hypotheses, reference_texts),
            term_accuracy=accuracy,
            term_correct=correct,
            term_total=total,
            external_scores=external,
        )
        mqm_block = None
        annotations_path = annotations or pair_config.annotations_path
        if annotations_path is not None:
            spans = mqm.load_annotations(annotations_path)
            spans = mqm.filter_by_confidence(spans, config.confidence_threshold)
            totals_data = json.loads(layout.totals(code).read_text(encoding="utf-8"))["totals"]
            token_total = totals_data[
                "token_total_raw" if config.mqm_tokens == "raw" else "token_total_cleaned"
            ]
            counts = mqm.tally(
                spans, token_total, scheme=f"{totals_data['counting_scheme']}:{config.mqm_tokens}"
            )
            mqm_block = {"counts": counts.to_dict(), "score": mqm.mqm_score(counts)}
        _write_json(
            layout.score_file(system, code),
            {
                "manifest": {**base_manifest, "pair": code, "system": system},
                "report": score_report.to_dict(),
                "mqm": mqm_block,
            },
        )
        summary = (
            f"{code} [{system}]: bleu={score_report.bleu:.2f} chrf={score_report.chrf:.2f} "
            f"term_accuracy={accuracy:.2f} ({correct}/{total})"
        )
        if mqm_block is not None:
            summary += f" mqm={mqm_block['score']:.2f}"
        print(summary)
    _write_reports(config, layout)
    return 0


def _collect_scores(config: PipelineConfig, layout: Layout):
    reports = []
    mqm_entries = []
    known_pairs = {p.pair.code: p.pair for p in config.pairs}
    for path in sorted(layout.scores_dir().glob("*.json")):
        data = json.loads(path.read_text(encoding="utf-8"))
        code = data["report"]["pair"]
        pair = known_pairs.get(code)
        if pair is None:
            try:
                pair = corpus.LanguagePair.from_code(code)
            except Exception:
                log.warning("score_file=%s unknown_pair=%s skipped", path, code)
                continue
        score_report = metrics.ScoreReport.from_dict(data["report"], pair)
        reports.append(score_report)
        if data.get("mqm"):
            mqm_entries.append(
                (score_report.system, code, mqm.SeverityCounts.from_dict(data["mqm"]["counts"]))
            )
    return reports, mqm_entries


def _write_reports(config: PipelineConfig, layout: Layout) -> list[Path]:
    reports, mqm_entries = _collect_scores(config, layout)
    if not reports and not mqm_entries:
        raise UsageError(f"no score files under {layout.scores_dir()}; run `glossmt score` first")
    return report.write_report_files(
        layout.reports_dir(), reports, mqm_entries, manifest=config.manifest()
    )


def cmd_report(config: PipelineConfig) -> int:
    written = _write_reports(config, Layout(config.output_dir))
    for path in written:
        print(str(path))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing

class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; route through UsageError for the
    # declared exit-code mapping (usage -> 1) instead.
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glossmt", description=__doc__.splitlines()[0])
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="pipeline config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--pair", help="restrict to one language pair (e.g. en-es)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    subparsers.add_parser("ingest", parents=[common], help="validate and store corpora and glossaries")

    subparsers.add_parser("build", parents=[common], help="split corpora and render datasets")

    translate = subparsers.add_parser("translate", parents=[common], help="run test prompts against the endpoint")
    translate.add_argument("--resume", action="store_true", help="skip segments already generated")

    post = subparsers.add_parser("postprocess", parents=[common], help="re-run cleaning and token counting")
    post.add_argument("--scheme", choices=["whitespace", "external", "no-truncation"],
                      help="override the counting scheme")
    post.add_argument("--counts-file", type=Path, help="external token counts (JSONL)")

    score = subparsers.add_parser("score", parents=[common], help="compute metrics and write score files")
    score.add_argument("--system", help="system name for score files (default: model name)")
    score.add_argument("--threshold", type=float, help="confidence threshold for annotations")
    score.add_argument("--scheme", choices=["whitespace", "external", "no-truncation"],
                       help="override the counting scheme")
    score.add_argument("--annotations", type=Path, help="error-span annotations (JSONL, single pair)")
    score.add_argument("--external-scores", type=Path, help="external metric scores (JSONL, single pair)")
    score.add_argument("--mqm-tokens", choices=["raw", "cleaned"], help="MQM token denominator")

    subparsers.add_parser("report", parents=[common], help="regenerate report tables from score files")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "threshold", None) is not None:
        overrides["threshold"] = args.threshold
    if getattr(args, "scheme", None) is not None:
        overrides["scheme"] = args.scheme
    if getattr(args, "mqm_tokens", None) is not None:
        overrides["mqm_tokens"] = args.mqm_tokens
    return overrides


def _dispatch(args: argparse.Namespace) -> int:
    config = load_config(args.config, overrides=_overrides(args))
    if args.command == "ingest":
        return cmd_ingest(config, pair_code=args.pair)
    if args.command == "build":
        return cmd_build(config, pair_code=args.pair)
    if args.command == "translate":
        return cmd_translate(config, pair_code=args.pair, resume=args.resume)
    if args.command == "postprocess":
        return cmd_postprocess(config, pair_code=args.pair, counts_file=args.counts_file)
    if args.command == "score":
        return cmd_score(
            config,
            pair_code=args.pair,
            system=args.system,
            annotations=args.annotations,
            external_scores=args.external_scores,
        )
    if args.command == "report":
        return cmd_report(config)
    raise UsageError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s %(message)s"
    )
    try:
        args = build_parser().parse_args(argv)
        return _dispatch(args)
    except EndpointError as exc:
        print(f"glossmt: endpoint error: {exc}", file=sys.stderr)
        return 3
    except UsageError as exc:
        print(f"glossmt: usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"glossmt: data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
