import json
import shutil


from glossmt.cli import Layout, main

CONFIG_TEMPLATE = """\
[project]
seed = {seed}
output_dir = {out}

[split]
tuning = 60
validation = 20
test = 20

[terminology]
min_stars = 3

[template]
family = chatml

[inference]
endpoint_url = {endpoint}
model_name = stub-model
top_p = 0.9
max_new_tokens = 64
request_timeout = 5.0
max_concurrent_requests = 4
max_retries = {retries}
retry_backoff = 0.01

[scoring]
counting_scheme = whitespace
confidence_threshold = 0.5
mqm_tokens = raw

[pair.en-es]
source = {src}
target = {tgt}
glossary = {gls}
"""


def write_project(tmp_path, fixtures_dir, endpoint, seed=11, retries=2, name="pipeline.ini"):
    out = tmp_path / "out"
    path = tmp_path / name
    path.write_text(
        CONFIG_TEMPLATE.format(
            seed=seed,
            out=out,
            endpoint=endpoint,
            retries=retries,
            src=fixtures_dir / "emea.en",
            tgt=fixtures_dir / "emea.es",
            gls=fixtures_dir / "glossary_en_es.tsv",
        ),
        encoding="utf-8",
    )
    return path, Layout(out)


def run(*argv):
    return main([str(a) for a in argv])


class TestPipeline:
    def test_full_run(self, tmp_path, fixtures_dir, stub_endpoint, capsys):
        config, layout = write_project(
            tmp_path, fixtures_dir, stub_endpoint.url + "/echo"
        )
        annotations = fixtures_dir / "annotations_en_es.jsonl"

        assert run("ingest", "--config", config) == 0
        assert layout.corpus("en-es").is_file()
        assert layout.glossary("en-es").is_file()

        assert run("build", "--config", config) == 0
        assert layout.splits("en-es").is_file()
        assert layout.train_dataset("en-es").is_file()
        assert layout.test_dataset("en-es").is_file()
        assert layout.train_merged().is_file()
        assert layout.train_merged_text().is_file()
        assert layout.candidates("en-es", "train").is_file()
        assert layout.candidates("en-es", "test").is_file()

        assert run("translate", "--config", config) == 0
        assert layout.generations("en-es").is_file()
        assert layout.timing("en-es").is_file()
        assert layout.outputs("en-es").is_file()
        manifest = json.loads(layout.generation_manifest("en-es").read_text())
        assert manifest["records"] == 20
        assert manifest["errors"] == 0
        assert manifest["aborted"] is False

        assert run("score", "--config", config, "--annotations", annotations) == 0
        score_path = layout.score_file("stub-model", "en-es")
        assert score_path.is_file()
        data = json.loads(score_path.read_text(encoding="utf-8"))
        assert data["report"]["system"] == "stub-model"
        assert 0.0 <= data["report"]["bleu"] <= 100.0
        assert data["report"]["term_total"] >= 0
        # threshold 0.5 keeps the 0.52 minor and 0.50 major spans
        assert data["mqm"]["counts"]["minor"] == 1
        assert data["mqm"]["counts"]["major"] == 1
        assert data["mqm"]["counts"]["critical"] == 0

        assert run("report", "--config", config) == 0
        assert (layout.reports_dir() / "report.md").is_file()
        assert (layout.reports_dir() / "metrics.csv").is_file()
        out = capsys.readouterr().out
        assert "bleu=" in out

    def test_split_artifact_counts(self, tmp_path, fixtures_dir, stub_endpoint):
        config, layout = write_project(
            tmp_path, fixtures_dir, stub_endpoint.url + "/echo"
        )
        assert run("ingest", "--config", config) == 0
        assert run("build", "--config", config) == 0
        lines = layout.splits("en-es").read_text(encoding="utf-8").splitlines()
        rows = [json.loads(line) for line in lines[1:]]
        by_split = {}
        for row in rows:
            by_split.setdefault(row["split"], []).append(row["id"])
        assert len(by_split["tuning"]) == 60
        assert len(by_split["validation"]) == 20
        assert len(by_split["test"]) == 20
        all_ids = [i for ids in by_split.values() for i in ids]
        assert len(set(all_ids)) == 100

    def test_system_name_override(self, tmp_path, fixtures_dir, stub_endpoint):
        config, layout = write_project(
            tmp_path, fixtures_dir, stub_endpoint.url + "/echo"
        )
        for step in ("ingest", "build", "translate"):
            assert run(step, "--config", config) == 0
        assert run("score", "--config", config, "--system", "run-a") == 0
        assert layout.score_file("run-a", "en-es").is_file()


class TestDeterminism:
    def collect(self, layout):
        names = [
            layout.splits("en-es"),
            layout.train_dataset("en-es"),
            layout.test_dataset("en-es"),
            layout.train_merged(),
            layout.train_merged_text(),
            layout.candidates("en-es", "test"),
            layout.generations("en-es"),
            layout.outputs("en-es"),
            layout.totals("en-es"),
            layout.score_file("stub-model", "en-es"),
            layout.reports_dir() / "metrics.csv",
            layout.reports_dir() / "report.md",
        ]
        return {p.relative_to(layout.root): p.read_bytes() for p in names}

    def test_identical_bytes_across_reruns(self, tmp_path, fixtures_dir, stub_endpoint):
        config, layout = write_project(
            tmp_path, fixtures_dir, stub_endpoint.url + "/echo"
        )

        def pipeline():
            for argv in (
                ("ingest", "--config", config),
                ("build", "--config", config),
                ("translate", "--config", config),
                ("score", "--config", config),
            ):
                assert run(*argv) == 0

        pipeline()
        first = self.collect(layout)
        shutil.rmtree(layout.root)
        pipeline()
        second = self.collect(layout)
        assert first.keys() == second.keys()
        for name in first:
            assert first[name] == second[name], f"artifact differs across runs: {name}"

    def test_seed_changes_split(self, tmp_path, fixtures_dir, stub_endpoint):
        config, layout = write_project(
            tmp_path, fixtures_dir, stub_endpoint.url + "/echo"
        )
        assert run("ingest", "--config", config) == 0
        assert run("build", "--config", config) == 0
        first = layout.splits("en-es").read_bytes()
        assert run("build", "--config", config, "--seed", "999") == 0
        assert layout.splits("en-es").read_bytes() != first


class TestExitCodes:
    def test_missing_artifact_is_usage_error(self, tmp_path, fixtures_dir, stub_endpoint):
        config, _ = write_project(tmp_path, fixtures_dir, stub_endpoint.url + "/echo")
        assert run("build", "--config", config) == 1

    def test_bad_flag_value_is_usage_error(self, tmp_path, fixtures_dir, stub_endpoint, capsys):
        config, _ = write_project(tmp_path, fixtures_dir, stub_endpoint.url + "/echo")
        assert run("postprocess", "--config", config, "--scheme", "bogus") == 1
        capsys.readouterr()

    def test_unknown_pair_is_usage_error(self, tmp_path, fixtures_dir, stub_endpoint):
        config, _ = write_project(tmp_path, fixtures_dir, stub_endpoint.url + "/echo")
        assert run("ingest", "--config", config, "--pair", "en-zz") == 1

    def test_missing_config_is_usage_error(self, tmp_path):
        assert run("ingest", "--config", tmp_path / "absent.ini") == 1

    def test_corrupt_artifact_is_data_error(self, tmp_path, fixtures_dir, stub_endpoint):
        config, layout = write_project(
            tmp_path, fixtures_dir, stub_endpoint.url + "/echo"
        )
        assert run("ingest", "--config", config) == 0
        layout.corpus("en-es").write_text("not json at all\n", encoding="utf-8")
        assert run("build", "--config", config) == 2

    def test_unreachable_endpoint_is_endpoint_error(self, tmp_path, fixtures_dir, stub_endpoint):
        config, layout = write_project(
            tmp_path, fixtures_dir, "http://127.0.0.1:9/echo", retries=0
        )
        assert run("ingest", "--config", config) == 0
        assert run("build", "--config", config) == 0
        assert run("translate", "--config", config) == 3
        manifest = json.loads(layout.generation_manifest("en-es").read_text())
        assert manifest["aborted"] is True


class TestResume:
    def test_resume_retries_only_failures(self, tmp_path, fixtures_dir, stub_endpoint):
        stub_endpoint.reset()
        config, layout = write_project(
            tmp_path, fixtures_dir, stub_endpoint.url + "/flaky", retries=0
        )
        assert run("ingest", "--config", config) == 0
        assert run("build", "--config", config) == 0
        # every prompt's first request gets a 500 and retries are off
        assert run("translate", "--config", config) == 0
        rows = [
            json.loads(line)
            for line in layout.generations("en-es").read_text(encoding="utf-8").splitlines()[1:]
        ]
        failed = [row["segment_id"] for row in rows if row["error"]]
        assert len(failed) == 20
        requests_before = len(stub_endpoint.requests)

        assert run("translate", "--config", config, "--resume") == 0
        rows = [
            json.loads(line)
            for line in layout.generations("en-es").read_text(encoding="utf-8").splitlines()[1:]
        ]
        assert all(row["error"] is None for row in rows)
        assert len(stub_endpoint.requests) - requests_before == len(failed)

    def test_resume_with_all_ok_sends_nothing(self, tmp_path, fixtures_dir, stub_endpoint):
        config, layout = write_project(
            tmp_path, fixtures_dir, stub_endpoint.url + "/echo"
        )
        for step in ("ingest", "build", "translate"):
            assert run(step, "--config", config) == 0
        before = len(stub_endpoint.requests)
        assert run("translate", "--config", config, "--resume") == 0
        assert len(stub_endpoint.requests) == before


class TestPostprocessCommand:
    def test_external_counts_scheme(self, tmp_path, fixtures_dir, stub_endpoint):
        config, layout = write_project(
            tmp_path, fixtures_dir, stub_endpoint.url + "/echo"
        )
        for step in ("ingest", "build", "translate"):
            assert run(step, "--config", config) == 0
        generation_rows = [
            json.loads(line)
            for line in layout.generations("en-es").read_text(encoding="utf-8").splitlines()[1:]
        ]
        counts_file = tmp_path / "counts.jsonl"
        counts_file.write_text(
            "".join(
                json.dumps({"segment_id": row["segment_id"], "token_count": 7}) + "\n"
                for row in generation_rows
            ),
            encoding="utf-8",
        )
        assert (
            run(
                "postprocess",
                "--config",
                config,
                "--scheme",
                "external",
                "--counts-file",
                counts_file,
            )
            == 0
        )
        totals = json.loads(layout.totals("en-es").read_text(encoding="utf-8"))["totals"]
        assert totals["counting_scheme"] == "external"
        assert totals["token_total_raw"] == totals["token_total_cleaned"] == 7 * 20

    def test_external_scheme_requires_counts_file(self, tmp_path, fixtures_dir, stub_endpoint):
        config, _ = write_project(tmp_path, fixtures_dir, stub_endpoint.url + "/echo")
        for step in ("ingest", "build", "translate"):
            assert run(step, "--config", config) == 0
        assert run("postprocess", "--config", config, "--scheme", "external") == 1
