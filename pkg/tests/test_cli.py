import json

import pytest

from kbdemand.cli import main

from conftest import write_ndjson


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "gen"
    code = run(
        "synth", "--seed", 5, "--n-classes", 25, "--n-relations", 15,
        "--n-entities", 80, "--clauses-per-entity", "20,60", "--out", out,
    )
    assert code == 0
    return out


@pytest.fixture
def dataset(tmp_path, synth_dir):
    out = tmp_path / "agg"
    code = run("aggregate", "--usage", synth_dir / "usage_T0.ndjson",
               "--kb", synth_dir / "kb.ndjson", "--out", out)
    assert code == 0
    return out / "dataset.ndjson"


class TestSynth:
    def test_outputs_and_manifest(self, synth_dir):
        for name in ("kb.ndjson", "usage_T0.ndjson", "truth.ndjson", "gaps.ndjson", "manifest.json"):
            assert (synth_dir / name).exists()
        manifest = json.loads((synth_dir / "manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert manifest["seeds"] == {"generator": 5}

    def test_refuses_overwrite_without_force(self, synth_dir):
        code = run("synth", "--seed", 5, "--out", synth_dir)
        assert code == 2
        code = run("synth", "--seed", 5, "--n-classes", 25, "--n-relations", 15,
                   "--n-entities", 80, "--clauses-per-entity", "20,60",
                   "--out", synth_dir, "--force")
        assert code == 0

    def test_reruns_byte_identical(self, tmp_path, synth_dir):
        other = tmp_path / "gen2"
        run("synth", "--seed", 5, "--n-classes", 25, "--n-relations", 15,
            "--n-entities", 80, "--clauses-per-entity", "20,60", "--out", other)
        for name in ("kb.ndjson", "usage_T0.ndjson", "truth.ndjson"):
            assert (synth_dir / name).read_bytes() == (other / name).read_bytes()

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("seed = 3\nn_classes = 10\nn_relations = 8\nn_entities = 30\n"
                       "# a comment\nclauses_per_entity = 10,30\n")
        out = tmp_path / "cfg_gen"
        assert run("synth", "--config", cfg, "--seed", 4, "--out", out) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["seed"] == 4  # flag beats file
        assert manifest["config"]["n_classes"] == 10

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("banana = 1\n")
        assert run("synth", "--config", cfg, "--out", tmp_path / "x") == 3


class TestAggregate:
    def test_writes_dataset_and_manifest(self, dataset):
        assert dataset.exists()
        assert (dataset.parent / "manifest.json").exists()
        first = json.loads(dataset.read_text().splitlines()[0])
        assert set(first) == {"classes", "relations", "total"}

    def test_missing_file_exit_2(self, tmp_path, synth_dir):
        code = run("aggregate", "--usage", tmp_path / "nope.ndjson",
                   "--kb", synth_dir / "kb.ndjson", "--out", tmp_path / "o")
        assert code == 2

    def test_all_entities_unknown_exit_3(self, tmp_path, synth_dir):
        usage = write_ndjson(tmp_path / "u.ndjson", [{"entity": "ghost", "relation": "r"}])
        code = run("aggregate", "--usage", usage, "--kb", synth_dir / "kb.ndjson",
                   "--out", tmp_path / "o")
        assert code == 3


class TestTrain:
    def test_model_file_and_manifest(self, tmp_path, dataset):
        out = tmp_path / "model.json"
        assert run("train", "--dataset", dataset, "--model", "nn",
                   "--epochs", 10, "--seed", 3, "--out", out) == 0
        doc = json.loads(out.read_text())
        assert doc["kind"] == "neural"
        assert (tmp_path / "model.json.manifest.json").exists()

    def test_same_seed_identical_model_files(self, tmp_path, dataset):
        m1, m2 = tmp_path / "m1.json", tmp_path / "m2.json"
        for m in (m1, m2):
            assert run("train", "--dataset", dataset, "--model", "nn",
                       "--epochs", 10, "--seed", 3, "--out", m) == 0
        assert m1.read_bytes() == m2.read_bytes()

    def test_bad_model_name_usage_error(self, tmp_path, dataset, capsys):
        with pytest.raises(SystemExit) as excinfo:
            run("train", "--dataset", dataset, "--model", "boost", "--out", tmp_path / "m.json")
        assert excinfo.value.code == 2

    def test_default_hidden_width_is_ten(self, tmp_path, dataset):
        out = tmp_path / "model.json"
        assert run("train", "--dataset", dataset, "--model", "nn",
                   "--epochs", 2, "--out", out) == 0
        doc = json.loads(out.read_text())
        assert doc["params"]["hidden"] == 10

    def test_refuses_overwrite(self, tmp_path, dataset):
        out = tmp_path / "model.json"
        assert run("train", "--dataset", dataset, "--model", "freq", "--out", out) == 0
        assert run("train", "--dataset", dataset, "--model", "freq", "--out", out) == 2
        assert run("train", "--dataset", dataset, "--model", "freq", "--out", out, "--force") == 0

    def test_divergence_exit_4(self, tmp_path, dataset):
        import numpy as np
        with np.errstate(all="ignore"):
            code = run("train", "--dataset", dataset, "--model", "nn",
                       "--lr", "1e200", "--epochs", 20, "--out", tmp_path / "d.json")
        assert code == 4


class TestEval:
    def test_reports_and_figures(self, tmp_path, dataset):
        out = tmp_path / "eval"
        assert run("eval", "--dataset", dataset, "--model", "freq,nn", "--folds", 4,
                   "--epochs", 10, "--seed", 1, "--out", out) == 0
        header = (out / "report.tsv").read_text().splitlines()[0].split("\t")
        assert header[:6] == ["model", "dataset", "jaccard", "false_neg", "false_pos", "intersection"]
        assert "w_jaccard" in header
        for name in ("report.json", "folds.tsv", "metrics.png", "folds.png", "manifest.json"):
            assert (out / name).exists(), name
        assert (out / "metrics.png").stat().st_size > 0

    def test_folds_one_rejected(self, tmp_path, dataset):
        assert run("eval", "--dataset", dataset, "--folds", 1, "--out", tmp_path / "x") == 3

    def test_deterministic_reports(self, tmp_path, dataset):
        o1, o2 = tmp_path / "e1", tmp_path / "e2"
        for out in (o1, o2):
            assert run("eval", "--dataset", dataset, "--model", "nn", "--folds", 4,
                       "--epochs", 8, "--seed", 2, "--out", out) == 0
        assert (o1 / "report.tsv").read_bytes() == (o2 / "report.tsv").read_bytes()
        assert (o1 / "report.json").read_bytes() == (o2 / "report.json").read_bytes()


class TestTemporalCommand:
    def test_runs_over_periods(self, tmp_path):
        gen = tmp_path / "gen"
        assert run("synth", "--seed", 8, "--n-classes", 20, "--n-relations", 12,
                   "--n-entities", 60, "--n-periods", 3, "--drift-rate", "0.2",
                   "--clauses-per-entity", "30,80", "--out", gen) == 0
        datasets = []
        for p in range(3):
            agg = tmp_path / f"agg{p}"
            assert run("aggregate", "--usage", gen / f"usage_T{p}.ndjson",
                       "--kb", gen / "kb.ndjson", "--out", agg) == 0
            datasets.append(agg / "dataset.ndjson")
        out = tmp_path / "temporal"
        assert run("temporal", "--train", datasets[0], "--future", datasets[1], datasets[2],
                   "--model", "nn", "--epochs", 10, "--out", out) == 0
        rows = (out / "report.tsv").read_text().splitlines()
        assert len(rows) == 3  # header + 2 periods
        assert (out / "temporal.png").exists()


class TestCompletenessCommand:
    def test_end_to_end(self, tmp_path, synth_dir, dataset):
        model = tmp_path / "model.json"
        assert run("train", "--dataset", dataset, "--model", "freq", "--out", model) == 0
        out = tmp_path / "comp"
        assert run("completeness", "--model", model, "--kb", synth_dir / "kb.ndjson",
                   "--usage", synth_dir / "usage_T0.ndjson", "--top-k", 5, "--out", out) == 0
        for name in ("entities.tsv", "gaps.tsv", "report.json", "completeness.png",
                     "gaps.png", "manifest.json"):
            assert (out / name).exists(), name
        payload = json.loads((out / "report.json").read_text())
        assert 0.0 <= payload["subset_score"] <= 1.0
        assert len(payload["gaps"]) <= 5

    def test_model_version_mismatch_exit_3(self, tmp_path, synth_dir):
        bad = tmp_path / "bad_model.json"
        bad.write_text(json.dumps({"format_version": 42}))
        code = run("completeness", "--model", bad, "--kb", synth_dir / "kb.ndjson",
                   "--usage", synth_dir / "usage_T0.ndjson", "--out", tmp_path / "c")
        assert code == 3
