import numpy as np
import pytest

from tunsent import cli

from conftest import write_template_corpus

FAST_SETTINGS = """
embedding.dim = 16
embedding.window = 3
embedding.negatives = 3
embedding.epochs = 2
embedding.bucket_count = 1024
embedding.min_count = 1
gbdt.n_estimators = 12
gbdt.num_leaves = 6
gbdt.max_depth = 4
gbdt.learning_rate = 0.3
gbdt.min_child_weight = 1.0
gbdt.subsample = 1.0
"""


def write_config(tmp_path, dataset, outdir, extra="", name="run.conf", seed=7):
    path = tmp_path / name
    path.write_text(
        f"dataset = {dataset}\noutput_dir = {outdir}\nseed = {seed}\n"
        + FAST_SETTINGS
        + extra,
        encoding="utf-8",
    )
    return path


@pytest.fixture
def corpus_path(tmp_path):
    return write_template_corpus(tmp_path / "data.tsv", n=120, weights=(3, 2, 1), seed=11)


class TestReport:
    def test_counts_proportions_and_csv(self, corpus_path, tmp_path, capsys):
        out = tmp_path / "out"
        code = cli.main(["report", "--dataset", str(corpus_path), "--output", str(out)])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "label" in stdout and "#" in stdout
        csv_lines = (out / "class_distribution.csv").read_text().splitlines()
        assert csv_lines[0] == "label,count,proportion"
        rows = [line.split(",") for line in csv_lines[1:]]
        assert [r[0] for r in rows] == ["-1", "0", "1"]
        proportions = [float(r[2]) for r in rows]
        assert abs(sum(proportions) - 1.0) < 1e-9
        counts = {int(r[0]): int(r[1]) for r in rows}
        assert counts[1] > counts[-1] > counts[0]

    def test_missing_dataset_flag(self, capsys):
        assert cli.main(["report"]) == 2
        assert "dataset" in capsys.readouterr().err

    def test_empty_dataset_file(self, tmp_path, capsys):
        empty = tmp_path / "empty.tsv"
        empty.write_text("")
        assert cli.main(["report", "--dataset", str(empty)]) == 1


class TestTrain:
    def test_artifacts_and_exit_code(self, corpus_path, tmp_path, capsys):
        out = tmp_path / "run"
        config = write_config(tmp_path, corpus_path, out)
        assert cli.main(["train", "--config", str(config)]) == 0
        stdout = capsys.readouterr().out
        assert "macro F1" in stdout
        for name in (
            "embedding.bin",
            "classifier.gbdt",
            "report.csv",
            "report.txt",
            "config.snapshot",
        ):
            assert (out / name).exists()

    def test_missing_dataset_path_exit_2(self, tmp_path, capsys):
        code = cli.main(
            ["train", "--dataset", str(tmp_path / "absent.tsv"), "--output", str(tmp_path / "o")]
        )
        assert code == 2
        assert "absent.tsv" in capsys.readouterr().err

    def test_two_runs_are_byte_identical(self, corpus_path, tmp_path):
        config = write_config(tmp_path, corpus_path, tmp_path / "ignored")
        assert cli.main(["train", "--config", str(config), "--output", str(tmp_path / "a"), "--threads", "1"]) == 0
        assert cli.main(["train", "--config", str(config), "--output", str(tmp_path / "b"), "--threads", "1"]) == 0
        for name in ("embedding.bin", "classifier.gbdt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_balance_flag(self, corpus_path, tmp_path):
        config = write_config(tmp_path, corpus_path, tmp_path / "run")
        code = cli.main(["train", "--config", str(config), "--balance", "over"])
        assert code == 0
        snapshot = (tmp_path / "run" / "config.snapshot").read_text()
        assert "balance.technique = over" in snapshot


class TestPredict:
    @pytest.fixture
    def model_dir(self, corpus_path, tmp_path):
        out = tmp_path / "run"
        config = write_config(tmp_path, corpus_path, out)
        assert cli.main(["train", "--config", str(config)]) == 0
        return out

    def test_output_line_count_matches_input(self, model_dir, tmp_path, capsys):
        inp = tmp_path / "in.txt"
        inp.write_text("behi mezyan\n\nkhayeb mochkla barsha\n", encoding="utf-8")
        code = cli.main(["predict", "--model-dir", str(model_dir), "--input", str(inp)])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 3
        for line in lines:
            label, p_neg, p_neu, p_pos, *_ = line.split("\t")
            assert int(label) in (-1, 0, 1)
            total = float(p_neg) + float(p_neu) + float(p_pos)
            assert abs(total - 1.0) < 1e-4

    def test_single_text(self, model_dir, capsys):
        code = cli.main(["predict", "--model-dir", str(model_dir), "--text", "behi behi mezyan"])
        assert code == 0
        out = capsys.readouterr().out.splitlines()
        assert len(out) == 1
        assert out[0].endswith("behi behi mezyan")

    def test_threshold_band(self, model_dir, capsys):
        code = cli.main(
            ["predict", "--model-dir", str(model_dir), "--text", "akahaw", "--threshold", "0.99"]
        )
        assert code == 0
        label, _, _, p_pos, _ = capsys.readouterr().out.splitlines()[0].split("\t")
        p = float(p_pos)
        expected = 1 if p >= 0.99 else (-1 if p <= 0.01 else 0)
        assert int(label) == expected

    def test_requires_exactly_one_input(self, model_dir, capsys):
        assert cli.main(["predict", "--model-dir", str(model_dir)]) == 2
        assert cli.main(["predict", "--model-dir", str(model_dir), "--text", "x", "--input", "y"]) == 2

    def test_version_mismatch_names_magic(self, model_dir, capsys):
        blob = (model_dir / "embedding.bin").read_bytes()
        (model_dir / "embedding.bin").write_bytes(b"BADMAGIC" + blob[8:])
        code = cli.main(["predict", "--model-dir", str(model_dir), "--text", "behi"])
        assert code == 1
        err = capsys.readouterr().err
        assert "TNZEMB01" in err and "BADMAGIC" in err


class TestEvaluate:
    def test_report_files_and_consistency(self, corpus_path, tmp_path, capsys):
        out = tmp_path / "run"
        config = write_config(tmp_path, corpus_path, out)
        assert cli.main(["train", "--config", str(config)]) == 0
        code = cli.main(
            [
                "evaluate",
                "--model-dir",
                str(out),
                "--dataset",
                str(corpus_path),
                "--output",
                str(tmp_path / "eval"),
            ]
        )
        assert code == 0
        csv_lines = (tmp_path / "eval" / "report.csv").read_text().splitlines()
        assert len(csv_lines) == 2
        header = csv_lines[0].split(",")
        row = csv_lines[1].split(",")
        macro = float(row[header.index("macro_f1")])
        f1_cells = [float(row[header.index(c)]) for c in ("f1_neg", "f1_neu", "f1_pos")]
        assert macro == pytest.approx(sum(f1_cells) / 3, abs=1e-12)

    def test_compare_emits_three_technique_rows(self, corpus_path, tmp_path, capsys):
        out = tmp_path / "cmp"
        config = write_config(tmp_path, corpus_path, out)
        code = cli.main(["evaluate", "--compare", "--config", str(config)])
        assert code == 0
        lines = (out / "compare.csv").read_text().splitlines()
        assert len(lines) == 4  # header + one row per technique
        header = lines[0].split(",")
        assert header[:6] == [
            "technique", "embedding", "learning_rate", "max_depth", "n_estimators", "macro_f1",
        ]
        techniques = [line.split(",")[0] for line in lines[1:]]
        assert techniques == ["under", "over", "adasyn"]
        for line in lines[1:]:
            assert 0.0 <= float(line.split(",")[5]) <= 1.0


class TestGridSearch:
    def test_fit_count_logged_and_results_written(self, corpus_path, tmp_path, capsys):
        out = tmp_path / "gs"
        config = write_config(
            tmp_path,
            corpus_path,
            out,
            extra="cv_folds = 2\ngrid.learning_rate = 0.1, 0.3\ngrid.max_depth = 2, 3\n",
        )
        code = cli.main(["grid-search", "--config", str(config)])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "8 fits (4 combinations x 2 folds)" in stdout
        lines = (out / "grid_results.csv").read_text().splitlines()
        assert len(lines) == 5  # header + 4 combinations
        best = out / "best_config.snapshot"
        assert best.exists()
        from tunsent.pipeline import load_config

        best_cfg = load_config(best)
        assert best_cfg.grid == {}
        assert best_cfg.gbdt.learning_rate in (0.1, 0.3)
        assert best_cfg.gbdt.max_depth in (2, 3)

    def test_missing_grid_is_config_error(self, corpus_path, tmp_path, capsys):
        config = write_config(tmp_path, corpus_path, tmp_path / "gs")
        assert cli.main(["grid-search", "--config", str(config)]) == 2
        assert "grid" in capsys.readouterr().err
