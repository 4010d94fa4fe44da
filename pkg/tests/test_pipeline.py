import numpy as np
import pytest

from tunsent import corpus, pipeline
from tunsent.pipeline import (
    ConfigError,
    PipelineConfig,
    config_from_entries,
    config_snapshot_text,
    load_config,
    parse_config_text,
    run_train,
)


def fast_config(dataset, outdir, seed=7) -> PipelineConfig:
    text = f"""
# fast settings for test runs
dataset = {dataset}
output_dir = {outdir}
seed = {seed}
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
    return config_from_entries(parse_config_text(text))


class TestConfigParsing:
    def test_sections_and_types(self):
        cfg = config_from_entries(
            parse_config_text(
                "dataset = d.tsv\nseed = 3\nstemming = true\n"
                "embedding.dim = 32\nbalance.technique = over\n"
                "gbdt.num_leaves = 16\nthreshold.t = 0.8\nthreshold.enabled = yes\n"
                "grid.learning_rate = 0.05, 0.1\n"
            )
        )
        assert cfg.dataset == "d.tsv"
        assert cfg.seed == 3
        assert cfg.stemming is True
        assert cfg.embed.dim == 32
        assert cfg.balance.technique == "over"
        assert cfg.gbdt.num_leaves == 16
        assert cfg.threshold.t == 0.8 and cfg.threshold.enabled
        assert cfg.grid == {"learning_rate": [0.05, 0.1]}

    def test_comments_and_blank_lines_ignored(self):
        entries = parse_config_text("# note\n\ndataset = x.tsv\n")
        assert entries == {"dataset": "x.tsv"}

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            config_from_entries({"gbdt.bogus": "1"})
        with pytest.raises(ConfigError, match="unknown config key"):
            config_from_entries({"bogus": "1"})

    def test_stage_seed_keys_rejected(self):
        with pytest.raises(ConfigError, match="master seed"):
            config_from_entries({"gbdt.seed": "4"})

    def test_bad_value_reports_key(self):
        with pytest.raises(ConfigError, match="gbdt.num_leaves"):
            config_from_entries({"gbdt.num_leaves": "many"})

    def test_missing_equals_reports_line(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("dataset = x\nnonsense\n")

    def test_snapshot_round_trip(self):
        cfg = config_from_entries(
            parse_config_text(
                "dataset = d.tsv\nembedding = bpe\nbpe_merges = 64\n"
                "embedding.dim = 24\nbalance.technique = smote\nbalance.beta = 0.5\n"
                "gbdt.learning_rate = 0.05\ngrid.max_depth = 2, 4\nstemming = on\n"
            )
        )
        text = config_snapshot_text(cfg)
        reloaded = config_from_entries(parse_config_text(text))
        assert reloaded == cfg
        # snapshots are stable: re-serializing changes nothing
        assert config_snapshot_text(reloaded) == text

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(tmp_path / "nope.conf")

    def test_validate_checks_referenced_files(self, tmp_path):
        cfg = PipelineConfig(dataset=str(tmp_path / "missing.tsv"))
        with pytest.raises(ConfigError, match="missing.tsv"):
            cfg.validate()


class TestRunTrain:
    def test_writes_all_artifacts(self, small_corpus_path, tmp_path):
        cfg = fast_config(small_corpus_path, tmp_path / "run")
        result = run_train(cfg)
        arts = result.artifacts
        for path in (
            arts.embedding_file,
            arts.classifier_file,
            arts.report_csv,
            arts.report_txt,
            arts.config_snapshot,
        ):
            assert path.exists(), path
        header = arts.report_csv.read_text().splitlines()[0]
        assert header.startswith("technique,embedding,learning_rate,max_depth,n_estimators,macro_f1")

    def test_split_sizes(self, small_corpus_path, tmp_path):
        cfg = fast_config(small_corpus_path, tmp_path / "run")
        result = run_train(cfg)
        assert len(result.train_indices) + len(result.test_indices) == 120
        assert len(result.test_indices) == 36  # 0.30 of 120, stratified

    def test_embedding_vocabulary_never_sees_test_text(self, small_corpus_path, tmp_path):
        cfg = fast_config(small_corpus_path, tmp_path / "run")
        result = run_train(cfg)
        data = corpus.load_dataset(small_corpus_path)
        docs = corpus.Preprocessor().corpus(data)
        train_tokens = set()
        for i in result.train_indices:
            train_tokens.update(docs[i].tokens)
        for word in result.embedding_model.vocab.index:
            assert word in train_tokens

    def test_deterministic_artifacts(self, small_corpus_path, tmp_path):
        r1 = run_train(fast_config(small_corpus_path, tmp_path / "a"))
        r2 = run_train(fast_config(small_corpus_path, tmp_path / "b"))
        assert (
            r1.artifacts.embedding_file.read_bytes()
            == r2.artifacts.embedding_file.read_bytes()
        )
        assert (
            r1.artifacts.classifier_file.read_bytes()
            == r2.artifacts.classifier_file.read_bytes()
        )
        assert r1.report.macro_f1 == r2.report.macro_f1

    def test_snapshot_reproduces_run(self, small_corpus_path, tmp_path):
        r1 = run_train(fast_config(small_corpus_path, tmp_path / "a"))
        snapshot_cfg = load_config(r1.artifacts.config_snapshot)
        snapshot_cfg.output_dir = str(tmp_path / "b")
        r2 = run_train(snapshot_cfg)
        assert (
            r1.artifacts.classifier_file.read_bytes()
            == r2.artifacts.classifier_file.read_bytes()
        )

    def test_bpe_variant_runs(self, small_corpus_path, tmp_path):
        cfg = fast_config(small_corpus_path, tmp_path / "run")
        cfg.embedding = "bpe"
        cfg.bpe_merges = 40
        result = run_train(cfg)
        assert result.embedding_model.bpe is not None
        assert 0.0 <= result.report.macro_f1 <= 1.0


class TestPredictAndEvaluate:
    @pytest.fixture
    def trained(self, small_corpus_path, tmp_path):
        cfg = fast_config(small_corpus_path, tmp_path / "run")
        run_train(cfg)
        return pipeline.load_artifacts(tmp_path / "run"), cfg

    def test_predict_argmax_and_probabilities(self, trained):
        loaded, _ = trained
        results = pipeline.predict_texts(loaded, ["behi mezyan", "khayeb mochkla"])
        for label, proba in results:
            assert label in (-1, 0, 1)
            assert proba.shape == (3,)
            assert abs(proba.sum() - 1.0) < 1e-9
            assert label == (-1, 0, 1)[int(np.argmax(proba))]

    def test_predict_empty_text_uses_prior_path(self, trained):
        loaded, _ = trained
        [(label, proba)] = pipeline.predict_texts(loaded, [""])
        assert label in (-1, 0, 1)
        assert np.isfinite(proba).all()

    def test_predict_threshold_rule(self, trained):
        loaded, _ = trained
        results = pipeline.predict_texts(loaded, ["behi mezyan momtez"], threshold=0.99)
        label, proba = results[0]
        if proba[2] >= 0.99:
            assert label == 1
        elif proba[2] <= 0.01:
            assert label == -1
        else:
            assert label == 0

    def test_evaluate_report_is_internally_consistent(self, trained, small_corpus_path, tmp_path):
        loaded, cfg = trained
        report = pipeline.run_evaluate(loaded, small_corpus_path, tmp_path / "eval")
        from tunsent.evaluation import macro_f1 as metrics

        recomputed = metrics(report.confusion)
        assert report.macro_f1 == recomputed.macro_f1
        assert (tmp_path / "eval" / "report.csv").exists()
