"""End-to-end pipeline: load -> preprocess -> split -> embed -> vectorize ->
balance -> boost -> evaluate, plus artifact persistence.

A run is fully described by a PipelineConfig. Stage seeds derive from the
master seed (embeddings = seed, balancing = seed + 1, classifier = seed + 2),
so a config snapshot plus the dataset reproduces a run byte-for-byte.
Embeddings are trained on the training split only, and balancing only ever
sees training vectors — test and validation rows stay out of both.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import balancing, corpus, embeddings, evaluation, gbdt

EMBEDDING_CHOICES = ("fasttext", "bpe")


class ConfigError(ValueError):
    """Bad configuration file, key, or value (usage error, exit code 2)."""


class PipelineError(RuntimeError):
    """A pipeline stage failed at runtime (exit code 1)."""


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except (ConfigError, FileNotFoundError, PipelineError):
        raise
    except Exception as exc:
        raise PipelineError(f"{name}: {exc}") from exc


@dataclass
class PipelineConfig:
    dataset: str = ""
    output_dir: str = "runs"
    seed: int = 42
    threads: int = 1
    test_fraction: float = 0.30
    cv_folds: int = 5
    stopwords_file: str | None = None
    stem_rules_file: str | None = None
    stemming: bool = False
    embedding: str = "fasttext"
    bpe_merges: int = 1000
    embed: embeddings.EmbedConfig = field(default_factory=embeddings.EmbedConfig)
    balance: balancing.BalanceConfig = field(default_factory=balancing.BalanceConfig)
    gbdt: gbdt.GbdtConfig = field(default_factory=gbdt.GbdtConfig)
    threshold: evaluation.ThresholdConfig = field(
        default_factory=evaluation.ThresholdConfig
    )
    grid: dict[str, list] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.dataset:
            raise ConfigError("no dataset configured (set 'dataset' or pass --dataset)")
        if self.embedding not in EMBEDDING_CHOICES:
            raise ConfigError(
                f"unknown embedding {self.embedding!r}; expected one of {EMBEDDING_CHOICES}"
            )
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        for path, what in (
            (self.dataset, "dataset"),
            (self.stopwords_file, "stopwords file"),
            (self.stem_rules_file, "stem rules file"),
        ):
            if path and not Path(path).exists():
                raise ConfigError(f"{what} does not exist: {path}")
        try:
            self.embed.validate()
            self.balance.validate()
            self.gbdt.validate()
            self.threshold.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Flat key=value config files with dotted section prefixes


_TOP_LEVEL_KEYS = {
    "dataset": str,
    "output_dir": str,
    "seed": int,
    "threads": int,
    "test_fraction": float,
    "cv_folds": int,
    "stopwords_file": str,
    "stem_rules_file": str,
    "stemming": bool,
    "embedding": str,
    "bpe_merges": int,
}

_SECTIONS = {
    "embedding": ("embed", embeddings.EmbedConfig),
    "balance": ("balance", balancing.BalanceConfig),
    "gbdt": ("gbdt", gbdt.GbdtConfig),
    "threshold": ("threshold", evaluation.ThresholdConfig),
}

# stage seeds always derive from the master seed; per-section seed keys would
# silently contradict that
_REJECTED_KEYS = {"embedding.seed", "balance.seed", "gbdt.seed"}


def _coerce(raw: str, target_type, key: str):
    raw = raw.strip()
    try:
        if target_type is bool:
            if raw.lower() in ("true", "yes", "on", "1"):
                return True
            if raw.lower() in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def parse_config_text(text: str) -> dict[str, str]:
    entries = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        entries[key.strip()] = value.strip()
    return entries


def config_from_entries(entries: dict[str, str]) -> PipelineConfig:
    config = PipelineConfig()
    section_types = {
        prefix: {f.name: f.type for f in fields(cls)} for prefix, (_, cls) in _SECTIONS.items()
    }
    type_of = {"int": int, "float": float, "str": str, "bool": bool}
    for key, raw in entries.items():
        if key in _REJECTED_KEYS:
            raise ConfigError(
                f"config key {key!r} is not allowed: stage seeds derive from the master seed"
            )
        if key in _TOP_LEVEL_KEYS:
            setattr(config, key, _coerce(raw, _TOP_LEVEL_KEYS[key], key))
            continue
        prefix, _, rest = key.partition(".")
        if prefix == "grid":
            grid_types = {f.name: f.type for f in fields(gbdt.GbdtConfig)}
            if rest not in grid_types:
                raise ConfigError(f"unknown grid parameter {key!r}")
            value_type = type_of[grid_types[rest]]
            config.grid[rest] = [
                _coerce(part, value_type, key) for part in raw.split(",") if part.strip()
            ]
            continue
        if prefix in _SECTIONS and rest:
            attr, _ = _SECTIONS[prefix]
            field_types = section_types[prefix]
            if rest not in field_types:
                raise ConfigError(f"unknown config key {key!r}")
            value = _coerce(raw, type_of[field_types[rest]], key)
            setattr(config, attr, replace(getattr(config, attr), **{rest: value}))
            continue
        raise ConfigError(f"unknown config key {key!r}")
    return config


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file does not exist: {path}")
    return config_from_entries(parse_config_text(path.read_text("utf-8")))


def _fmt_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_snapshot_text(config: PipelineConfig) -> str:
    """Every effective setting as sorted key = value lines; reloading the
    snapshot reproduces the run."""
    entries = {}
    for key in _TOP_LEVEL_KEYS:
        value = getattr(config, key)
        if value is None:
            continue
        entries[key] = _fmt_value(value)
    for prefix, (attr, _) in _SECTIONS.items():
        section = getattr(config, attr)
        for f in fields(section):
            if f"{prefix}.{f.name}" in _REJECTED_KEYS:
                continue
            entries[f"{prefix}.{f.name}"] = _fmt_value(getattr(section, f.name))
    for name, values in config.grid.items():
        entries[f"grid.{name}"] = ", ".join(_fmt_value(v) for v in values)
    return "".join(f"{k} = {entries[k]}\n" for k in sorted(entries))


# ---------------------------------------------------------------------------
# Artifacts


EMBEDDING_FILE = "embedding.bin"
CLASSIFIER_FILE = "classifier.gbdt"
REPORT_CSV = "report.csv"
REPORT_TXT = "report.txt"
CONFIG_SNAPSHOT = "config.snapshot"


@dataclass
class PipelineArtifacts:
    embedding_file: Path
    classifier_file: Path
    report_csv: Path
    report_txt: Path
    config_snapshot: Path

    @classmethod
    def in_dir(cls, output_dir: str | Path) -> "PipelineArtifacts":
        out = Path(output_dir)
        return cls(
            embedding_file=out / EMBEDDING_FILE,
            classifier_file=out / CLASSIFIER_FILE,
            report_csv=out / REPORT_CSV,
            report_txt=out / REPORT_TXT,
            config_snapshot=out / CONFIG_SNAPSHOT,
        )


REPORT_COLUMNS = (
    "technique",
    "embedding",
    "learning_rate",
    "max_depth",
    "n_estimators",
    "macro_f1",
    "precision_neg",
    "precision_neu",
    "precision_pos",
    "recall_neg",
    "recall_neu",
    "recall_pos",
    "f1_neg",
    "f1_neu",
    "f1_pos",
    "seed",
)


def report_csv_row(report: evaluation.EvaluationReport) -> str:
    md = report.metadata
    cells = [
        str(md.get("technique", "none")),
        str(md.get("embedding", "fasttext")),
        _fmt_value(md.get("learning_rate", "")),
        _fmt_value(md.get("max_depth", "")),
        _fmt_value(md.get("n_estimators", "")),
        repr(report.macro_f1),
    ]
    for metric in (report.precision, report.recall, report.f1):
        cells.extend(repr(metric[label]) for label in corpus.LABELS)
    cells.append(str(md.get("seed", "")))
    return ",".join(cells)


def report_text(report: evaluation.EvaluationReport) -> str:
    lines = []
    md = report.metadata
    if md:
        lines.append(
            "run: technique={technique} embedding={embedding} seed={seed}".format(
                technique=md.get("technique", "none"),
                embedding=md.get("embedding", "fasttext"),
                seed=md.get("seed", "?"),
            )
        )
        if "timestamp" in md:
            lines.append(f"timestamp: {md['timestamp']}")
    lines.append("")
    lines.append("confusion matrix (rows = true, cols = predicted; classes -1, 0, 1):")
    for i, label in enumerate(corpus.LABELS):
        row = " ".join(f"{int(v):6d}" for v in report.confusion.counts[i])
        lines.append(f"  true {label:>2}: {row}")
    lines.append("")
    lines.append("class  precision  recall     f1")
    for label in corpus.LABELS:
        lines.append(
            f"{label:>5}  {report.precision[label]:9.4f}  {report.recall[label]:9.4f}  "
            f"{report.f1[label]:9.4f}"
        )
    lines.append("")
    lines.append(f"macro F1: {report.macro_f1:.4f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Runs


@dataclass
class TrainResult:
    report: evaluation.EvaluationReport
    artifacts: PipelineArtifacts
    train_indices: np.ndarray
    test_indices: np.ndarray
    embedding_model: embeddings.EmbeddingModel
    classifier: gbdt.GbdtModel


def _build_preprocessor(config: PipelineConfig) -> corpus.Preprocessor:
    stopwords = (
        set(corpus.load_wordlist(config.stopwords_file)) if config.stopwords_file else set()
    )
    stem_rules = (
        corpus.load_wordlist(config.stem_rules_file) if config.stem_rules_file else []
    )
    return corpus.Preprocessor(
        stopwords=stopwords, stem_rules=stem_rules, stemming=config.stemming
    )


def _train_embeddings(config: PipelineConfig, token_docs) -> embeddings.EmbeddingModel:
    embed_cfg = replace(config.embed, seed=config.seed)
    if config.embedding == "bpe":
        return embeddings.train_skipgram_bpe(token_docs, embed_cfg, config.bpe_merges)
    return embeddings.train_skipgram(token_docs, embed_cfg)


def _vectorize(model: embeddings.EmbeddingModel, docs) -> np.ndarray:
    return np.stack([embeddings.sentence_vector(model, d.tokens) for d in docs]).astype(
        np.float64
    )


def run_train(config: PipelineConfig) -> TrainResult:
    config.validate()
    with _stage("load"):
        data = corpus.load_dataset(config.dataset)
    with _stage("preprocess"):
        docs = _build_preprocessor(config).corpus(data)
        labels = np.array([d.label for d in docs])
    with _stage("split"):
        train_idx, test_idx = evaluation.train_test_split(
            labels, config.test_fraction, config.seed
        )
    train_docs = [docs[i] for i in train_idx]
    test_docs = [docs[i] for i in test_idx]

    with _stage("embed"):
        # training split only: test text must not shape the feature space
        emb = _train_embeddings(config, [d.tokens for d in train_docs])
    with _stage("vectorize"):
        train_mat = balancing.FeatureMatrix(
            rows=_vectorize(emb, train_docs), labels=labels[train_idx]
        )
        x_test = _vectorize(emb, test_docs)
    with _stage("balance"):
        balanced = balancing.apply_balance(
            train_mat, replace(config.balance, seed=config.seed + 1)
        )
    with _stage("boost"):
        model = gbdt.fit(balanced, replace(config.gbdt, seed=config.seed + 2))
    with _stage("evaluate"):
        preds = gbdt.predict_label(model, x_test)
        report = evaluation.evaluate_predictions(
            labels[test_idx],
            preds,
            technique=config.balance.technique,
            embedding=config.embedding,
            learning_rate=config.gbdt.learning_rate,
            max_depth=config.gbdt.max_depth,
            n_estimators=config.gbdt.n_estimators,
            seed=config.seed,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )

    with _stage("write-artifacts"):
        artifacts = write_artifacts(config, emb, model, report)
    return TrainResult(
        report=report,
        artifacts=artifacts,
        train_indices=train_idx,
        test_indices=test_idx,
        embedding_model=emb,
        classifier=model,
    )


def write_artifacts(config, emb, model, report) -> PipelineArtifacts:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = PipelineArtifacts.in_dir(out)
    embeddings.save_model(emb, artifacts.embedding_file)
    gbdt.save_model(model, artifacts.classifier_file)
    artifacts.report_csv.write_text(
        ",".join(REPORT_COLUMNS) + "\n" + report_csv_row(report) + "\n", encoding="utf-8"
    )
    artifacts.report_txt.write_text(report_text(report), encoding="utf-8")
    artifacts.config_snapshot.write_text(config_snapshot_text(config), encoding="utf-8")
    return artifacts


@dataclass
class LoadedArtifacts:
    config: PipelineConfig
    preprocessor: corpus.Preprocessor
    embedding_model: embeddings.EmbeddingModel
    classifier: gbdt.GbdtModel


def load_artifacts(model_dir: str | Path) -> LoadedArtifacts:
    artifacts = PipelineArtifacts.in_dir(model_dir)
    for p in (artifacts.config_snapshot, artifacts.embedding_file, artifacts.classifier_file):
        if not p.exists():
            raise ConfigError(f"missing artifact file: {p}")
    config = load_config(artifacts.config_snapshot)
    emb = embeddings.load_model(
        artifacts.embedding_file, n_min=config.embed.n_min, n_max=config.embed.n_max
    )
    model = gbdt.load_model(artifacts.classifier_file)
    return LoadedArtifacts(
        config=config,
        preprocessor=_build_preprocessor(config),
        embedding_model=emb,
        classifier=model,
    )


def predict_texts(loaded: LoadedArtifacts, texts, threshold: float | None = None):
    """Label + class probabilities for each text.

    Decision is argmax unless a threshold is given, in which case the band
    rule on the positive-class probability applies.
    """
    results = []
    for text in texts:
        tokens = loaded.preprocessor.tokens(text)
        vec = embeddings.sentence_vector(loaded.embedding_model, tokens)
        proba = gbdt.predict_proba(loaded.classifier, vec.astype(np.float64))
        if threshold is None:
            label = evaluation.argmax_label(proba)
        else:
            label = evaluation.threshold_decide(float(proba[2]), threshold)
        results.append((label, proba))
    return results


def run_evaluate(loaded: LoadedArtifacts, dataset_path, output_dir) -> evaluation.EvaluationReport:
    with _stage("load"):
        data = corpus.load_dataset(dataset_path)
    with _stage("evaluate"):
        y_true = [doc.label for doc in data]
        results = predict_texts(loaded, [doc.text for doc in data])
        preds = [label for label, _ in results]
        report = evaluation.evaluate_predictions(
            y_true,
            preds,
            technique=loaded.config.balance.technique,
            embedding=loaded.config.embedding,
            learning_rate=loaded.config.gbdt.learning_rate,
            max_depth=loaded.config.gbdt.max_depth,
            n_estimators=loaded.config.gbdt.n_estimators,
            seed=loaded.config.seed,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_CSV).write_text(
        ",".join(REPORT_COLUMNS) + "\n" + report_csv_row(report) + "\n", encoding="utf-8"
    )
    (out / REPORT_TXT).write_text(report_text(report), encoding="utf-8")
    return report


COMPARE_TECHNIQUES = ("under", "over", "adasyn")


def run_compare(config: PipelineConfig) -> list[evaluation.EvaluationReport]:
    """Retrain once per balancing technique and collect the test reports
    (one CSV row each, same column shape as the single-run report)."""
    reports = []
    for technique in COMPARE_TECHNIQUES:
        variant = replace_config(
            config,
            balance=replace(config.balance, technique=technique),
            output_dir=str(Path(config.output_dir) / f"compare-{technique}"),
        )
        reports.append(run_train(variant).report)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [",".join(REPORT_COLUMNS)] + [report_csv_row(r) for r in reports]
    (out / "compare.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return reports


def replace_config(config: PipelineConfig, **changes) -> PipelineConfig:
    kwargs = {f.name: getattr(config, f.name) for f in fields(PipelineConfig)}
    kwargs.update(changes)
    kwargs["grid"] = dict(kwargs["grid"])
    return PipelineConfig(**kwargs)


@dataclass
class GridRunResult:
    search: evaluation.GridSearchResult
    best_config: PipelineConfig
    results_csv: Path
    best_config_file: Path


def run_grid_search(config: PipelineConfig) -> GridRunResult:
    config.validate()
    if not config.grid:
        raise ConfigError("no grid configured (add grid.<parameter> entries)")
    with _stage("load"):
        data = corpus.load_dataset(config.dataset)
    with _stage("preprocess"):
        docs = _build_preprocessor(config).corpus(data)
        labels = np.array([d.label for d in docs])
    with _stage("split"):
        train_idx, _ = evaluation.train_test_split(labels, config.test_fraction, config.seed)
    train_docs = [docs[i] for i in train_idx]
    with _stage("embed"):
        emb = _train_embeddings(config, [d.tokens for d in train_docs])
    with _stage("vectorize"):
        features = balancing.FeatureMatrix(
            rows=_vectorize(emb, train_docs), labels=labels[train_idx]
        )
    with _stage("grid-search"):
        grid = evaluation.ParamGrid(params=dict(config.grid), k=config.cv_folds)
        balance = replace(config.balance, seed=config.seed + 1)
        search = evaluation.grid_search(
            features,
            grid,
            replace(config.gbdt, seed=config.seed + 2),
            balance=balance,
            seed=config.seed,
            n_jobs=config.threads,
        )

    best_config = replace_config(
        config, gbdt=replace(config.gbdt, **search.best_params), grid={}
    )
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    param_names = list(config.grid)
    header = ["technique", "embedding"] + param_names + ["mean_macro_f1"] + [
        f"fold{i}_macro_f1" for i in range(config.cv_folds)
    ]
    lines = [",".join(header)]
    for row in search.results:
        cells = [config.balance.technique, config.embedding]
        cells += [_fmt_value(row[n]) for n in param_names]
        cells.append(repr(row["mean_macro_f1"]))
        cells += [repr(s) for s in row["fold_scores"]]
        lines.append(",".join(cells))
    results_csv = out / "grid_results.csv"
    results_csv.write_text("\n".join(lines) + "\n", encoding="utf-8")
    best_config_file = out / "best_config.snapshot"
    best_config_file.write_text(config_snapshot_text(best_config), encoding="utf-8")
    return GridRunResult(
        search=search,
        best_config=best_config,
        results_csv=results_csv,
        best_config_file=best_config_file,
    )
