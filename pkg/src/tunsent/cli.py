"""Command-line entry points: report, train, predict, evaluate, grid-search.

Exit codes are a stable contract: 0 success, 1 runtime/training failure,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import corpus, evaluation, pipeline

_BAR_WIDTH = 40


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--seed", type=int, help="master seed for every stage")
    parser.add_argument("--threads", type=int, help="worker threads (1 = deterministic)")
    parser.add_argument("--output", help="directory for artifacts and reports")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tunsent",
        description="Dialect sentiment pipeline: subword embeddings + boosted trees.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_report = sub.add_parser("report", help="class distribution of a dataset")
    _common_flags(p_report)
    p_report.add_argument("--dataset", help="label<TAB>text TSV file")
    p_report.set_defaults(func=cmd_report)

    p_train = sub.add_parser("train", help="train embeddings + classifier, evaluate on held-out split")
    _common_flags(p_train)
    p_train.add_argument("--dataset")
    p_train.add_argument("--embedding", choices=pipeline.EMBEDDING_CHOICES)
    p_train.add_argument("--balance", choices=["none", "under", "over", "smote", "adasyn"])
    p_train.add_argument("--k-neighbors", type=int, dest="k_neighbors")
    p_train.add_argument("--beta", type=float)
    p_train.add_argument("--stopwords", help="stopword list, one word per line")
    p_train.add_argument("--stem-rules", dest="stem_rules", help="suffix rules, one per line")
    p_train.add_argument("--stemming", action="store_true", default=None)
    p_train.set_defaults(func=cmd_train)

    p_predict = sub.add_parser("predict", help="score texts with trained artifacts")
    _common_flags(p_predict)
    p_predict.add_argument("--model-dir", dest="model_dir", help="artifact directory")
    p_predict.add_argument("--input", help="text file, one message per line")
    p_predict.add_argument("--text", help="score a single message")
    p_predict.add_argument(
        "--threshold",
        type=float,
        help="use the band rule on the positive-class probability instead of argmax",
    )
    p_predict.set_defaults(func=cmd_predict)

    p_eval = sub.add_parser("evaluate", help="score a labeled dataset, write report")
    _common_flags(p_eval)
    p_eval.add_argument("--model-dir", dest="model_dir")
    p_eval.add_argument("--dataset")
    p_eval.add_argument(
        "--compare",
        action="store_true",
        help="retrain per balancing technique (under/over/adasyn) and tabulate",
    )
    p_eval.set_defaults(func=cmd_evaluate)

    p_grid = sub.add_parser("grid-search", help="cross-validated hyperparameter sweep")
    _common_flags(p_grid)
    p_grid.add_argument("--dataset")
    p_grid.set_defaults(func=cmd_grid_search)

    return parser


def _base_config(args) -> pipeline.PipelineConfig:
    config = pipeline.load_config(args.config) if args.config else pipeline.PipelineConfig()
    if getattr(args, "dataset", None):
        config.dataset = args.dataset
    if args.seed is not None:
        config.seed = args.seed
    if args.threads is not None:
        config.threads = args.threads
    if args.output is not None:
        config.output_dir = args.output
    return config


def cmd_report(args) -> int:
    config = _base_config(args)
    if not config.dataset:
        raise pipeline.ConfigError("report needs --dataset (or a config with one)")
    data = corpus.load_dataset(config.dataset)
    dist = corpus.class_histogram(data)
    max_count = max(dist.counts.values()) or 1
    print(f"dataset: {config.dataset} ({len(data)} records)")
    print("label  count  proportion")
    for label in corpus.LABELS:
        count = dist.counts[label]
        bar = "#" * round(_BAR_WIDTH * count / max_count)
        print(f"{label:>5}  {count:5d}  {dist.proportions[label]:10.4f}  {bar}")
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "class_distribution.csv"
    lines = ["label,count,proportion"]
    lines += [
        f"{label},{dist.counts[label]},{repr(dist.proportions[label])}"
        for label in corpus.LABELS
    ]
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {csv_path}")
    return 0


def cmd_train(args) -> int:
    config = _base_config(args)
    if args.embedding:
        config.embedding = args.embedding
    if args.stopwords:
        config.stopwords_file = args.stopwords
    if args.stem_rules:
        config.stem_rules_file = args.stem_rules
    if args.stemming:
        config.stemming = True
    balance_changes = {}
    if args.balance:
        balance_changes["technique"] = args.balance
    if args.k_neighbors is not None:
        balance_changes["k_neighbors"] = args.k_neighbors
    if args.beta is not None:
        balance_changes["beta"] = args.beta
    if balance_changes:
        config.balance = replace(config.balance, **balance_changes)

    result = pipeline.run_train(config)
    print(f"train: {len(result.train_indices)} train / {len(result.test_indices)} test records")
    print(f"train: held-out macro F1 = {result.report.macro_f1:.4f}")
    print(f"train: artifacts in {config.output_dir}")
    return 0


def _read_input_texts(args) -> list[str]:
    if (args.text is None) == (args.input is None):
        raise pipeline.ConfigError("predict needs exactly one of --text or --input")
    if args.text is not None:
        return [args.text]
    path = Path(args.input)
    if not path.exists():
        raise pipeline.ConfigError(f"input file does not exist: {path}")
    lines = path.read_text("utf-8").split("\n")
    if lines and lines[-1] == "":  # trailing newline is not a record
        lines.pop()
    return lines


def cmd_predict(args) -> int:
    model_dir = args.model_dir or args.output or "runs"
    texts = _read_input_texts(args)
    loaded = pipeline.load_artifacts(model_dir)
    if args.threshold is not None and not (0.5 < args.threshold <= 1.0):
        raise pipeline.ConfigError("--threshold must be in (0.5, 1]")
    results = pipeline.predict_texts(loaded, texts, args.threshold)
    for text, (label, proba) in zip(texts, results):
        print(f"{label}\t{proba[0]:.6f}\t{proba[1]:.6f}\t{proba[2]:.6f}\t{text}")
    return 0


def cmd_evaluate(args) -> int:
    config = _base_config(args)
    if args.compare:
        if not config.dataset:
            raise pipeline.ConfigError("evaluate --compare needs --dataset (or a config with one)")
        reports = pipeline.run_compare(config)
        for technique, report in zip(pipeline.COMPARE_TECHNIQUES, reports):
            print(f"compare: {technique}: macro F1 = {report.macro_f1:.4f}")
        print(f"compare: wrote {Path(config.output_dir) / 'compare.csv'}")
        return 0
    if not config.dataset:
        raise pipeline.ConfigError("evaluate needs --dataset (or a config with one)")
    model_dir = args.model_dir or args.output or "runs"
    loaded = pipeline.load_artifacts(model_dir)
    report = pipeline.run_evaluate(loaded, config.dataset, config.output_dir)
    print(pipeline.report_text(report))
    print(f"evaluate: wrote {Path(config.output_dir) / pipeline.REPORT_CSV}")
    return 0


def cmd_grid_search(args) -> int:
    config = _base_config(args)
    result = pipeline.run_grid_search(config)
    search = result.search
    n_combos = len(search.results)
    print(
        f"grid-search: {search.fit_count} fits "
        f"({n_combos} combinations x {config.cv_folds} folds)"
    )
    print(f"grid-search: best mean macro F1 = {search.best_score:.4f} at {search.best_params}")
    print(f"grid-search: results in {result.results_csv}")
    print(f"grid-search: best config in {result.best_config_file}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (pipeline.ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (
        pipeline.PipelineError,
        corpus.DatasetError,
        evaluation.EvaluationError,
        evaluation.GridSearchError,
        ValueError,
        RuntimeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
