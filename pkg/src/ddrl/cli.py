"""Command line front end: ingest, train, infer, and experiment.

Every subcommand takes --config plus optional --workers / --seed / --out
overrides.  Exit codes: 0 success, 1 one or more sweep runs failed,
2 configuration or data error.
"""

import argparse
import json
import os
import sys
import time

from .classifier import evaluate
from .config import parse_config
from .datasets import partition, save_cifar
from .errors import ConfigError, DDRLError
from .experiment import load_images, load_split, run_experiment
from .model_io import load_model, save_model
from .pipeline import export_features_csv, infer, resolve_layer_configs, train_stack
from .seeding import derive_seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddrl",
        description="Hierarchical distributed dictionary-learning image classifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "ingest": "Load a dataset, partition it, and write the six subsets.",
        "train": "Train a stack on the configured dataset and save the model.",
        "infer": "Predict labels for a dataset with a saved model.",
        "experiment": "Run the configured sweep and emit metrics files.",
    }
    for name, help_text in commands.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="JSON config file")
        cmd.add_argument("--workers", type=int, help="override executor workers")
        cmd.add_argument("--seed", type=int, help="override the top-level seed")
        cmd.add_argument("--out", help="override the output directory")
        if name == "experiment":
            cmd.add_argument(
                "--parallel-runs",
                type=int,
                default=1,
                help="run up to N sweep runs concurrently (default: sequential)",
            )
    return parser


def _require(condition: bool, pointer: str, message: str):
    if not condition:
        raise ConfigError(f"{pointer}: {message}")


def cmd_ingest(spec) -> int:
    _require(bool(spec.dataset["train"]), "/dataset/train", "ingest needs input files")
    images = load_images(
        spec.dataset["train"], spec.dataset["format"], spec.dataset["limit"]
    )
    parts = partition(images, spec.fractions, seed=derive_seed(spec.seed, "partition"))
    os.makedirs(spec.output_dir, exist_ok=True)
    files = []
    for i, subset in enumerate(parts):
        path = os.path.join(spec.output_dir, f"subset_{i}.bin")
        save_cifar(subset, path, spec.dataset["format"])
        files.append(path)
    manifest = {
        "format": spec.dataset["format"],
        "seed": spec.seed,
        "fractions": spec.fractions,
        "sizes": parts.sizes(),
        "files": files,
    }
    with open(os.path.join(spec.output_dir, "ingest_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"ingested {len(images)} images into subsets {parts.sizes()}")
    return 0


def cmd_train(spec) -> int:
    _require(bool(spec.dataset["train"]), "/dataset/train", "train needs input files")
    _require(bool(spec.layer_dicts), "/layers", "train needs at least one layer")
    os.makedirs(spec.output_dir, exist_ok=True)
    exec_cfg = spec.executor_config()
    if not exec_cfg.audit_path:
        exec_cfg.audit_path = os.path.join(spec.output_dir, "audit.jsonl")
    train_images, test_images = load_split(spec)
    parts = partition(
        train_images, spec.fractions, seed=derive_seed(spec.seed, "partition")
    )
    configs = resolve_layer_configs(spec.layer_dicts, exec_cfg.map_tasks)
    start = time.perf_counter()
    model = train_stack(
        parts, configs, exec_cfg, seed=spec.seed, svm_reg=spec.reg, svm_epochs=spec.epochs
    )
    train_seconds = round(time.perf_counter() - start, 3)
    model_file = os.path.join(spec.output_dir, "model.ddrl")
    save_model(model, model_file)
    spec.dump(os.path.join(spec.output_dir, "resolved_config.json"))
    metrics = {
        "model_file": model_file,
        "config_hash": model.config_hash,
        "seed": spec.seed,
        "train_seconds": train_seconds,
        "timings": model.timings,
        "feature_dim": model.feature_dim,
    }
    if test_images:
        predicted = infer(model, test_images, exec_cfg)
        accuracy, _ = evaluate(predicted, [img.label for img in test_images])
        metrics["accuracy"] = accuracy
        print(f"accuracy {accuracy:.4f} on {len(test_images)} test images")
    with open(os.path.join(spec.output_dir, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"trained {model.depth}-layer model in {train_seconds}s -> {model_file}")
    return 0


def cmd_infer(spec) -> int:
    _require(bool(spec.model_path), "/model", "infer needs a trained model file")
    _require(bool(spec.dataset["test"]), "/dataset/test", "infer needs input images")
    model = load_model(spec.model_path)
    images = load_images(
        spec.dataset["test"], spec.dataset["format"], spec.dataset["test_limit"]
    )
    exec_cfg = spec.executor_config()
    os.makedirs(spec.output_dir, exist_ok=True)
    predicted = infer(model, images, exec_cfg)
    predictions_csv = os.path.join(spec.output_dir, "predictions.csv")
    with open(predictions_csv, "w", encoding="utf-8") as fh:
        fh.write("index,label,predicted\n")
        for i, (img, pred) in enumerate(zip(images, predicted)):
            fh.write(f"{i},{img.label},{int(pred)}\n")
    accuracy, _ = evaluate(predicted, [img.label for img in images])
    print(f"accuracy {accuracy:.4f} on {len(images)} images -> {predictions_csv}")
    if spec.export_features:
        features_csv = os.path.join(spec.output_dir, "features.csv")
        export_features_csv(model, images, features_csv, exec_cfg)
        print(f"features -> {features_csv}")
    return 0


def cmd_experiment(spec, parallel_runs: int = 1) -> int:
    summary = run_experiment(spec, parallel_runs=parallel_runs)
    for record in summary["records"]:
        if record["outcome"] == "ok":
            print(f"{record['run_id']}: accuracy {record['accuracy']:.4f}")
        else:
            print(f"{record['run_id']}: {record['outcome']} {record['error']}")
    print(
        f"{summary['runs']} runs, {summary['failures']} failures "
        f"-> {summary['metrics_csv']}"
    )
    return 1 if summary["failures"] else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = parse_config(args.config).with_overrides(
            workers=args.workers, seed=args.seed, output_dir=args.out
        )
        if args.command == "ingest":
            return cmd_ingest(spec)
        if args.command == "train":
            return cmd_train(spec)
        if args.command == "infer":
            return cmd_infer(spec)
        return cmd_experiment(spec, parallel_runs=args.parallel_runs)
    except DDRLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
