"""Sweep execution: one trained model, CSV row, and log record per run.

Runs execute sequentially by default since each already parallelizes its
own map/reduce jobs; a parallel_runs escape hatch exists for small runs.
Per-run failures are recorded in the log and skipped, so one bad
configuration never aborts a sweep.
"""

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor

from .classifier import evaluate
from .config import ExperimentSpec, enumerate_runs
from .datasets import load_cifar, partition
from .errors import ConfigError
from .model_io import save_model
from .pipeline import infer, resolve_layer_configs, train_stack
from .seeding import derive_seed

METRICS_COLUMNS = (
    "run_id",
    "depth",
    "omega",
    "stride",
    "whitening",
    "centroids",
    "accuracy",
    "train_seconds",
    "config_hash",
)


def load_images(paths, fmt: str, limit: int = 0) -> list:
    """Concatenate CIFAR binary files; limit > 0 truncates the result."""
    images = []
    for path in paths:
        images.extend(load_cifar(path, fmt))
    return images[:limit] if limit else images


def load_split(spec: ExperimentSpec):
    """The (train, test) image lists a spec points at."""
    ds = spec.dataset
    train = load_images(ds["train"], ds["format"], ds["limit"])
    test = load_images(ds["test"], ds["format"], ds["test_limit"])
    return train, test


def execute_run(spec: ExperimentSpec, run, parts, test_images) -> dict:
    """Train, score, and persist one run; returns its log record."""
    exec_cfg = spec.executor_config()
    configs = resolve_layer_configs(run.layer_dicts, exec_cfg.map_tasks)
    start = time.perf_counter()
    model = train_stack(
        parts, configs, exec_cfg, seed=spec.seed, svm_reg=spec.reg, svm_epochs=spec.epochs
    )
    train_seconds = time.perf_counter() - start
    predicted = infer(model, test_images, exec_cfg)
    truth = [img.label for img in test_images]
    accuracy, _ = evaluate(predicted, truth)
    model_file = os.path.join(spec.output_dir, f"{run.run_id}.ddrl")
    save_model(model, model_file)
    return {
        "run_id": run.run_id,
        "outcome": "ok",
        **run.conditions,
        "accuracy": accuracy,
        "train_seconds": round(train_seconds, 3),
        "config_hash": model.config_hash,
        "seed": spec.seed,
        "timings": model.timings,
        "model_file": model_file,
        "resolved_config": model.resolved_config,
    }


def _append_metrics(path: str, records):
    new_file = not os.path.exists(path)
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_COLUMNS, extrasaction="ignore")
        if new_file:
            writer.writeheader()
        for record in records:
            if record["outcome"] == "ok":
                writer.writerow({**record, "accuracy": f"{record['accuracy']:.6f}"})


def _append_log(path: str, records):
    with open(path, "a", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def run_experiment(spec: ExperimentSpec, parallel_runs: int = 1) -> dict:
    """Execute every enumerated run; returns a summary with file paths."""
    if not spec.dataset["train"]:
        raise ConfigError("/dataset/train: an experiment needs training data")
    if not spec.dataset["test"]:
        raise ConfigError("/dataset/test: an experiment needs a test set to score")
    if parallel_runs < 1:
        raise ConfigError(f"parallel_runs must be >= 1, got {parallel_runs}")
    runs = enumerate_runs(spec)
    os.makedirs(spec.output_dir, exist_ok=True)
    train_images, test_images = load_split(spec)
    parts = partition(
        train_images, spec.fractions, seed=derive_seed(spec.seed, "partition")
    )

    def attempt(run):
        try:
            return execute_run(spec, run, parts, test_images)
        except Exception as exc:  # noqa: BLE001 - a failed run must not kill the sweep
            return {
                "run_id": run.run_id,
                "outcome": f"error:{type(exc).__name__}",
                **run.conditions,
                "error": str(exc),
                "seed": spec.seed,
            }

    if parallel_runs == 1:
        records = [attempt(run) for run in runs]
    else:
        with ThreadPoolExecutor(max_workers=parallel_runs) as pool:
            records = list(pool.map(attempt, runs))
    metrics_csv = os.path.join(spec.output_dir, "metrics.csv")
    log_path = os.path.join(spec.output_dir, "experiment_log.jsonl")
    _append_metrics(metrics_csv, records)
    _append_log(log_path, records)
    failures = sum(1 for r in records if r["outcome"] != "ok")
    return {
        "runs": len(records),
        "failures": failures,
        "metrics_csv": metrics_csv,
        "log": log_path,
        "records": records,
    }
