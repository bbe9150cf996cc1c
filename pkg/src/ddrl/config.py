"""Strict JSON experiment configuration.

A config document names the dataset, partition fractions, layer stack,
executor and classifier settings, and an optional sweep grid.  Unknown
keys, type mismatches, and constraint violations raise ConfigError with
the JSON-pointer path of the offending value.  Parsing fills every
default; the resolved document re-parses to an identical spec, so it
serves as a complete provenance record.
"""

import copy
import itertools
import json
import os
from dataclasses import dataclass
from dataclasses import fields as dataclass_fields

from .classifier import DEFAULT_EPOCHS, DEFAULT_REG
from .datasets import default_fractions
from .errors import ConfigError
from .executor import DEFAULT_MAX_RETRIES, DEFAULT_WORKERS, ExecutorConfig
from .pipeline import MAX_DEPTH, LayerConfig, resolve_layer_configs

DATASET_FORMATS = ("cifar10", "cifar100")
SWEEP_AXES = ("depth", "rf_size", "stride", "whitening")

_LAYER_FIELDS = {f.name: f for f in dataclass_fields(LayerConfig)}
_INT_LAYER_KEYS = {
    "k",
    "rf_size",
    "stride",
    "group_size",
    "patches_per_image",
    "max_patches",
    "whiten_patches",
    "grouping_samples",
    "kmeans_max_iters",
}
_FLOAT_LAYER_KEYS = {"zeta", "sigma", "epsilon", "kmeans_tol"}


def _fail(pointer: str, message: str):
    raise ConfigError(f"{pointer or '/'}: {message}")


def _as_int(value, pointer: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(pointer, f"expected an integer, got {value!r}")
    return value


def _as_float(value, pointer: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(pointer, f"expected a number, got {value!r}")
    return float(value)


def _as_bool(value, pointer: str) -> bool:
    if not isinstance(value, bool):
        _fail(pointer, f"expected true or false, got {value!r}")
    return value


def _as_str(value, pointer: str) -> str:
    if not isinstance(value, str):
        _fail(pointer, f"expected a string, got {value!r}")
    return value


def _as_object(value, pointer: str, allowed) -> dict:
    if not isinstance(value, dict):
        _fail(pointer, f"expected an object, got {type(value).__name__}")
    for key in value:
        if key not in allowed:
            _fail(f"{pointer}/{key}", "unknown key")
    return value


def _as_paths(value, pointer: str, base_dir: str) -> list:
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or any(not isinstance(p, str) for p in value):
        _fail(pointer, f"expected a path or list of paths, got {value!r}")
    resolved = []
    for i, p in enumerate(value):
        full = p if os.path.isabs(p) else os.path.join(base_dir, p)
        full = os.path.abspath(full)
        if not os.path.isfile(full):
            _fail(f"{pointer}/{i}", f"no such file: {full}")
        resolved.append(full)
    return resolved


def _parse_dataset(raw, base_dir: str) -> dict:
    allowed = ("train", "test", "format", "limit", "test_limit")
    raw = _as_object(raw, "/dataset", allowed)
    fmt = _as_str(raw.get("format", "cifar10"), "/dataset/format")
    if fmt not in DATASET_FORMATS:
        _fail("/dataset/format", f"expected one of {DATASET_FORMATS}, got {fmt!r}")
    out = {
        "train": _as_paths(raw.get("train", []), "/dataset/train", base_dir),
        "test": _as_paths(raw.get("test", []), "/dataset/test", base_dir),
        "format": fmt,
        "limit": _as_int(raw.get("limit", 0), "/dataset/limit"),
        "test_limit": _as_int(raw.get("test_limit", 0), "/dataset/test_limit"),
    }
    for key in ("limit", "test_limit"):
        if out[key] < 0:
            _fail(f"/dataset/{key}", f"must be >= 0, got {out[key]}")
    return out


def _parse_fractions(raw) -> list:
    if not isinstance(raw, list) or len(raw) != 6:
        _fail("/partition/fractions", f"expected a list of 6 numbers, got {raw!r}")
    out = [_as_float(v, f"/partition/fractions/{i}") for i, v in enumerate(raw)]
    if any(v < 0 for v in out):
        _fail("/partition/fractions", "fractions must be non-negative")
    if abs(sum(out) - 1.0) > 1e-9:
        _fail("/partition/fractions", f"fractions sum to {sum(out)!r}, expected 1")
    return out


def _parse_layer(raw, index: int) -> dict:
    pointer = f"/layers/{index}"
    if not isinstance(raw, dict):
        _fail(pointer, f"expected an object, got {type(raw).__name__}")
    out = {}
    for key, value in raw.items():
        if key not in _LAYER_FIELDS:
            _fail(f"{pointer}/{key}", "unknown key")
        if key in _INT_LAYER_KEYS:
            out[key] = _as_int(value, f"{pointer}/{key}")
        elif key in _FLOAT_LAYER_KEYS:
            out[key] = _as_float(value, f"{pointer}/{key}")
        elif key == "whitening":
            out[key] = _as_bool(value, f"{pointer}/{key}")
        else:
            out[key] = _as_str(value, f"{pointer}/{key}")
    if "k" not in out:
        _fail(f"{pointer}/k", "k is required")
    return out


def _parse_executor(raw) -> dict:
    allowed = ("workers", "max_retries", "map_tasks", "audit_path")
    raw = _as_object(raw, "/executor", allowed)
    out = {
        "workers": _as_int(raw.get("workers", DEFAULT_WORKERS), "/executor/workers"),
        "max_retries": _as_int(
            raw.get("max_retries", DEFAULT_MAX_RETRIES), "/executor/max_retries"
        ),
        "map_tasks": _as_int(raw.get("map_tasks", DEFAULT_WORKERS), "/executor/map_tasks"),
        "audit_path": _as_str(raw.get("audit_path", ""), "/executor/audit_path"),
    }
    if out["workers"] < 1:
        _fail("/executor/workers", f"must be >= 1, got {out['workers']}")
    if out["max_retries"] < 0:
        _fail("/executor/max_retries", f"must be >= 0, got {out['max_retries']}")
    if out["map_tasks"] < 1:
        _fail("/executor/map_tasks", f"must be >= 1, got {out['map_tasks']}")
    return out


def _parse_classifier(raw) -> dict:
    raw = _as_object(raw, "/classifier", ("reg", "epochs"))
    out = {
        "reg": _as_float(raw.get("reg", DEFAULT_REG), "/classifier/reg"),
        "epochs": _as_int(raw.get("epochs", DEFAULT_EPOCHS), "/classifier/epochs"),
    }
    if out["reg"] <= 0:
        _fail("/classifier/reg", f"must be > 0, got {out['reg']}")
    if out["epochs"] < 1:
        _fail("/classifier/epochs", f"must be >= 1, got {out['epochs']}")
    return out


def _parse_sweep(raw, n_layers: int) -> dict:
    raw = _as_object(raw, "/sweep", SWEEP_AXES)
    out = {}
    for axis, values in raw.items():
        pointer = f"/sweep/{axis}"
        if not isinstance(values, list) or not values:
            _fail(pointer, f"expected a non-empty list, got {values!r}")
        if axis == "whitening":
            out[axis] = [_as_bool(v, f"{pointer}/{i}") for i, v in enumerate(values)]
            continue
        items = [_as_int(v, f"{pointer}/{i}") for i, v in enumerate(values)]
        if axis == "depth":
            bad = [d for d in items if d < 1 or d > min(n_layers, MAX_DEPTH)]
            if bad:
                _fail(
                    pointer,
                    f"depth values {bad} outside 1..{min(n_layers, MAX_DEPTH)} "
                    f"(config declares {n_layers} layers)",
                )
        elif any(v < 1 for v in items):
            _fail(pointer, f"values must be >= 1, got {items}")
        out[axis] = items
    if out and n_layers == 0:
        _fail("/sweep", "a sweep requires at least one layer")
    return out


@dataclass
class ExperimentSpec:
    """A fully-resolved configuration; `resolved` re-parses identically."""

    resolved: dict

    @property
    def seed(self) -> int:
        return self.resolved["seed"]

    @property
    def output_dir(self) -> str:
        return self.resolved["output_dir"]

    @property
    def dataset(self) -> dict:
        return self.resolved["dataset"]

    @property
    def fractions(self) -> list:
        return self.resolved["partition"]["fractions"]

    @property
    def layer_dicts(self) -> list:
        return self.resolved["layers"]

    @property
    def sweep(self) -> dict:
        return self.resolved["sweep"]

    @property
    def model_path(self) -> str:
        return self.resolved["model"]

    @property
    def export_features(self) -> bool:
        return self.resolved["export_features"]

    @property
    def reg(self) -> float:
        return self.resolved["classifier"]["reg"]

    @property
    def epochs(self) -> int:
        return self.resolved["classifier"]["epochs"]

    def executor_config(self) -> ExecutorConfig:
        e = self.resolved["executor"]
        return ExecutorConfig(
            workers=e["workers"],
            max_retries=e["max_retries"],
            map_tasks=e["map_tasks"],
            audit_path=e["audit_path"],
        )

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.resolved, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def with_overrides(self, workers=None, seed=None, output_dir=None) -> "ExperimentSpec":
        data = copy.deepcopy(self.resolved)
        if workers is not None:
            data["executor"]["workers"] = workers
        if seed is not None:
            data["seed"] = seed
        if output_dir is not None:
            data["output_dir"] = output_dir
        return parse_config_data(data, base_dir=os.getcwd())


TOP_LEVEL_KEYS = (
    "dataset",
    "partition",
    "seed",
    "output_dir",
    "model",
    "export_features",
    "layers",
    "executor",
    "classifier",
    "sweep",
)


def parse_config_data(data, base_dir: str = ".") -> ExperimentSpec:
    """Validate a decoded JSON document and fill every default."""
    data = _as_object(data, "", TOP_LEVEL_KEYS)
    partition_raw = _as_object(data.get("partition", {}), "/partition", ("fractions",))
    executor = _parse_executor(data.get("executor", {}))
    layers_raw = data.get("layers", [])
    if not isinstance(layers_raw, list):
        _fail("/layers", f"expected a list, got {type(layers_raw).__name__}")
    layers = [_parse_layer(entry, i) for i, entry in enumerate(layers_raw)]
    if layers:
        try:
            configs = resolve_layer_configs(layers, executor["map_tasks"])
            for i, cfg in enumerate(configs):
                cfg.validate(i)
        except ConfigError as exc:
            _fail("/layers", str(exc))
        layers = [dict(cfg.__dict__) for cfg in configs]
    seed = _as_int(data.get("seed", 0), "/seed")
    if seed < 0:
        _fail("/seed", f"must be >= 0, got {seed}")
    output_dir = _as_str(data.get("output_dir", "out"), "/output_dir")
    if not output_dir:
        _fail("/output_dir", "must be a non-empty path")
    if not os.path.isabs(output_dir):
        output_dir = os.path.abspath(os.path.join(base_dir, output_dir))
    model = _as_str(data.get("model", ""), "/model")
    if model:
        if not os.path.isabs(model):
            model = os.path.abspath(os.path.join(base_dir, model))
        if not os.path.isfile(model):
            _fail("/model", f"no such file: {model}")
    resolved = {
        "dataset": _parse_dataset(data.get("dataset", {}), base_dir),
        "partition": {
            "fractions": _parse_fractions(
                partition_raw.get("fractions", list(default_fractions()))
            )
        },
        "seed": seed,
        "output_dir": output_dir,
        "model": model,
        "export_features": _as_bool(
            data.get("export_features", False), "/export_features"
        ),
        "layers": layers,
        "executor": executor,
        "classifier": _parse_classifier(data.get("classifier", {})),
        "sweep": _parse_sweep(data.get("sweep", {}), len(layers)),
    }
    return ExperimentSpec(resolved=resolved)


def parse_config(path) -> ExperimentSpec:
    """Load, validate, and resolve a JSON config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config_data(data, base_dir=os.path.dirname(os.path.abspath(path)))


@dataclass
class RunSpec:
    """One enumerated run of a sweep: its layer stack and condition labels."""

    run_id: str
    layer_dicts: list
    conditions: dict


def enumerate_runs(spec: ExperimentSpec) -> list:
    """Cartesian sweep expansion in a fixed axis order.

    depth truncates the layer list (the new final layer drops its
    group_size); rf_size and stride override the first layer, matching
    ablations of the front-end receptive field; whitening toggles every
    layer.  Without a sweep the base configuration is the single run.
    """
    if not spec.layer_dicts:
        raise ConfigError("/layers: at least one layer is required to enumerate runs")
    axes = [spec.sweep.get(axis, [None]) for axis in SWEEP_AXES]
    runs = []
    for i, combo in enumerate(itertools.product(*axes)):
        chosen = dict(zip(SWEEP_AXES, combo))
        layers = copy.deepcopy(spec.layer_dicts)
        if chosen["depth"] is not None:
            layers = layers[: chosen["depth"]]
            layers[-1]["group_size"] = 0
        if chosen["rf_size"] is not None:
            layers[0]["rf_size"] = chosen["rf_size"]
        if chosen["stride"] is not None:
            layers[0]["stride"] = chosen["stride"]
        if chosen["whitening"] is not None:
            for layer in layers:
                layer["whitening"] = chosen["whitening"]
        runs.append(
            RunSpec(
                run_id=f"run{i:03d}",
                layer_dicts=layers,
                conditions={
                    "depth": len(layers),
                    "omega": layers[0]["rf_size"],
                    "stride": layers[0]["stride"],
                    "whitening": "on" if layers[0]["whitening"] else "off",
                    "centroids": "/".join(str(layer["k"]) for layer in layers),
                },
            )
        )
    return runs
