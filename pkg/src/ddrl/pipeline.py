"""Multi-layer stack orchestration, persistence hooks, and inference.

Training walks the six-way dataset partition: layer i (0-based) learns
its whitening and dictionary from receptive-field vectors sampled out of
subset i's representation, its feature grouping from subset i+1, and the
classifier trains on the pooled features of the labeled final subset.
All heavy stages run as map/reduce jobs, so worker count and injected
faults never change the result.

Layer 0 shards its sample rows across map tasks, trains one full-size
dictionary per shard, and merges them by weighted re-clustering.  Deeper
layers train one dictionary per input channel group (equal shares of the
layer's centroid budget) and concatenate the blocks in group order.
Pre-pool response grids flow between layers; quadrant pooling applies
only in front of the classifier.
"""

import math
import time
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .classifier import DEFAULT_EPOCHS, DEFAULT_REG, LinearModel, train_svm
from .classifier import predict as classify
from .datasets import LabeledImage, default_fractions
from .datasets import partition as partition_images
from .datasets import resize_to_working
from .dictionary import (
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    Dictionary,
    concat_dictionaries,
    merge_dictionaries,
    train_dictionary,
)
from .encoder import FoldedEncoder, encode_image, encode_image_folded, extract_grid, pooled_vector
from .errors import ConfigError, InsufficientDataError, ShapeError
from .executor import ExecutorConfig, MapReduceExecutor, MapReduceJob, partition_shards
from .grouping import build_groups
from .preprocessing import DEFAULT_EPSILON, DEFAULT_SIGMA, PCAWhitener, normalize_rows
from .seeding import config_hash, derive_seed, rng_for

MAX_DEPTH = 5
INPUT_SIDE = 32
INPUT_CHANNELS = 3
MERGE_STRATEGIES = ("recluster", "concat")


@dataclass
class LayerConfig:
    """Per-layer hyperparameters.

    group_size is the feature-map size T handed to the next layer; it
    must be 0 on the final layer (no handoff) and positive elsewhere.
    """

    k: int
    rf_size: int = 6
    stride: int = 1
    zeta: float = 0.25
    sigma: float = DEFAULT_SIGMA
    epsilon: float = DEFAULT_EPSILON
    whitening: bool = True
    group_size: int = 0
    patches_per_image: int = 400
    max_patches: int = 400_000
    whiten_patches: int = 50_000
    grouping_samples: int = 100_000
    kmeans_max_iters: int = DEFAULT_MAX_ITERS
    kmeans_tol: float = DEFAULT_TOL
    merge_strategy: str = "recluster"

    def validate(self, index: int):
        where = f"layer {index}"
        checks = [
            (self.k >= 1, f"k must be >= 1, got {self.k}"),
            (self.rf_size >= 1, f"rf_size must be >= 1, got {self.rf_size}"),
            (self.stride >= 1, f"stride must be >= 1, got {self.stride}"),
            (self.zeta >= 0, f"zeta must be >= 0, got {self.zeta}"),
            (self.sigma >= 0, f"sigma must be >= 0, got {self.sigma}"),
            (self.epsilon >= 0, f"epsilon must be >= 0, got {self.epsilon}"),
            (self.group_size >= 0, f"group_size must be >= 0, got {self.group_size}"),
            (self.patches_per_image >= 1, "patches_per_image must be >= 1"),
            (self.max_patches >= 1, "max_patches must be >= 1"),
            (self.whiten_patches >= 2, "whiten_patches must be >= 2"),
            (self.grouping_samples >= 2, "grouping_samples must be >= 2"),
            (self.kmeans_max_iters >= 1, "kmeans_max_iters must be >= 1"),
            (self.kmeans_tol >= 0, "kmeans_tol must be >= 0"),
            (
                self.merge_strategy in MERGE_STRATEGIES,
                f"merge_strategy must be one of {MERGE_STRATEGIES}, got {self.merge_strategy!r}",
            ),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(f"{where}: {message}")


def validate_stack(configs, input_side: int = INPUT_SIDE, input_channels: int = INPUT_CHANNELS):
    """Dry-run dimensional check of a layer chain; cheap and exhaustive.

    Returns one dict per layer with the input side, response grid side,
    patch dimension, input block count, and per-block centroid share.
    The full training run accepts a configuration exactly when this
    check does.
    """
    length = len(configs)
    if length < 1:
        raise ConfigError("at least one layer is required")
    if length > MAX_DEPTH:
        raise ConfigError(f"depth {length} exceeds the supported maximum of {MAX_DEPTH}")
    side, blocks, block_channels = input_side, 1, input_channels
    chain = []
    for i, cfg in enumerate(configs):
        cfg.validate(i)
        final = i == length - 1
        if cfg.rf_size > side:
            raise ConfigError(
                f"layer {i}: rf_size {cfg.rf_size} exceeds its input side {side}"
            )
        grid = (side - cfg.rf_size) // cfg.stride + 1
        if cfg.k % blocks != 0:
            raise ConfigError(
                f"layer {i}: k={cfg.k} is not divisible by its {blocks} input groups"
            )
        if final:
            if cfg.group_size != 0:
                raise ConfigError(
                    f"layer {i}: final layer takes no group_size, got {cfg.group_size}"
                )
            if grid < 2:
                raise ConfigError(
                    f"layer {i}: response grid {grid}x{grid} is too small for quadrant pooling"
                )
        else:
            if cfg.group_size < 1:
                raise ConfigError(f"layer {i}: non-final layer needs group_size >= 1")
            if cfg.k % cfg.group_size != 0:
                raise ConfigError(
                    f"layer {i}: group_size {cfg.group_size} does not divide k={cfg.k}"
                )
            if grid < configs[i + 1].rf_size:
                raise ConfigError(
                    f"layer {i}: response grid {grid}x{grid} is smaller than "
                    f"layer {i + 1}'s rf_size {configs[i + 1].rf_size}"
                )
        chain.append(
            {
                "side": side,
                "grid": grid,
                "dim": cfg.rf_size * cfg.rf_size * block_channels,
                "blocks": blocks,
                "share": cfg.k // blocks,
            }
        )
        side = grid
        if not final:
            blocks = cfg.k // cfg.group_size
            block_channels = cfg.group_size
    return chain


def resolve_layer_configs(layer_dicts, map_tasks: int):
    """Build LayerConfig objects, defaulting group_size to k / map_tasks.

    The default gives one feature group per map task on the next layer,
    so each map worker trains one group dictionary.
    """
    configs = []
    for i, entry in enumerate(layer_dicts):
        entry = dict(entry)
        unknown = set(entry) - {f.name for f in LayerConfig.__dataclass_fields__.values()}
        if unknown:
            raise ConfigError(f"layer {i}: unknown settings {sorted(unknown)}")
        if "k" not in entry:
            raise ConfigError(f"layer {i}: k is required")
        final = i == len(layer_dicts) - 1
        if not final and "group_size" not in entry:
            k = entry["k"]
            if k % map_tasks != 0:
                raise ConfigError(
                    f"layer {i}: cannot default group_size; k={k} is not "
                    f"divisible by map_tasks={map_tasks}"
                )
            entry["group_size"] = k // map_tasks
        configs.append(LayerConfig(**entry))
    return configs


@dataclass
class LayerModel:
    """A fitted layer: whitening, block dictionaries, output grouping."""

    cfg: LayerConfig
    whitener: object
    dictionary: Dictionary
    input_groups: list
    groups: list = None

    def __post_init__(self):
        n_blocks = len(self.input_groups)
        if self.dictionary.k % n_blocks != 0:
            raise ShapeError(
                f"dictionary k={self.dictionary.k} is not divisible by "
                f"{n_blocks} input groups"
            )
        share = self.dictionary.k // n_blocks
        dim = self.cfg.rf_size**2 * len(self.input_groups[0])
        if self.dictionary.dim != dim:
            raise ShapeError(
                f"dictionary dim {self.dictionary.dim} != rf_size^2 * channels = {dim}"
            )
        self._block_slices = [slice(b * share, (b + 1) * share) for b in range(n_blocks)]
        self._folded = [
            FoldedEncoder.fold(
                self.whitener, self.dictionary.atoms[s], self.cfg.zeta, self.cfg.sigma
            )
            for s in self._block_slices
        ]

    @property
    def k(self) -> int:
        return self.dictionary.k

    def encode(self, stack) -> np.ndarray:
        """Pre-pool response grid; block outputs concatenate channelwise."""
        parts = [
            encode_image_folded(
                stack[:, :, channels], folded, self.cfg.rf_size, self.cfg.stride
            )
            for channels, folded in zip(self.input_groups, self._folded)
        ]
        return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=2)

    def encode_literal(self, stack) -> np.ndarray:
        """Stage-by-stage reference path; must agree with encode()."""
        parts = [
            encode_image(
                stack[:, :, channels],
                self.whitener,
                self.dictionary.atoms[s],
                self.cfg.rf_size,
                self.cfg.stride,
                self.cfg.zeta,
                self.cfg.sigma,
            )
            for channels, s in zip(self.input_groups, self._block_slices)
        ]
        return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=2)


def encode_through(layers, pixels) -> np.ndarray:
    """Run an image (or feature stack) through fitted layers in order."""
    stack = np.asarray(pixels, dtype=np.float64)
    if stack.ndim == 2:
        stack = stack[:, :, None]
    for layer in layers:
        stack = layer.encode(stack)
    return stack


@dataclass
class StackModel:
    """The full trained artifact: layers, classifier, and provenance.

    timings maps stage names to wall seconds; it is informational only
    and is not persisted with the model.
    """

    layers: list
    classifier: LinearModel
    seed: int
    config_hash: str
    resolved_config: dict
    timings: dict = None

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def feature_dim(self) -> int:
        return 4 * self.layers[-1].k

    def encode(self, pixels) -> np.ndarray:
        return encode_through(self.layers, pixels)

    def pooled(self, pixels) -> np.ndarray:
        return pooled_vector(self.encode(pixels))


def _stack_of(img: LabeledImage) -> np.ndarray:
    return resize_to_working(img).pixels


def _subsample_rows(rows, cap, *seed_parts):
    if rows.shape[0] <= cap:
        return rows
    idx = rng_for(*seed_parts).choice(rows.shape[0], size=cap, replace=False)
    return rows[np.sort(idx)]


def sample_rows_job(
    images, layers, cfg: LayerConfig, input_groups, per_image: int, map_tasks: int, seed_parts, name
):
    """Map over image shards; sample normalized rf rows per input group.

    Sampling seeds key on the image's position within its subset, not on
    shard layout, so any map_tasks value draws identical rows per image.
    """
    shards = partition_shards(list(enumerate(images)), map_tasks)
    dims = [cfg.rf_size**2 * len(channels) for channels in input_groups]

    def map_fn(shard, task_seed):
        per_block = [[] for _ in input_groups]
        for gidx, img in shard:
            stack = encode_through(layers, _stack_of(img))
            for b, channels in enumerate(input_groups):
                patches, _ = extract_grid(stack[:, :, channels], cfg.rf_size, cfg.stride)
                take = min(per_image, patches.shape[0])
                pick = rng_for(*seed_parts, b, gidx).choice(
                    patches.shape[0], size=take, replace=False
                )
                per_block[b].append(normalize_rows(patches[np.sort(pick)], cfg.sigma))
        return [
            np.vstack(chunks) if chunks else np.empty((0, dims[b]))
            for b, chunks in enumerate(per_block)
        ]

    def reduce_fn(shard_blocks):
        return shard_blocks

    return MapReduceJob(shards, map_fn, reduce_fn, seed=derive_seed(*seed_parts), name=name)


def sharded_dictionary_job(
    shard_rows, k: int, seed: int, max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL, merge_strategy: str = "recluster", name: str = "dictionary",
):
    """First-layer training: full-size dictionary per data shard, then merge."""
    partitions = [rows for rows in shard_rows if rows.shape[0] > 0]
    if not partitions:
        raise InsufficientDataError("no rows available for dictionary training")

    def map_fn(rows, task_seed):
        return train_dictionary(rows, k, seed=task_seed, max_iters=max_iters, tol=tol)

    def reduce_fn(dicts):
        if merge_strategy == "concat":
            return concat_dictionaries(dicts)
        return merge_dictionaries(
            dicts, k_target=k, seed=derive_seed(seed, "merge"), max_iters=max_iters, tol=tol
        )

    return MapReduceJob(partitions, map_fn, reduce_fn, seed=seed, name=name)


def grouped_dictionary_job(
    block_rows, share: int, seed: int, max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL, name: str = "dictionary",
):
    """Deeper layers: one dictionary per input group, concatenated in order."""

    def map_fn(rows, task_seed):
        return train_dictionary(rows, share, seed=task_seed, max_iters=max_iters, tol=tol)

    return MapReduceJob(block_rows, map_fn, concat_dictionaries, seed=seed, name=name)


def _fit_layer(executor, images, layers, cfg, input_groups, layer_idx, seed):
    per_image = min(
        cfg.patches_per_image,
        max(1, cfg.max_patches // max(1, len(images) * len(input_groups))),
    )
    samples = executor.run(
        sample_rows_job(
            images,
            layers,
            cfg,
            input_groups,
            per_image,
            executor.cfg.map_tasks,
            (seed, "patches", layer_idx),
            name=f"layer{layer_idx}/samples",
        )
    )
    whitener = None
    if cfg.whitening:
        pooled = np.vstack([rows for shard in samples for rows in shard])
        pooled = _subsample_rows(pooled, cfg.whiten_patches, seed, "whiten", layer_idx)
        whitener = PCAWhitener(epsilon=cfg.epsilon).fit(pooled)

    def _whiten(rows):
        return whitener.transform(rows) if whitener is not None else rows

    if layer_idx == 0:
        job = sharded_dictionary_job(
            [_whiten(shard[0]) for shard in samples],
            cfg.k,
            derive_seed(seed, "dict", layer_idx),
            cfg.kmeans_max_iters,
            cfg.kmeans_tol,
            cfg.merge_strategy,
            name=f"layer{layer_idx}/dictionary",
        )
    else:
        block_rows = [
            _whiten(np.vstack([shard[b] for shard in samples]))
            for b in range(len(input_groups))
        ]
        job = grouped_dictionary_job(
            block_rows,
            cfg.k // len(input_groups),
            derive_seed(seed, "dict", layer_idx),
            cfg.kmeans_max_iters,
            cfg.kmeans_tol,
            name=f"layer{layer_idx}/dictionary",
        )
    dictionary = executor.run(job)
    return LayerModel(cfg, whitener, dictionary, input_groups, groups=None)


def _grouping_matrix(executor, layers, images, cfg, layer_idx, seed):
    if not images:
        raise ConfigError(
            f"subset {layer_idx + 1} is empty; layer {layer_idx} cannot be grouped"
        )
    per_image = max(1, math.ceil(cfg.grouping_samples / len(images)))
    shards = partition_shards(list(enumerate(images)), executor.cfg.map_tasks)

    def map_fn(shard, task_seed):
        rows = []
        for gidx, img in shard:
            grid = encode_through(layers, _stack_of(img))
            flat = grid.reshape(-1, grid.shape[2])
            take = min(per_image, flat.shape[0])
            pick = rng_for(seed, "group", layer_idx, gidx).choice(
                flat.shape[0], size=take, replace=False
            )
            rows.append(flat[np.sort(pick)])
        return np.vstack(rows) if rows else np.empty((0, layers[-1].k))

    job = MapReduceJob(
        shards, map_fn, np.vstack, seed=derive_seed(seed, "group", layer_idx),
        name=f"layer{layer_idx}/grouping",
    )
    X = executor.run(job)
    return _subsample_rows(X, cfg.grouping_samples, seed, "groupcap", layer_idx)


def pooled_features(layers, images, executor, seed_parts=("features",), name="features"):
    """Pooled 4K feature matrix plus the label vector for a subset."""
    shards = partition_shards(list(enumerate(images)), executor.cfg.map_tasks)
    dim = 4 * layers[-1].k

    def map_fn(shard, task_seed):
        rows = np.empty((len(shard), dim))
        labels = np.empty(len(shard), dtype=np.int64)
        for row, (gidx, img) in enumerate(shard):
            rows[row] = pooled_vector(encode_through(layers, _stack_of(img)))
            labels[row] = img.label
        return rows, labels

    def reduce_fn(results):
        return (
            np.vstack([r for r, _ in results]),
            np.concatenate([l for _, l in results]),
        )

    job = MapReduceJob(shards, map_fn, reduce_fn, seed=derive_seed(*seed_parts), name=name)
    return executor.run(job)


def train_stack(
    parts,
    configs,
    exec_cfg: ExecutorConfig = None,
    seed: int = 0,
    svm_reg: float = DEFAULT_REG,
    svm_epochs: int = DEFAULT_EPOCHS,
) -> StackModel:
    """Train the full stack on a six-way dataset partition."""
    exec_cfg = exec_cfg if exec_cfg is not None else ExecutorConfig()
    configs = list(configs)
    validate_stack(configs)
    subsets = list(parts)
    if len(subsets) != 6:
        raise ConfigError(f"expected a six-way partition, got {len(subsets)} subsets")
    depth = len(configs)
    for i in range(depth):
        if not subsets[i]:
            raise ConfigError(f"subset {i} is empty; layer {i} has no training data")
    if not subsets[-1]:
        raise ConfigError("labeled subset (index 5) is empty; cannot train the classifier")
    executor = MapReduceExecutor(exec_cfg)
    layers, timings = [], {}
    for i, cfg in enumerate(configs):
        start = time.perf_counter()
        input_groups = [list(range(INPUT_CHANNELS))] if i == 0 else layers[-1].groups
        layer = _fit_layer(executor, subsets[i], layers, cfg, input_groups, i, seed)
        layers.append(layer)
        if i < depth - 1:
            X = _grouping_matrix(executor, layers, subsets[i + 1], cfg, i, seed)
            layer.groups = build_groups(X, cfg.group_size)
        timings[f"layer{i}"] = round(time.perf_counter() - start, 3)
    start = time.perf_counter()
    features, labels = pooled_features(
        layers, subsets[-1], executor, seed_parts=(seed, "features"), name="classifier/features"
    )
    svm, _ = train_svm(
        features, labels, reg=svm_reg, epochs=svm_epochs, seed=derive_seed(seed, "svm")
    )
    timings["classifier"] = round(time.perf_counter() - start, 3)
    resolved = {
        "layers": [asdict(cfg) for cfg in configs],
        "executor": {
            "workers": exec_cfg.workers,
            "max_retries": exec_cfg.max_retries,
            "map_tasks": exec_cfg.map_tasks,
        },
        "classifier": {"reg": svm_reg, "epochs": svm_epochs},
        "seed": seed,
    }
    return StackModel(
        layers=layers,
        classifier=svm,
        seed=seed,
        config_hash=config_hash(resolved),
        resolved_config=resolved,
        timings=timings,
    )


def infer(model: StackModel, images, exec_cfg: ExecutorConfig = None) -> np.ndarray:
    """Predicted labels for a list of images."""
    if not images:
        return np.empty(0, dtype=np.int64)
    executor = MapReduceExecutor(exec_cfg if exec_cfg is not None else ExecutorConfig())
    features, _ = pooled_features(
        model.layers, images, executor, seed_parts=(model.seed, "infer"), name="infer/features"
    )
    return classify(model.classifier, features)


def export_features_csv(model: StackModel, images, path, exec_cfg: ExecutorConfig = None):
    """One CSV row per image: label, then the pooled feature values."""
    executor = MapReduceExecutor(exec_cfg if exec_cfg is not None else ExecutorConfig())
    features, labels = pooled_features(
        model.layers, images, executor, seed_parts=(model.seed, "export"), name="export/features"
    )
    with open(path, "w", encoding="utf-8") as fh:
        for label, row in zip(labels, features):
            fh.write(",".join([str(int(label))] + [f"{v:.17g}" for v in row]) + "\n")


class DDRLClassifier(ClassifierMixin, BaseEstimator):
    """Estimator facade over the full pipeline.

    fit accepts a list of LabeledImage (y=None) or an (n, H, W, 3) pixel
    array with integer labels; the six-way partition happens internally.
    """

    def __init__(
        self,
        layers=None,
        fractions=None,
        seed: int = 0,
        workers: int = 4,
        map_tasks: int = 4,
        max_retries: int = 3,
        reg: float = DEFAULT_REG,
        epochs: int = DEFAULT_EPOCHS,
    ):
        self.layers = layers
        self.fractions = fractions
        self.seed = seed
        self.workers = workers
        self.map_tasks = map_tasks
        self.max_retries = max_retries
        self.reg = reg
        self.epochs = epochs

    def _executor_config(self) -> ExecutorConfig:
        return ExecutorConfig(
            workers=self.workers, max_retries=self.max_retries, map_tasks=self.map_tasks
        )

    def _as_images(self, X, y):
        if isinstance(X, np.ndarray):
            if y is None:
                raise ConfigError("labels are required when X is a pixel array")
            return [LabeledImage(X[i], int(y[i])) for i in range(X.shape[0])]
        return list(X)

    def fit(self, X, y=None):
        images = self._as_images(X, y)
        layer_dicts = self.layers if self.layers is not None else [{"k": 64}]
        configs = resolve_layer_configs(layer_dicts, self.map_tasks)
        fractions = self.fractions if self.fractions is not None else default_fractions()
        parts = partition_images(images, fractions, seed=derive_seed(self.seed, "partition"))
        self.stack_ = train_stack(
            parts,
            configs,
            exec_cfg=self._executor_config(),
            seed=self.seed,
            svm_reg=self.reg,
            svm_epochs=self.epochs,
        )
        self.classes_ = self.stack_.classifier.classes
        return self

    def predict(self, X) -> np.ndarray:
        images = X if not isinstance(X, np.ndarray) else [
            LabeledImage(X[i], 0) for i in range(X.shape[0])
        ]
        return infer(self.stack_, list(images), exec_cfg=self._executor_config())
