"""Hierarchical distributed representation learning for image classification.

The package builds multi-layer feature stacks: patches are contrast
normalized and whitened, a spherical k-means dictionary is trained under a
map/reduce executor, responses are soft-threshold encoded, and correlated
features are grouped to seed the dictionaries of the next layer.  A linear
one-vs-rest SVM on quadrant-pooled features closes the pipeline.
"""

from .classifier import LinearModel, LinearSVM, evaluate, train_svm
from .datasets import DatasetPartition, LabeledImage, load_cifar, partition, save_cifar
from .dictionary import Dictionary, SphericalKMeans, merge_dictionaries, train_dictionary
from .encoder import (
    FoldedEncoder,
    encode_image,
    pool_quadrants,
    pooled_vector,
    soft_threshold_encode,
)
from .errors import (
    ConfigError,
    DataError,
    DDRLError,
    DegenerateFeatureError,
    FormatError,
    InsufficientDataError,
    JobFailedError,
    ModelFileError,
    ShapeError,
)
from .executor import ExecutorConfig, MapReduceExecutor, MapReduceJob, run_job
from .grouping import FeatureGrouper, build_groups, similarity_matrix
from .model_io import load_model, save_model
from .pipeline import (
    DDRLClassifier,
    LayerConfig,
    LayerModel,
    StackModel,
    infer,
    train_stack,
    validate_stack,
)
from .preprocessing import PatchNormalizer, PCAWhitener, normalize_rows
from .synthetic import make_cifar_files, make_images

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DDRLClassifier",
    "DDRLError",
    "DataError",
    "DatasetPartition",
    "DegenerateFeatureError",
    "Dictionary",
    "ExecutorConfig",
    "FeatureGrouper",
    "FoldedEncoder",
    "FormatError",
    "InsufficientDataError",
    "JobFailedError",
    "LabeledImage",
    "LayerConfig",
    "LayerModel",
    "LinearModel",
    "LinearSVM",
    "MapReduceExecutor",
    "MapReduceJob",
    "ModelFileError",
    "PCAWhitener",
    "PatchNormalizer",
    "ShapeError",
    "SphericalKMeans",
    "StackModel",
    "build_groups",
    "encode_image",
    "evaluate",
    "infer",
    "load_cifar",
    "load_model",
    "make_cifar_files",
    "make_images",
    "merge_dictionaries",
    "normalize_rows",
    "partition",
    "pool_quadrants",
    "pooled_vector",
    "run_job",
    "save_cifar",
    "save_model",
    "similarity_matrix",
    "soft_threshold_encode",
    "train_dictionary",
    "train_stack",
    "train_svm",
    "validate_stack",
]
