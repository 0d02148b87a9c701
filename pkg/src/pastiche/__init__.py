"""Deterministic copy-paste data augmentation for instance segmentation.

The public surface re-exported here is the supported embedding API: load a
config, build a :class:`SampleStream` (or call :func:`run` to write a dataset
to disk), and read results back with :func:`load_dataset`.  Everything else
under ``pastiche.*`` is implementation detail and may change.
"""

from pastiche.annotations import (
    CategoryRecord,
    Dataset,
    ImageRecord,
    InstanceAnnotation,
    annotation_bitmap,
    annotation_to_json_dict,
    image_to_json_dict,
    load_dataset,
    write_dataset,
)
from pastiche.config import (
    AugConfig,
    DataMixSpec,
    DatasetRef,
    apply_env_overrides,
    config_from_mapping,
    config_to_mapping,
    load_config,
)
from pastiche.copy_paste import BlendConfig, PastePolicy
from pastiche.errors import ConfigError, DatasetError, ItemError, PasticheError
from pastiche.longtail import (
    class_balanced_weights,
    image_repeat_factors,
    instance_counts,
    repeat_factor,
    rfs_epoch,
    rfs_table,
)
from pastiche.masks import Rle, bitmap_to_rle, compress_rle, decompress_rle, rle_to_bitmap
from pastiche.pipeline import (
    EmittedSample,
    PlanItem,
    RunStats,
    SampleStream,
    TargetView,
    load_mix,
    materialize_merged,
    merge_pseudo,
    plan,
    run,
)
from pastiche.transforms import JitterMode

__version__ = "0.1.0"

__all__ = [
    "AugConfig",
    "BlendConfig",
    "CategoryRecord",
    "ConfigError",
    "DataMixSpec",
    "Dataset",
    "DatasetError",
    "DatasetRef",
    "EmittedSample",
    "ImageRecord",
    "InstanceAnnotation",
    "ItemError",
    "JitterMode",
    "PastePolicy",
    "PasticheError",
    "PlanItem",
    "Rle",
    "RunStats",
    "SampleStream",
    "TargetView",
    "annotation_bitmap",
    "annotation_to_json_dict",
    "apply_env_overrides",
    "bitmap_to_rle",
    "class_balanced_weights",
    "compress_rle",
    "config_from_mapping",
    "config_to_mapping",
    "decompress_rle",
    "image_repeat_factors",
    "image_to_json_dict",
    "instance_counts",
    "load_config",
    "load_dataset",
    "load_mix",
    "materialize_merged",
    "merge_pseudo",
    "plan",
    "repeat_factor",
    "rfs_epoch",
    "rfs_table",
    "rle_to_bitmap",
    "run",
    "write_dataset",
    "__version__",
]
