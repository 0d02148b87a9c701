"""In-process binding over the pastiche augmentation pipeline.

``open_pipeline`` turns a config (file path or mapping) into a single-consumer
iterator of :class:`BoundSampleView` values, so a training loop can consume
augmented samples directly without the engine writing files.  Every field a
view carries is byte-equal to what ``pastiche augment`` would have written to
disk for the same plan index: the image is the array the PNG would encode,
and each annotation record is exactly the dict that would appear in
``annotations.json``.

Record schema (one dict per annotation)::

    {
      "id": int,                 # sequential in plan order, from 1
      "image_id": int,           # plan index + 1
      "category_id": int,
      "bbox": [x, y, w, h],      # floats, tight around the visible mask
      "area": float,             # visible pixel count
      "segmentation": {"size": [height, width], "counts": str},
      "iscrowd": int,
      "pasted": bool,            # instance was composited from the source
      "pseudo": bool,            # origin annotation was machine-labeled
      "origin_annotation_id": int,
      # "mix_weight": float      # present in mixup mode only
    }

Masks cross the boundary in compressed RLE form; :func:`dense_mask` decodes a
record back to a boolean bitmap.  Buffers are copied once at the boundary —
views share no mutable state with the engine.

The handle is single-consumer: calling ``next()`` from multiple threads at
once is rejected with ``RuntimeError``.  ``close()`` joins the engine's
workers and is safe to call twice; iterating a closed handle raises
:class:`HandleClosedError`.
"""

import copy
from collections.abc import Mapping
from dataclasses import dataclass
from os import PathLike
from typing import Any

import numpy as np

import pastiche

__version__ = pastiche.__version__

__all__ = [
    "BindingConfigError",
    "BoundSampleView",
    "HandleClosedError",
    "PipelineHandle",
    "__version__",
    "close",
    "dense_mask",
    "engine_version",
    "open_pipeline",
]


class BindingConfigError(ValueError):
    """Invalid pipeline configuration; the message is the engine's own text."""


class HandleClosedError(RuntimeError):
    """The handle was closed; no further samples can be drawn from it."""


@dataclass(frozen=True, eq=False)
class BoundSampleView:
    """One augmented sample, detached from the engine.

    ``index`` is the plan position; ``file_name`` is the PNG name a disk run
    would have used for this sample, which makes cross-checking against a
    written output tree trivial.
    """

    index: int
    file_name: str
    image: np.ndarray
    annotations: tuple[dict[str, Any], ...]
    provenance: dict[str, Any]


def engine_version() -> str:
    """Version of the engine this binding drives (equals ``__version__``)."""
    return pastiche.__version__


def dense_mask(record: Mapping[str, Any]) -> np.ndarray:
    """Decode one annotation record's RLE segmentation to a boolean bitmap."""
    seg = record["segmentation"]
    if not (isinstance(seg, Mapping) and "size" in seg and "counts" in seg):
        raise ValueError("record does not carry an RLE segmentation dict")
    height, width = (int(v) for v in seg["size"])
    counts = seg["counts"]
    if isinstance(counts, str):
        rle = pastiche.decompress_rle(counts, (height, width))
    else:
        rle = pastiche.Rle((height, width), tuple(int(c) for c in counts))
    return pastiche.rle_to_bitmap(rle)


def _detach(sample: "pastiche.EmittedSample") -> BoundSampleView:
    rows = tuple(pastiche.annotation_to_json_dict(a) for a in sample.annotations)
    return BoundSampleView(
        index=sample.index,
        file_name=sample.file_name,
        image=sample.image.copy(order="C"),
        annotations=rows,
        provenance=copy.deepcopy(sample.provenance),
    )


class PipelineHandle:
    """Single-consumer iterator over the engine's sample stream."""

    def __init__(self, stream: "pastiche.SampleStream") -> None:
        self._stream = stream
        self._closed = False

    def __iter__(self) -> "PipelineHandle":
        return self

    def __next__(self) -> BoundSampleView:
        if self._closed:
            raise HandleClosedError("pipeline handle is closed")
        return _detach(next(self._stream))

    def close(self) -> None:
        """Stop the workers and release resources; a second call is a no-op."""
        if self._closed:
            return
        self._closed = True
        self._stream.close()

    @property
    def closed(self) -> bool:
        return self._closed

    def stats(self) -> "pastiche.RunStats":
        """Engine counters for the samples drawn so far."""
        return self._stream.stats()

    def __enter__(self) -> "PipelineHandle":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


def open_pipeline(config: "str | PathLike[str] | Mapping[str, Any]") -> PipelineHandle:
    """Start a pipeline from a config file path or an in-memory mapping.

    A path goes through the same loader the CLI uses (including the
    ``PASTICHE_SEED`` / ``PASTICHE_WORKERS`` environment overrides); a mapping
    is taken literally.  Invalid configs raise :class:`BindingConfigError`
    carrying the engine's message, which names the offending field.
    """
    try:
        if isinstance(config, Mapping):
            parsed = pastiche.config_from_mapping(config)
        elif isinstance(config, (str, PathLike)):
            parsed = pastiche.load_config(config)
        else:
            raise TypeError(
                f"config must be a path or a mapping, not {type(config).__name__}"
            )
        return PipelineHandle(pastiche.SampleStream(parsed))
    except pastiche.ConfigError as exc:
        raise BindingConfigError(str(exc)) from exc


def close(handle: PipelineHandle) -> None:
    """Close ``handle``; equivalent to ``handle.close()`` and just as idempotent."""
    handle.close()
