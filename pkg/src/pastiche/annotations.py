"""COCO-style dataset model and JSON ingestion/emission.

The on-disk schema is the usual trio — ``images``, ``annotations``,
``categories`` — with per-instance segmentations given either as a list of
flat polygon coordinate lists or as an RLE dict ``{"size": [h, w], "counts":
<string | int list>}``.  Unknown keys at every level are preserved so a
load → write round trip does not shed information.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Union

import numpy as np
from PIL import Image

from .errors import DatasetError
from .masks import Rle, bitmap_to_rle, compress_rle, decompress_rle, polygons_to_bitmap, rle_to_bitmap


@dataclass(frozen=True, slots=True)
class PolygonSet:
    """One or more flat ``[x0, y0, x1, y1, ...]`` rings forming a single mask."""

    polygons: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        for poly in self.polygons:
            if len(poly) < 6 or len(poly) % 2 != 0:
                raise ValueError(
                    f"polygon needs at least 3 (x, y) vertices, got {len(poly)} coordinates"
                )


#: A segmentation in any of its three interchangeable representations.
SegMask = Union[PolygonSet, Rle, np.ndarray]


@dataclass(frozen=True, slots=True)
class ImageRecord:
    id: int
    file_name: str
    width: int
    height: int
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(
                f"image {self.id}: width/height must be >= 1, got {self.width}x{self.height}"
            )


@dataclass(frozen=True, slots=True)
class CategoryRecord:
    id: int
    name: str
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True, eq=False, slots=True)
class InstanceAnnotation:
    """A single instance: box, area, mask, category, crowd flag.

    ``bbox`` is ``(x, y, w, h)`` in pixels.  On engine *outputs* the bbox is
    always the tight box of the mask and ``area`` its pixel count; raw inputs
    are passed through as given.
    """

    id: int
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]
    area: float
    segmentation: SegMask
    iscrowd: int = 0
    extra: dict[str, Any] = field(default_factory=dict)


def annotation_bitmap(ann: InstanceAnnotation, height: int, width: int) -> np.ndarray:
    """Realize an annotation's mask as a dense boolean bitmap."""
    seg = ann.segmentation
    if isinstance(seg, np.ndarray):
        return seg.astype(bool, copy=False)
    if isinstance(seg, Rle):
        return rle_to_bitmap(seg)
    return polygons_to_bitmap([list(p) for p in seg.polygons], height, width)


class Dataset:
    """Immutable-after-load dataset with id indexes and lazy pixel access."""

    def __init__(
        self,
        images: list[ImageRecord],
        annotations: list[InstanceAnnotation],
        categories: list[CategoryRecord],
        image_root: Path | None = None,
        extra: dict[str, Any] | None = None,
    ) -> None:
        self.images = list(images)
        self.annotations = list(annotations)
        self.categories = list(categories)
        self.image_root = Path(image_root) if image_root is not None else None
        self.extra = dict(extra or {})
        self._pixels: dict[int, np.ndarray] = {}

        self._images_by_id: dict[int, ImageRecord] = {}
        for rec in self.images:
            if rec.id in self._images_by_id:
                raise DatasetError(f"duplicate image id {rec.id}")
            self._images_by_id[rec.id] = rec
        self._categories_by_id: dict[int, CategoryRecord] = {}
        for cat in self.categories:
            if cat.id in self._categories_by_id:
                raise DatasetError(f"duplicate category id {cat.id}")
            self._categories_by_id[cat.id] = cat

        self._annotations_by_id: dict[int, InstanceAnnotation] = {}
        self.index: dict[int, list[int]] = {rec.id: [] for rec in self.images}
        for ann in self.annotations:
            if ann.id in self._annotations_by_id:
                raise DatasetError(f"duplicate annotation id {ann.id}")
            if ann.image_id not in self._images_by_id:
                raise DatasetError(
                    f"annotation {ann.id} references missing image_id {ann.image_id}"
                )
            if ann.category_id not in self._categories_by_id:
                raise DatasetError(
                    f"annotation {ann.id} references missing category_id {ann.category_id}"
                )
            self._annotations_by_id[ann.id] = ann
            self.index[ann.image_id].append(ann.id)

    # -- lookups ----------------------------------------------------------

    def image(self, image_id: int) -> ImageRecord:
        try:
            return self._images_by_id[image_id]
        except KeyError:
            raise DatasetError(f"unknown image id {image_id}") from None

    def category(self, category_id: int) -> CategoryRecord:
        try:
            return self._categories_by_id[category_id]
        except KeyError:
            raise DatasetError(f"unknown category id {category_id}") from None

    def annotation(self, annotation_id: int) -> InstanceAnnotation:
        try:
            return self._annotations_by_id[annotation_id]
        except KeyError:
            raise DatasetError(f"unknown annotation id {annotation_id}") from None

    def annotations_for(self, image_id: int) -> list[InstanceAnnotation]:
        return [self._annotations_by_id[a] for a in self.index[image_id]]

    # -- pixels -----------------------------------------------------------

    def attach_pixels(self, image_id: int, pixels: np.ndarray) -> None:
        """Associate an in-memory H×W×3 uint8 buffer with an image record."""
        rec = self.image(image_id)
        if pixels.shape != (rec.height, rec.width, 3) or pixels.dtype != np.uint8:
            raise ValueError(
                f"image {image_id}: pixel buffer must be {rec.height}x{rec.width}x3 uint8, "
                f"got {pixels.shape} {pixels.dtype}"
            )
        self._pixels[image_id] = pixels

    def load_pixels(self, image_id: int) -> np.ndarray:
        """Pixels for an image, from the attached buffer or from disk.

        Missing files surface here (at access time), never at dataset load.
        """
        if image_id in self._pixels:
            return self._pixels[image_id]
        rec = self.image(image_id)
        root = self.image_root if self.image_root is not None else Path(".")
        with Image.open(root / rec.file_name) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)


# -- JSON ingestion --------------------------------------------------------

_IMAGE_KEYS = {"id", "file_name", "width", "height"}
_ANN_KEYS = {"id", "image_id", "category_id", "bbox", "area", "segmentation", "iscrowd"}
_CAT_KEYS = {"id", "name"}


def _parse_segmentation(raw: Any, ann_id: Any) -> SegMask:
    if isinstance(raw, list):
        try:
            return PolygonSet(polygons=tuple(tuple(float(v) for v in p) for p in raw))
        except (TypeError, ValueError) as exc:
            raise DatasetError(f"annotation {ann_id}: bad polygon segmentation: {exc}") from exc
    if isinstance(raw, dict):
        try:
            h, w = (int(v) for v in raw["size"])
            counts = raw["counts"]
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"annotation {ann_id}: bad RLE segmentation: {exc}") from exc
        if isinstance(counts, str):
            try:
                return decompress_rle(counts, (h, w))
            except ValueError as exc:
                raise DatasetError(f"annotation {ann_id}: {exc}") from exc
        try:
            return Rle(size=(h, w), counts=tuple(int(c) for c in counts))
        except (TypeError, ValueError) as exc:
            raise DatasetError(f"annotation {ann_id}: bad RLE counts: {exc}") from exc
    raise DatasetError(f"annotation {ann_id}: segmentation is neither polygons nor RLE dict")


def load_dataset(json_path: str | Path, image_root: str | Path | None = None) -> Dataset:
    """Load a COCO-style JSON file into a fully indexed :class:`Dataset`."""
    json_path = Path(json_path)
    try:
        raw = json.loads(json_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{json_path}: malformed JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DatasetError(f"{json_path}: top level must be a JSON object")
    for key in ("images", "annotations", "categories"):
        if key not in raw:
            raise DatasetError(f"{json_path}: missing required key {key!r}")

    images = []
    for entry in raw["images"]:
        try:
            images.append(
                ImageRecord(
                    id=int(entry["id"]),
                    file_name=str(entry["file_name"]),
                    width=int(entry["width"]),
                    height=int(entry["height"]),
                    extra={k: v for k, v in entry.items() if k not in _IMAGE_KEYS},
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"bad image entry {entry.get('id', '?')}: {exc}") from exc

    categories = []
    for entry in raw["categories"]:
        try:
            categories.append(
                CategoryRecord(
                    id=int(entry["id"]),
                    name=str(entry["name"]),
                    extra={k: v for k, v in entry.items() if k not in _CAT_KEYS},
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"bad category entry {entry.get('id', '?')}: {exc}") from exc

    annotations = []
    for entry in raw["annotations"]:
        ann_id = entry.get("id", "?")
        try:
            bbox = tuple(float(v) for v in entry["bbox"])
            if len(bbox) != 4:
                raise ValueError(f"bbox must have 4 values, got {len(bbox)}")
            annotations.append(
                InstanceAnnotation(
                    id=int(entry["id"]),
                    image_id=int(entry["image_id"]),
                    category_id=int(entry["category_id"]),
                    bbox=bbox,
                    area=float(entry["area"]),
                    segmentation=_parse_segmentation(entry["segmentation"], ann_id),
                    iscrowd=int(entry.get("iscrowd", 0)),
                    extra={k: v for k, v in entry.items() if k not in _ANN_KEYS},
                )
            )
        except DatasetError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"bad annotation entry {ann_id}: {exc}") from exc

    extra = {k: v for k, v in raw.items() if k not in ("images", "annotations", "categories")}
    return Dataset(images, annotations, categories, image_root=image_root, extra=extra)


# -- JSON emission ---------------------------------------------------------


def _emit_segmentation(seg: SegMask) -> Any:
    if isinstance(seg, PolygonSet):
        return [list(p) for p in seg.polygons]
    if isinstance(seg, np.ndarray):
        seg = bitmap_to_rle(seg)
    return {"size": [seg.size[0], seg.size[1]], "counts": compress_rle(seg)}


def annotation_to_json_dict(a: InstanceAnnotation) -> dict[str, Any]:
    """One annotation as a JSON-ready dict (bitmap masks become compressed RLE)."""
    return {
        "id": a.id,
        "image_id": a.image_id,
        "category_id": a.category_id,
        "bbox": [float(v) for v in a.bbox],
        "area": float(a.area),
        "segmentation": _emit_segmentation(a.segmentation),
        "iscrowd": int(a.iscrowd),
        **a.extra,
    }


def image_to_json_dict(r: ImageRecord) -> dict[str, Any]:
    """One image record as a JSON-ready dict."""
    return {"id": r.id, "file_name": r.file_name, "width": r.width, "height": r.height, **r.extra}


def dataset_to_json_dict(d: Dataset) -> dict[str, Any]:
    """The dataset as a JSON-ready dict (bitmaps emitted as compressed RLE)."""
    payload: dict[str, Any] = dict(d.extra)
    payload["images"] = [image_to_json_dict(r) for r in d.images]
    payload["categories"] = [{"id": c.id, "name": c.name, **c.extra} for c in d.categories]
    payload["annotations"] = [annotation_to_json_dict(a) for a in d.annotations]
    return payload


def write_dataset(
    d: Dataset,
    json_path: str | Path,
    image_writer: Callable[[str, np.ndarray], None] | None = None,
) -> None:
    """Emit the dataset as JSON, optionally writing attached pixel buffers.

    ``image_writer(file_name, pixels)`` is invoked once per image that has an
    in-memory buffer, in image-list order (single-writer discipline).  The JSON
    is serialized with sorted keys and fixed indentation so identical datasets
    produce identical bytes.
    """
    if image_writer is not None:
        for rec in d.images:
            if rec.id in d._pixels:
                image_writer(rec.file_name, d._pixels[rec.id])
    payload = dataset_to_json_dict(d)
    Path(json_path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def replace_annotation(ann: InstanceAnnotation, **changes: Any) -> InstanceAnnotation:
    """``dataclasses.replace`` for annotations (kept here so callers avoid the import)."""
    return replace(ann, **changes)
