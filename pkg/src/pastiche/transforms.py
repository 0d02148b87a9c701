"""Scale jittering, horizontal flip, and crop/pad over images, masks, and boxes.

The transform order is fixed: scale, then flip, then crop (when the scaled
image exceeds the target) or top-left anchoring with padding (when it is
smaller).  Pixels are resampled bilinearly; masks use nearest-neighbor so they
stay binary, sharing the same index maps in both axes.  All geometry is
derived from the transformed masks — boxes and areas are recomputed, never
scaled analytically.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .annotations import InstanceAnnotation, annotation_bitmap
from .masks import mask_area, tight_bbox

#: closed scale ranges for the two jitter regimes
SCALE_RANGES: dict[str, tuple[float, float]] = {
    "ssj": (0.8, 1.25),
    "lsj": (0.1, 2.0),
}

DEFAULT_PAD_VALUE: tuple[int, int, int] = (128, 128, 128)


@dataclass(frozen=True, slots=True)
class JitterMode:
    """Scale regime: ``ssj`` (0.8–1.25), ``lsj`` (0.1–2.0), or a fixed factor."""

    kind: str
    scale: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("ssj", "lsj", "fixed"):
            raise ValueError(f"JitterMode.kind must be ssj|lsj|fixed, got {self.kind!r}")
        if self.kind == "fixed":
            if self.scale is None or self.scale <= 0:
                raise ValueError(f"JitterMode.scale must be > 0 for fixed mode, got {self.scale}")
        elif self.scale is not None:
            raise ValueError(f"JitterMode.scale only applies to fixed mode, got {self.scale}")

    @property
    def scale_range(self) -> tuple[float, float]:
        if self.kind == "fixed":
            assert self.scale is not None
            return (self.scale, self.scale)
        return SCALE_RANGES[self.kind]

    @classmethod
    def ssj(cls) -> "JitterMode":
        return cls(kind="ssj")

    @classmethod
    def lsj(cls) -> "JitterMode":
        return cls(kind="lsj")

    @classmethod
    def fixed(cls, scale: float) -> "JitterMode":
        return cls(kind="fixed", scale=scale)


@dataclass(frozen=True, slots=True)
class TransformParams:
    """Everything needed to replay one jitter draw."""

    scale: float
    flip: bool
    crop_offset: tuple[int, int]  # (dx, dy): left/top of the crop window
    target: tuple[int, int]  # (H, W)
    pad_value: tuple[int, int, int] = DEFAULT_PAD_VALUE
    anchor: tuple[int, int] = (0, 0)  # (ax, ay): placement when smaller than target


@dataclass(frozen=True, eq=False, slots=True)
class TransformedSample:
    image: np.ndarray  # H×W×3 uint8
    annotations: list[InstanceAnnotation]  # bitmap masks in target coordinates
    params: TransformParams
    source_image_id: int | None = None


def normalize_pad_value(value) -> tuple[int, int, int]:
    """Accept a single intensity or a 3-channel tuple; validate the 0..255 range."""
    if isinstance(value, (int, np.integer)):
        triple = (int(value),) * 3
    else:
        triple = tuple(int(v) for v in value)
        if len(triple) != 3:
            raise ValueError(f"pad_value must be one intensity or 3, got {value!r}")
    for v in triple:
        if not 0 <= v <= 255:
            raise ValueError(f"pad_value components must be in [0, 255], got {v}")
    return triple


def scaled_dims(height: int, width: int, scale: float) -> tuple[int, int]:
    """Output dims after scaling: round-half-up, floored at one pixel."""
    return (
        max(1, int(np.floor(height * scale + 0.5))),
        max(1, int(np.floor(width * scale + 0.5))),
    )


def _nearest_indices(src: int, dst: int) -> np.ndarray:
    # floor((i + 0.5) * src / dst) in exact integer arithmetic
    return ((2 * np.arange(dst, dtype=np.int64) + 1) * src) // (2 * dst)


def resize_nearest(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resample of a 2-D array (half-pixel-center convention)."""
    rows = _nearest_indices(mask.shape[0], out_h)
    cols = _nearest_indices(mask.shape[1], out_w)
    return mask[np.ix_(rows, cols)]


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of an H×W×3 uint8 image, exact identity at scale 1.

    Interpolation runs in float64 and the result is rounded half away from
    zero, so equal inputs produce byte-equal outputs on any platform.
    """
    src = image.astype(np.float64)
    h, w = image.shape[:2]
    x = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    x0 = np.floor(x).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    fx = (x - x0)[None, :, None]
    tmp = src[:, x0] * (1.0 - fx) + src[:, x1] * fx
    y = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    y0 = np.floor(y).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    fy = (y - y0)[:, None, None]
    out = tmp[y0] * (1.0 - fy) + tmp[y1] * fy
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def sample_params(
    mode: JitterMode,
    target: tuple[int, int],
    src: tuple[int, int],
    rng: np.random.Generator,
    pad_value: tuple[int, int, int] | int = DEFAULT_PAD_VALUE,
    random_anchor: bool = False,
) -> TransformParams:
    """Draw one set of transform parameters.

    Draw order is part of the determinism contract: scale, flip, crop dx,
    crop dy, then (only when ``random_anchor``) anchor ax, ay.
    """
    H, W = target
    h, w = src
    lo, hi = mode.scale_range
    scale = float(mode.scale) if mode.kind == "fixed" else float(rng.uniform(lo, hi))
    flip = bool(rng.random() < 0.5)
    sh, sw = scaled_dims(h, w, scale)
    dx = int(rng.integers(0, sw - W + 1)) if sw > W else 0
    dy = int(rng.integers(0, sh - H + 1)) if sh > H else 0
    ax = ay = 0
    if random_anchor:
        vw, vh = min(sw, W), min(sh, H)
        ax = int(rng.integers(0, W - vw + 1)) if vw < W else 0
        ay = int(rng.integers(0, H - vh + 1)) if vh < H else 0
    return TransformParams(
        scale=scale,
        flip=flip,
        crop_offset=(dx, dy),
        target=(H, W),
        pad_value=normalize_pad_value(pad_value),
        anchor=(ax, ay),
    )


def apply(
    image: np.ndarray,
    annotations: Sequence[InstanceAnnotation],
    params: TransformParams,
    min_visible_pixels: int = 0,
    source_image_id: int | None = None,
) -> TransformedSample:
    """Transform an image and its annotations into target coordinates.

    Instances whose visible area drops to ``min_visible_pixels`` or fewer are
    removed; survivors get recomputed tight boxes and areas and bitmap masks.
    """
    h, w = image.shape[:2]
    H, W = params.target
    sh, sw = scaled_dims(h, w, params.scale)
    dx, dy = params.crop_offset
    ax, ay = params.anchor
    vh, vw = min(sh, H), min(sw, W)

    scaled = resize_bilinear(image, sh, sw)
    if params.flip:
        scaled = scaled[:, ::-1]
    canvas = np.empty((H, W, 3), dtype=np.uint8)
    canvas[:, :] = np.asarray(params.pad_value, dtype=np.uint8)
    canvas[ay : ay + vh, ax : ax + vw] = scaled[dy : dy + vh, dx : dx + vw]

    out_annotations: list[InstanceAnnotation] = []
    for ann in annotations:
        bitmap = annotation_bitmap(ann, h, w)
        if bitmap.shape != (h, w):
            raise ValueError(
                f"annotation {ann.id}: mask shape {bitmap.shape} does not match image {h}x{w}"
            )
        m = resize_nearest(bitmap, sh, sw)
        if params.flip:
            m = m[:, ::-1]
        placed = np.zeros((H, W), dtype=bool)
        placed[ay : ay + vh, ax : ax + vw] = m[dy : dy + vh, dx : dx + vw]
        area = mask_area(placed)
        if area <= min_visible_pixels:
            continue
        out_annotations.append(
            replace(ann, bbox=tight_bbox(placed), area=float(area), segmentation=placed)
        )
    return TransformedSample(
        image=canvas,
        annotations=out_annotations,
        params=params,
        source_image_id=source_image_id,
    )
