"""Instance compositing: subset selection, alpha construction, paste, mixup.

A paste event overlays selected source instances onto a target sample:
``out = src * alpha + target * (1 - alpha)``, where alpha is the union of the
selected source masks, optionally softened by a normalized truncated Gaussian.
Annotation geometry always uses the pre-blur binary alpha — blending is a
pixel-level cosmetic and must not erode labels.  Pasted instances form a
single top layer: they occlude target instances but never each other.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import ndimage

from .annotations import InstanceAnnotation
from .masks import mask_area, tight_bbox
from .transforms import TransformedSample


@dataclass(frozen=True, slots=True)
class PastePolicy:
    """How many source instances a paste event takes.

    ``random_subset`` keeps each non-crowd instance independently with
    probability ``p``; ``one_object`` takes exactly one, uniformly;
    ``all_objects`` takes every non-crowd instance.
    """

    kind: str
    p: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("random_subset", "one_object", "all_objects"):
            raise ValueError(
                f"PastePolicy.kind must be random_subset|one_object|all_objects, got {self.kind!r}"
            )
        if self.kind == "random_subset":
            if self.p is None or not 0.0 <= self.p <= 1.0:
                raise ValueError(f"PastePolicy.p must be in [0, 1], got {self.p}")
        elif self.p is not None:
            raise ValueError(f"PastePolicy.p only applies to random_subset, got {self.p}")

    @classmethod
    def random_subset(cls, p: float = 0.5) -> "PastePolicy":
        return cls(kind="random_subset", p=p)

    @classmethod
    def one_object(cls) -> "PastePolicy":
        return cls(kind="one_object")

    @classmethod
    def all_objects(cls) -> "PastePolicy":
        return cls(kind="all_objects")


@dataclass(frozen=True, slots=True)
class BlendConfig:
    enabled: bool = True
    sigma: float = 1.0
    kernel_radius: int = 2

    def __post_init__(self) -> None:
        if self.enabled:
            if self.sigma <= 0:
                raise ValueError(f"BlendConfig.sigma must be > 0 when enabled, got {self.sigma}")
            if self.kernel_radius < 0:
                raise ValueError(
                    f"BlendConfig.kernel_radius must be >= 0, got {self.kernel_radius}"
                )


@dataclass(frozen=True, slots=True)
class Provenance:
    target_image_id: int | None
    source_image_id: int | None
    pasted_annotation_ids: tuple[int, ...]


@dataclass(frozen=True, eq=False, slots=True)
class ComposedSample:
    image: np.ndarray  # H×W×3 uint8
    annotations: list[InstanceAnnotation]  # surviving targets, then pasted instances
    alpha: np.ndarray  # H×W float64 in [0, 1]; exactly binary when blending is off
    provenance: Provenance


@dataclass(frozen=True, eq=False, slots=True)
class MixedSample:
    image: np.ndarray
    annotations: list[InstanceAnnotation]  # a's annotations then b's
    weights: list[float]  # per-annotation convex weight, aligned with annotations


def select_subset(
    src: TransformedSample, policy: PastePolicy, rng: np.random.Generator
) -> list[int]:
    """Indices (into ``src.annotations``) of the instances a paste will take.

    Crowd regions are never candidates.  ``one_object`` on a sample with no
    eligible instances returns the empty selection.
    """
    eligible = [i for i, ann in enumerate(src.annotations) if not ann.iscrowd]
    if policy.kind == "all_objects":
        return eligible
    if policy.kind == "one_object":
        if not eligible:
            return []
        return [eligible[int(rng.integers(len(eligible)))]]
    assert policy.p is not None
    return [i for i in eligible if rng.random() < policy.p]


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """Normalized Gaussian kernel truncated to a (2r+1)² window."""
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    one_d = np.exp(-(ax**2) / (2.0 * sigma**2))
    kernel = np.outer(one_d, one_d)
    return kernel / kernel.sum()


def build_alpha(
    src_masks: Sequence[np.ndarray],
    blend: BlendConfig,
    shape: tuple[int, int] | None = None,
) -> np.ndarray:
    """Union of masks as a float map; Gaussian-softened when blending is on.

    ``shape`` is required when ``src_masks`` is empty and must agree with the
    masks otherwise.
    """
    if shape is None:
        if not src_masks:
            raise ValueError("build_alpha needs an explicit shape when no masks are given")
        shape = src_masks[0].shape
    union = np.zeros(shape, dtype=bool)
    for m in src_masks:
        if m.shape != tuple(shape):
            raise ValueError(f"mask shape {m.shape} does not match alpha shape {tuple(shape)}")
        union |= m.astype(bool, copy=False)
    alpha = union.astype(np.float64)
    if blend.enabled and union.any():
        kernel = gaussian_kernel(blend.sigma, blend.kernel_radius)
        alpha = ndimage.convolve(alpha, kernel, mode="constant", cval=0.0)
        alpha = np.clip(alpha, 0.0, 1.0)
    return alpha


def update_annotations(
    targets: Sequence[InstanceAnnotation],
    binary_alpha: np.ndarray,
    min_visible_pixels: int = 0,
) -> list[InstanceAnnotation]:
    """Occlusion update: intersect every target mask with the alpha complement.

    Instances left with ``min_visible_pixels`` or fewer visible pixels are
    removed; survivors keep their ids and get recomputed tight boxes and
    areas.  Crowd regions pass through untouched.
    """
    keep_region = ~binary_alpha.astype(bool, copy=False)
    out: list[InstanceAnnotation] = []
    for ann in targets:
        if ann.iscrowd:
            out.append(ann)
            continue
        mask = ann.segmentation
        if not isinstance(mask, np.ndarray):
            raise ValueError(f"annotation {ann.id}: occlusion update needs a bitmap mask")
        if mask.shape != binary_alpha.shape:
            raise ValueError(
                f"annotation {ann.id}: mask shape {mask.shape} != alpha shape {binary_alpha.shape}"
            )
        visible = mask & keep_region
        area = mask_area(visible)
        if area <= min_visible_pixels:
            continue
        out.append(replace(ann, segmentation=visible, bbox=tight_bbox(visible), area=float(area)))
    return out


def paste(
    target: TransformedSample,
    src: TransformedSample,
    subset: Sequence[int],
    blend: BlendConfig,
    min_visible_pixels: int = 0,
) -> ComposedSample:
    """Composite the selected source instances onto the target sample."""
    if target.image.shape != src.image.shape:
        raise ValueError(
            f"target shape {target.image.shape} != source shape {src.image.shape}"
        )
    pasted: list[InstanceAnnotation] = []
    for i in subset:
        ann = src.annotations[i]
        if ann.iscrowd:
            raise ValueError(f"annotation {ann.id} is a crowd region and cannot be pasted")
        pasted.append(ann)

    shape = target.image.shape[:2]
    masks = [ann.segmentation for ann in pasted]
    binary_alpha = np.zeros(shape, dtype=bool)
    for m in masks:
        binary_alpha |= m
    alpha = build_alpha(masks, blend, shape=shape)

    a3 = alpha[:, :, None]
    blended = src.image.astype(np.float64) * a3 + target.image.astype(np.float64) * (1.0 - a3)
    image = np.clip(np.floor(blended + 0.5), 0, 255).astype(np.uint8)

    surviving = update_annotations(target.annotations, binary_alpha, min_visible_pixels)
    return ComposedSample(
        image=image,
        annotations=surviving + pasted,
        alpha=alpha,
        provenance=Provenance(
            target_image_id=target.source_image_id,
            source_image_id=src.source_image_id,
            pasted_annotation_ids=tuple(ann.id for ann in pasted),
        ),
    )


def mixup(a: TransformedSample, b: TransformedSample, lam: float) -> MixedSample:
    """Convex pixel combination ``lam * a + (1 - lam) * b`` with weighted labels."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixup lambda must be in [0, 1], got {lam}")
    if a.image.shape != b.image.shape:
        raise ValueError(f"shape mismatch: {a.image.shape} vs {b.image.shape}")
    mixed = a.image.astype(np.float64) * lam + b.image.astype(np.float64) * (1.0 - lam)
    image = np.clip(np.floor(mixed + 0.5), 0, 255).astype(np.uint8)
    annotations = list(a.annotations) + list(b.annotations)
    weights = [float(lam)] * len(a.annotations) + [float(1.0 - lam)] * len(b.annotations)
    return MixedSample(image=image, annotations=annotations, weights=weights)
