"""Overlay rendering: tinted instance masks, box outlines, and labels.

Colors are a pure function of the category id (hues spaced by the golden
angle), tinting is an exact integer 50/50 blend, and instances are drawn in
list order so later entries — pasted instances sit at the end of a composed
sample's list — paint over earlier ones.
"""

from __future__ import annotations

import colorsys
from typing import Mapping, Sequence

import numpy as np
from PIL import Image, ImageDraw

from .annotations import Dataset, InstanceAnnotation, annotation_bitmap

_GOLDEN = 0.6180339887498949


def category_color(category_id: int) -> tuple[int, int, int]:
    """Deterministic, well-separated RGB color for a category id."""
    hue = (category_id * _GOLDEN) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 1.0)
    return (int(round(r * 255)), int(round(g * 255)), int(round(b * 255)))


def tint_mask(pixels: np.ndarray, mask: np.ndarray, color: tuple[int, int, int]) -> None:
    """In place: replace masked pixels with the rounded mean of pixel and color."""
    c = np.asarray(color, dtype=np.uint16)
    pixels[mask] = ((pixels[mask].astype(np.uint16) + c + 1) // 2).astype(np.uint8)


def _outline(pixels: np.ndarray, bbox: tuple[float, float, float, float], color) -> None:
    h, w = pixels.shape[:2]
    x, y, bw, bh = bbox
    x0 = min(max(int(round(x)), 0), w - 1)
    y0 = min(max(int(round(y)), 0), h - 1)
    x1 = min(max(int(round(x + bw)) - 1, 0), w - 1)
    y1 = min(max(int(round(y + bh)) - 1, 0), h - 1)
    c = np.asarray(color, dtype=np.uint8)
    pixels[y0, x0 : x1 + 1] = c
    pixels[y1, x0 : x1 + 1] = c
    pixels[y0 : y1 + 1, x0] = c
    pixels[y0 : y1 + 1, x1] = c


def overlay(
    pixels: np.ndarray,
    annotations: Sequence[InstanceAnnotation],
    names: Mapping[int, str] | None = None,
    draw_labels: bool = True,
) -> np.ndarray:
    """Render annotations over a copy of the image.

    Each instance gets a half-strength tint of its category color plus a
    one-pixel box outline; labels (when enabled) are stamped last so they sit
    above every mask.  An empty annotation list returns the image unchanged.
    """
    out = pixels.copy()
    h, w = out.shape[:2]
    for ann in annotations:
        color = category_color(ann.category_id)
        tint_mask(out, annotation_bitmap(ann, h, w), color)
        _outline(out, ann.bbox, color)
    if draw_labels and annotations and names is not None:
        img = Image.fromarray(out)
        draw = ImageDraw.Draw(img)
        for ann in annotations:
            label = names.get(ann.category_id)
            if not label:
                continue
            x, y = ann.bbox[0], ann.bbox[1]
            draw.text((min(max(x, 0), w - 1), min(max(y, 0), h - 1)), label,
                      fill=category_color(ann.category_id))
        out = np.asarray(img, dtype=np.uint8)
    return out


def overlay_for_image(dataset: Dataset, image_id: int, draw_labels: bool = True) -> np.ndarray:
    """Overlay for one dataset image (raises on an unknown id)."""
    record = dataset.image(image_id)
    pixels = dataset.load_pixels(record.id)
    names = {c.id: c.name for c in dataset.categories}
    return overlay(pixels, dataset.annotations_for(record.id), names, draw_labels=draw_labels)
