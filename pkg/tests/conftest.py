"""Shared fixture builders for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from pastiche.masks import bitmap_to_rle, compress_rle, mask_area, tight_bbox


def write_png(path: Path, pixels: np.ndarray) -> None:
    Image.fromarray(pixels, mode="RGB").save(path, format="PNG")


def random_image(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def rle_dict(bitmap: np.ndarray) -> dict:
    rle = bitmap_to_rle(bitmap)
    return {"size": [rle.size[0], rle.size[1]], "counts": compress_rle(rle)}


def annotation_entry(ann_id: int, image_id: int, category_id: int, bitmap: np.ndarray, **extra) -> dict:
    x, y, w, h = tight_bbox(bitmap)
    return {
        "id": ann_id,
        "image_id": image_id,
        "category_id": category_id,
        "bbox": [x, y, w, h],
        "area": float(mask_area(bitmap)),
        "segmentation": rle_dict(bitmap),
        "iscrowd": 0,
        **extra,
    }


def cross_bitmap(size: int, row_lo: int, row_hi: int, col_lo: int, col_hi: int) -> np.ndarray:
    """Full-width horizontal band union full-height vertical band (a thick plus sign)."""
    b = np.zeros((size, size), dtype=bool)
    b[row_lo : row_hi + 1, :] = True
    b[:, col_lo : col_hi + 1] = True
    return b


def make_cross_dataset(root: Path, n_images: int = 4, size: int = 64, seed: int = 99) -> Path:
    """A dataset of ``n_images`` images, each holding exactly one thick-cross instance.

    The cross arms span the full frame, are >= 14 px thick, and straddle the
    frame midline, so the instance survives any scale in [0.1, 2.0] plus any
    crop — the property several pipeline tests rely on.
    """
    root.mkdir(parents=True, exist_ok=True)
    img_dir = root / "images"
    img_dir.mkdir(exist_ok=True)
    rng = np.random.default_rng(seed)
    images, annotations = [], []
    for k in range(n_images):
        pixels = random_image(rng, size, size)
        arm_lo = 24 + k  # stays within [24, 31]; arm_hi = arm_lo + 13 >= 32
        arm_hi = arm_lo + 13
        bitmap = cross_bitmap(size, arm_lo, arm_hi, arm_lo, arm_hi)
        name = f"img{k:03d}.png"
        write_png(img_dir / name, pixels)
        images.append({"id": k + 1, "file_name": name, "width": size, "height": size})
        annotations.append(annotation_entry(k + 1, k + 1, (k % 2) + 1, bitmap))
    payload = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": 1, "name": "widget"}, {"id": 2, "name": "gadget"}],
    }
    json_path = root / "dataset.json"
    json_path.write_text(json.dumps(payload, indent=2))
    return json_path


#: default confidence scores for the pseudo fixture; >= 0.5 keeps indices 0, 2, 4, 5
PSEUDO_SCORES = (0.9, 0.3, 0.7, 0.2, 1.0, 0.6)


def make_pseudo_dataset(
    root: Path, n_images: int = 6, size: int = 48, seed: int = 7, scores=None
) -> Path:
    """Machine-labeled counterpart of the cross dataset: same category table,
    one cross instance per image, each annotation carrying a confidence score.

    The crosses keep the always-survives property (arms >= 14 px thick,
    straddling the frame midline) so pipeline tests can count instances.
    """
    root.mkdir(parents=True, exist_ok=True)
    img_dir = root / "pseudo_images"
    img_dir.mkdir(exist_ok=True)
    rng = np.random.default_rng(seed)
    scores = PSEUDO_SCORES if scores is None else scores
    images, annotations = [], []
    for k in range(n_images):
        pixels = random_image(rng, size, size)
        arm_lo = 18 + (k % 5)  # lo in [18, 22], hi = lo + 13 in [31, 35]: straddles 23/24
        bitmap = cross_bitmap(size, arm_lo, arm_lo + 13, arm_lo, arm_lo + 13)
        name = f"ps{k:03d}.png"
        write_png(img_dir / name, pixels)
        images.append({"id": k + 1, "file_name": name, "width": size, "height": size})
        annotations.append(
            annotation_entry(k + 1, k + 1, (k % 2) + 1, bitmap, score=scores[k % len(scores)])
        )
    payload = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": 1, "name": "widget"}, {"id": 2, "name": "gadget"}],
    }
    json_path = root / "pseudo.json"
    json_path.write_text(json.dumps(payload, indent=2))
    return json_path


def make_zipf_dataset(root: Path, n_images: int = 20, n_categories: int = 6, seed: int = 5) -> Path:
    """A small dataset with a Zipf-like category/image distribution (metadata only).

    Category ``c`` (1-based) appears in roughly ``n_images / c`` images, giving a
    heavy-tailed frequency table for the re-balancing tests.
    """
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    images, annotations = [], []
    ann_id = 1
    for k in range(n_images):
        images.append({"id": k + 1, "file_name": f"z{k:03d}.png", "width": 32, "height": 32})
    for c in range(1, n_categories + 1):
        count = max(1, round(n_images / (c + 1)))
        member_images = 1 + rng.permutation(n_images)[:count]
        for img_id in sorted(int(v) for v in member_images):
            bitmap = np.zeros((32, 32), dtype=bool)
            r = int(rng.integers(0, 28))
            bitmap[r : r + 4, 2 : 2 + 3 * c] = True
            annotations.append(annotation_entry(ann_id, img_id, c, bitmap))
            ann_id += 1
    payload = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": c, "name": f"cat{c}"} for c in range(1, n_categories + 1)],
    }
    json_path = root / "zipf.json"
    json_path.write_text(json.dumps(payload, indent=2))
    return json_path
