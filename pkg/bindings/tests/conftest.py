"""Shared fixture builders: a small rectangle dataset and a run config."""

import json
from pathlib import Path

import numpy as np
from PIL import Image


def make_rect_dataset(root: Path, n_images: int = 5, size: int = 96, seed: int = 3) -> Path:
    """Random images, each with two solid axis-aligned rectangle instances."""
    image_dir = root / "images"
    image_dir.mkdir(parents=True)
    rng = np.random.default_rng(seed)
    images, annotations = [], []
    ann_id = 1
    for k in range(n_images):
        pixels = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
        name = f"scene{k:02d}.png"
        Image.fromarray(pixels).save(image_dir / name)
        images.append({"id": k + 1, "file_name": name, "width": size, "height": size})
        for j in range(2):
            x0 = int(rng.integers(0, size - 36))
            y0 = int(rng.integers(0, size - 36))
            x1 = x0 + int(rng.integers(12, 30))
            y1 = y0 + int(rng.integers(12, 30))
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": k + 1,
                    "category_id": (j % 2) + 1,
                    "bbox": [x0, y0, x1 - x0, y1 - y0],
                    "area": (x1 - x0) * (y1 - y0),
                    "segmentation": [[x0, y0, x1, y0, x1, y1, x0, y1]],
                    "iscrowd": 0,
                }
            )
            ann_id += 1
    json_path = root / "train.json"
    json_path.write_text(
        json.dumps(
            {
                "images": images,
                "annotations": annotations,
                "categories": [{"id": 1, "name": "widget"}, {"id": 2, "name": "gadget"}],
            }
        )
    )
    return json_path


def base_mapping(json_path: Path, **overrides) -> dict:
    mapping = {
        "target_size": [96, 96],
        "mix": {
            "supervised": {
                "json": str(json_path),
                "image_root": str(json_path.parent / "images"),
            }
        },
        "main_jitter": "lsj",
        "pasted_jitter": "ssj",
        "paste_policy": {"kind": "random_subset", "p": 0.7},
        "seed": 11,
        "num_samples": 10,
        "workers": 2,
    }
    mapping.update(overrides)
    return mapping
