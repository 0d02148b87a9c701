"""Long-tail re-balancing: repeat-factor sampling and class-balanced weights."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .annotations import Dataset

#: default repeat-factor threshold and class-balance decay
DEFAULT_RFS_T = 0.001
DEFAULT_CB_BETA = 0.999
WEIGHT_CLIP = (0.01, 5.0)


def category_frequency(d: Dataset, include_crowd: bool = False) -> dict[int, float]:
    """Fraction of images containing at least one instance of each category.

    Only categories that appear are included, so every value is in (0, 1].
    Crowd regions are not counted as instances unless ``include_crowd``.
    """
    if not d.images:
        raise ValueError("category_frequency needs a non-empty dataset")
    seen: dict[int, set[int]] = {}
    for ann in d.annotations:
        if ann.iscrowd and not include_crowd:
            continue
        seen.setdefault(ann.category_id, set()).add(ann.image_id)
    n = len(d.images)
    return {c: len(imgs) / n for c, imgs in sorted(seen.items())}


def repeat_factor(f: float, t: float) -> float:
    """``max(1, sqrt(t / f))`` — the per-category over-sampling factor."""
    if not 0.0 < f <= 1.0:
        raise ValueError(f"frequency must be in (0, 1], got {f}")
    if t <= 0.0:
        raise ValueError(f"threshold must be > 0, got {t}")
    return max(1.0, math.sqrt(t / f))


def image_repeat_factors(
    d: Dataset, t: float, include_crowd: bool = False
) -> dict[int, float]:
    """Per-image factor: the max repeat factor over categories present (1 if none)."""
    freq = category_frequency(d, include_crowd=include_crowd)
    factors: dict[int, float] = {}
    for rec in d.images:
        r = 1.0
        for ann in d.annotations_for(rec.id):
            if ann.iscrowd and not include_crowd:
                continue
            r = max(r, repeat_factor(freq[ann.category_id], t))
        factors[rec.id] = r
    return factors


def rfs_epoch(d: Dataset, t: float, rng: np.random.Generator) -> list[int]:
    """One epoch of image ids with stochastic-rounded repeat factors, shuffled.

    Each image contributes ``floor(r)`` copies plus one more with probability
    ``frac(r)``.  One uniform draw is consumed per image, in image-list order,
    then the id list is permuted — all from the supplied generator.
    """
    factors = image_repeat_factors(d, t)
    ids: list[int] = []
    for rec in d.images:
        r = factors[rec.id]
        copies = int(math.floor(r))
        if rng.random() < r - copies:
            copies += 1
        ids.extend([rec.id] * copies)
    order = rng.permutation(len(ids))
    return [ids[i] for i in order]


@dataclass(frozen=True, slots=True)
class ClassWeights:
    """Per-category loss weights: raw, mean-normalized, and clipped."""

    beta: float
    counts: dict[int, int]
    raw: dict[int, float]
    normalized: dict[int, float]
    final: dict[int, float]

    def rows(self, names: dict[int, str] | None = None) -> list[dict]:
        """Serializable table rows, one per category in id order."""
        out = []
        for c in sorted(self.counts):
            row = {
                "category_id": c,
                "instances": self.counts[c],
                "raw": self.raw[c],
                "normalized": self.normalized[c],
                "final": self.final[c],
            }
            if names is not None:
                row["name"] = names.get(c, "")
            out.append(row)
        return out


def class_balanced_weights(instance_counts: dict[int, int], beta: float = DEFAULT_CB_BETA) -> ClassWeights:
    """Weights ``(1 - beta) / (1 - beta**n)``, normalized to mean 1, then clipped."""
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    if not instance_counts:
        raise ValueError("instance_counts must not be empty")
    for c, n in instance_counts.items():
        if n < 1:
            raise ValueError(f"category {c}: instance count must be >= 1, got {n}")
    raw = {c: (1.0 - beta) / (1.0 - beta ** int(n)) for c, n in instance_counts.items()}
    mean = sum(raw.values()) / len(raw)
    normalized = {c: v / mean for c, v in raw.items()}
    lo, hi = WEIGHT_CLIP
    final = {c: min(max(v, lo), hi) for c, v in normalized.items()}
    return ClassWeights(
        beta=beta,
        counts={c: int(n) for c, n in instance_counts.items()},
        raw=raw,
        normalized=normalized,
        final=final,
    )


def instance_counts(d: Dataset, include_crowd: bool = False) -> dict[int, int]:
    """Per-category instance counts over the dataset (crowds excluded by default)."""
    counts: dict[int, int] = {}
    for ann in d.annotations:
        if ann.iscrowd and not include_crowd:
            continue
        counts[ann.category_id] = counts.get(ann.category_id, 0) + 1
    return counts


def rfs_table(d: Dataset, t: float = DEFAULT_RFS_T) -> list[dict]:
    """Per-category frequency/repeat-factor rows for CSV or JSON emission."""
    freq = category_frequency(d)
    names = {c.id: c.name for c in d.categories}
    return [
        {
            "category_id": c,
            "name": names.get(c, ""),
            "frequency": f,
            "repeat_factor": repeat_factor(f, t),
        }
        for c, f in sorted(freq.items())
    ]
