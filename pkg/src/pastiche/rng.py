"""Deterministic random-stream derivation.

Every random draw in the engine comes from a generator derived from
``(seed, draw_tag)`` or ``(seed, draw_tag, item_index)``.  Streams for distinct
keys are statistically independent, and a given key always yields the same
stream, so results cannot depend on worker count or scheduling order.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class DrawTag(IntEnum):
    """Namespaces for the independent random streams used by a run."""

    MIX = 1  # supervised-vs-pseudo target pool choice
    TARGET = 2  # target image draw within the chosen pool
    SOURCE = 3  # source image draw for pasting / mixup
    MAIN_JITTER = 4  # jitter parameters for the target image
    PASTED_JITTER = 5  # jitter parameters for the source image
    SUBSET = 6  # paste-subset selection
    MIXUP_LAMBDA = 7  # mixup convex coefficient
    RFS_EPOCH = 8  # run-level repeat-factor epoch materialization


def run_rng(seed: int, tag: DrawTag) -> np.random.Generator:
    """Generator for a run-level draw (one stream per tag, shared by all items)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(int(tag),)))


def item_rng(seed: int, tag: DrawTag, item_index: int) -> np.random.Generator:
    """Generator for one plan item's draw; independent across items and tags."""
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(int(tag), int(item_index)))
    return np.random.default_rng(seq)
