"""Orchestration: dataset mixing, plan construction, parallel execution, output.

Every random decision for plan item ``k`` comes from a generator keyed by
``(seed, draw_tag, k)``, so the emitted samples are a pure function of
(config, datasets) — independent of worker count and scheduling order.  A
single consumer drains results in plan order, renumbers output ids, and (in
:func:`run`) writes PNGs plus one JSON file.

Output provenance: each emitted image record carries a ``provenance`` mapping
(original target/source image ids, pasted source annotation ids, candidate
count) and each emitted annotation carries ``pasted``/``pseudo`` flags plus
its ``origin_annotation_id``, so every counter in :class:`RunStats` can be
recomputed from the outputs alone.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image

from .annotations import (
    Dataset,
    ImageRecord,
    InstanceAnnotation,
    load_dataset,
    replace_annotation,
    write_dataset,
)
from .config import DEFAULT_SCORE_THRESHOLD, AugConfig, DataMixSpec, DatasetRef
from .copy_paste import mixup, paste, select_subset
from .errors import ConfigError, DatasetError, ItemError
from .longtail import rfs_epoch
from .masks import bitmap_to_rle
from .rng import DrawTag, item_rng, run_rng
from .transforms import apply, sample_params

logger = logging.getLogger("pastiche")

SUPERVISED = "supervised"
PSEUDO = "pseudo"


@dataclass(frozen=True, slots=True)
class PlanItem:
    """One unit of work: which image gets augmented, and with what source."""

    index: int
    target_dataset: str  # "supervised" | "pseudo"
    target_image_id: int
    source_image_id: int | None  # always from the supervised set; None if unused


@dataclass(frozen=True, slots=True)
class RunStats:
    samples_emitted: int
    instances_pasted: int
    instances_removed: int
    mean_visible_area_ratio: float | None
    throughput_samples_per_sec: float

    def to_json_dict(self) -> dict:
        return {
            "samples_emitted": self.samples_emitted,
            "instances_pasted": self.instances_pasted,
            "instances_removed": self.instances_removed,
            "mean_visible_area_ratio": self.mean_visible_area_ratio,
            "throughput_samples_per_sec": self.throughput_samples_per_sec,
        }


class TargetView:
    """Unified sampling view over the supervised and (optional) pseudo datasets.

    Exposes target-image draws without copying any pixel data.  The supervised
    pool may be replaced by a repeat-factor epoch (a multiset of image ids) to
    oversample rare categories.
    """

    def __init__(
        self,
        supervised: Dataset,
        pseudo: Dataset | None,
        spec: DataMixSpec,
        supervised_pool: Sequence[int] | None = None,
    ) -> None:
        if spec.paste_targets != "supervised_only" and pseudo is None:
            raise ConfigError(
                f"mix.pseudo: required when mix.paste_targets is {spec.paste_targets!r}"
            )
        if pseudo is not None:
            sup_table = {c.id: c.name for c in supervised.categories}
            ps_table = {c.id: c.name for c in pseudo.categories}
            if sup_table != ps_table:
                diff = sorted(set(sup_table.items()) ^ set(ps_table.items()))
                raise DatasetError(
                    f"supervised and pseudo category tables differ; mismatched entries: {diff[:6]}"
                )
        if not supervised.images:
            raise DatasetError("supervised dataset has no images")
        if spec.paste_targets != "supervised_only" and pseudo is not None and not pseudo.images:
            raise DatasetError("pseudo dataset has no images")
        self.supervised = supervised
        self.pseudo = pseudo
        self.spec = spec
        self.supervised_pool: list[int] = (
            [r.id for r in supervised.images] if supervised_pool is None else list(supervised_pool)
        )
        self.pseudo_pool: list[int] = [] if pseudo is None else [r.id for r in pseudo.images]

    def with_supervised_pool(self, pool: Sequence[int]) -> "TargetView":
        return TargetView(self.supervised, self.pseudo, self.spec, supervised_pool=pool)

    def dataset(self, kind: str) -> Dataset:
        if kind == SUPERVISED:
            return self.supervised
        assert self.pseudo is not None
        return self.pseudo

    @property
    def image_count(self) -> int:
        """Distinct target-pool images (drives the default number of samples)."""
        n = 0
        if self.spec.paste_targets in ("supervised_only", "both"):
            n += len(self.supervised.images)
        if self.spec.paste_targets in ("pseudo_only", "both"):
            n += len(self.pseudo.images) if self.pseudo is not None else 0
        return n

    def draw(self, mix_rng: np.random.Generator, target_rng: np.random.Generator) -> tuple[str, int]:
        """One target draw: pick the dataset per the mix spec, then an image.

        ``mix_rng`` is consumed only when both datasets are in play.
        """
        targets = self.spec.paste_targets
        if targets == "both":
            use_sup = bool(mix_rng.random() < self.spec.batch_fraction_supervised)
        else:
            use_sup = targets == "supervised_only"
        pool = self.supervised_pool if use_sup else self.pseudo_pool
        image_id = int(pool[int(target_rng.integers(len(pool)))])
        return (SUPERVISED if use_sup else PSEUDO, image_id)


def merge_pseudo(supervised: Dataset, pseudo: Dataset | None, spec: DataMixSpec) -> TargetView:
    """Build the unified target-sampling view; category tables must agree."""
    return TargetView(supervised, pseudo, spec)


def load_pseudo_dataset(ref: DatasetRef) -> Dataset:
    """Load machine-labeled annotations, dropping low-confidence instances.

    Annotations keep their ``score`` field; instances with a score below the
    ref's threshold (default 0.5) are dropped, and unscored ones are kept.
    """
    d = load_dataset(ref.json_path, ref.image_root)
    threshold = DEFAULT_SCORE_THRESHOLD if ref.score_threshold is None else ref.score_threshold
    kept = [a for a in d.annotations if float(a.extra.get("score", 1.0)) >= threshold]
    return Dataset(d.images, kept, d.categories, image_root=d.image_root, extra=d.extra)


def load_mix(config: AugConfig) -> TargetView:
    """Load the datasets a config names and assemble the target view.

    The pseudo dataset is only read when targets actually include it.  When
    repeat-factor sampling is configured, the supervised pool is replaced by
    one epoch drawn from the run-level generator, so every plan item sees the
    same oversampled pool.
    """
    sup_ref = config.mix.supervised
    supervised = load_dataset(sup_ref.json_path, sup_ref.image_root)
    pseudo = None
    if config.mix.pseudo is not None and config.mix.paste_targets != "supervised_only":
        pseudo = load_pseudo_dataset(config.mix.pseudo)
    view = merge_pseudo(supervised, pseudo, config.mix)
    if config.rfs is not None:
        epoch = rfs_epoch(supervised, config.rfs, run_rng(config.seed, DrawTag.RFS_EPOCH))
        view = view.with_supervised_pool(epoch)
    return view


def plan(config: AugConfig, view: TargetView) -> list[PlanItem]:
    """The full iteration plan; item ``k`` is a pure function of (seed, k)."""
    if config.copy_paste_enabled and config.mixup_enabled:
        raise ConfigError(
            "copy_paste_enabled/mixup_enabled: at most one augmentation mode may be active"
        )
    n = view.image_count if config.num_samples is None else config.num_samples
    need_source = config.copy_paste_enabled or config.mixup_enabled
    n_sup = len(view.supervised.images)
    items: list[PlanItem] = []
    for k in range(n):
        kind, target_id = view.draw(
            item_rng(config.seed, DrawTag.MIX, k), item_rng(config.seed, DrawTag.TARGET, k)
        )
        source_id: int | None = None
        if need_source:
            srng = item_rng(config.seed, DrawTag.SOURCE, k)
            source_id = int(view.supervised.images[int(srng.integers(n_sup))].id)
        items.append(PlanItem(index=k, target_dataset=kind, target_image_id=target_id, source_image_id=source_id))
    return items


@dataclass(frozen=True, eq=False, slots=True)
class EmittedSample:
    """One finished augmented sample, ids already final."""

    index: int
    record: ImageRecord  # output image record; extra["provenance"] audits the item
    image: np.ndarray  # H×W×3 uint8
    annotations: list[InstanceAnnotation]  # bitmap masks, final ids

    @property
    def file_name(self) -> str:
        return self.record.file_name

    @property
    def provenance(self) -> dict:
        return self.record.extra["provenance"]


@dataclass(frozen=True, eq=False, slots=True)
class _ItemResult:
    index: int
    file_name: str
    image: np.ndarray
    annotations: list[InstanceAnnotation]  # original ids; extras already stamped
    provenance: dict
    pasted: int
    candidates: int
    removed: int
    ratio_sum: float


def _stamp(ann: InstanceAnnotation, pasted: bool, pseudo: bool, **more) -> InstanceAnnotation:
    extra = dict(ann.extra)
    extra.update({"pasted": pasted, "pseudo": pseudo, "origin_annotation_id": int(ann.id)}, **more)
    return replace_annotation(ann, extra=extra)


def execute_item(config: AugConfig, view: TargetView, item: PlanItem) -> _ItemResult:
    """Run one plan item end to end (pure: no shared mutable state)."""
    k = item.index
    target_ds = view.dataset(item.target_dataset)
    target_is_pseudo = item.target_dataset == PSEUDO
    t_rec = target_ds.image(item.target_image_id)
    t_sample = apply(
        target_ds.load_pixels(t_rec.id),
        target_ds.annotations_for(t_rec.id),
        sample_params(
            config.main_jitter,
            config.target_size,
            (t_rec.height, t_rec.width),
            item_rng(config.seed, DrawTag.MAIN_JITTER, k),
            pad_value=config.pad_value,
            random_anchor=config.random_anchor,
        ),
        min_visible_pixels=config.min_visible_pixels,
        source_image_id=t_rec.id,
    )
    candidates = [a for a in t_sample.annotations if not a.iscrowd]

    s_sample = None
    if item.source_image_id is not None:
        s_rec = view.supervised.image(item.source_image_id)
        s_sample = apply(
            view.supervised.load_pixels(s_rec.id),
            view.supervised.annotations_for(s_rec.id),
            sample_params(
                config.pasted_jitter,
                config.target_size,
                (s_rec.height, s_rec.width),
                item_rng(config.seed, DrawTag.PASTED_JITTER, k),
                pad_value=config.pad_value,
                random_anchor=config.random_anchor,
            ),
            min_visible_pixels=config.min_visible_pixels,
            source_image_id=s_rec.id,
        )

    provenance: dict = {
        "target_dataset": item.target_dataset,
        "target_image_id": int(item.target_image_id),
        "source_image_id": None if item.source_image_id is None else int(item.source_image_id),
        "pasted_annotation_ids": [],
        "target_candidates": len(candidates),
        "mixup_lambda": None,
    }
    stem = Path(t_rec.file_name).stem
    file_name = f"{stem}_aug{k}.png"

    if config.copy_paste_enabled:
        assert s_sample is not None
        subset = select_subset(s_sample, config.paste_policy, item_rng(config.seed, DrawTag.SUBSET, k))
        composed = paste(t_sample, s_sample, subset, config.blend, config.min_visible_pixels)
        n_pasted = len(composed.provenance.pasted_annotation_ids)
        target_part = composed.annotations[: len(composed.annotations) - n_pasted]
        pasted_part = composed.annotations[len(composed.annotations) - n_pasted :]
        survivor_area = {a.id: a.area for a in target_part if not a.iscrowd}
        ratio_sum = sum(survivor_area.get(a.id, 0.0) / a.area for a in candidates)
        annotations = [_stamp(a, pasted=False, pseudo=target_is_pseudo) for a in target_part]
        annotations += [_stamp(a, pasted=True, pseudo=False) for a in pasted_part]
        provenance["pasted_annotation_ids"] = [int(i) for i in composed.provenance.pasted_annotation_ids]
        return _ItemResult(
            index=k,
            file_name=file_name,
            image=composed.image,
            annotations=annotations,
            provenance=provenance,
            pasted=n_pasted,
            candidates=len(candidates),
            removed=len(candidates) - len(survivor_area),
            ratio_sum=ratio_sum,
        )

    if config.mixup_enabled:
        assert s_sample is not None
        lam = float(item_rng(config.seed, DrawTag.MIXUP_LAMBDA, k).random())
        mixed = mixup(t_sample, s_sample, lam)
        n_target = len(t_sample.annotations)
        annotations = [
            _stamp(a, pasted=False, pseudo=target_is_pseudo, mix_weight=w)
            for a, w in zip(mixed.annotations[:n_target], mixed.weights[:n_target])
        ]
        annotations += [
            _stamp(a, pasted=True, pseudo=False, mix_weight=w)
            for a, w in zip(mixed.annotations[n_target:], mixed.weights[n_target:])
        ]
        provenance["mixup_lambda"] = lam
        provenance["pasted_annotation_ids"] = [int(a.id) for a in mixed.annotations[n_target:]]
        return _ItemResult(
            index=k,
            file_name=file_name,
            image=mixed.image,
            annotations=annotations,
            provenance=provenance,
            pasted=len(mixed.annotations) - n_target,
            candidates=len(candidates),
            removed=0,
            ratio_sum=float(len(candidates)),
        )

    # jitter-only plan: the target sample passes straight through
    annotations = [_stamp(a, pasted=False, pseudo=target_is_pseudo) for a in t_sample.annotations]
    return _ItemResult(
        index=k,
        file_name=file_name,
        image=t_sample.image,
        annotations=annotations,
        provenance=provenance,
        pasted=0,
        candidates=len(candidates),
        removed=0,
        ratio_sum=float(len(candidates)),
    )


class SampleStream:
    """Single-consumer iterator of :class:`EmittedSample` in plan order.

    Items execute on a thread pool (``config.workers``) with a bounded
    lookahead window; results are drained strictly in plan order so output
    ids and stats never depend on scheduling.  ``close()`` is idempotent and
    joins the workers; iterating a closed stream raises ``RuntimeError``.
    """

    def __init__(self, config: AugConfig, view: TargetView | None = None, on_error: str = "abort") -> None:
        if on_error not in ("abort", "skip"):
            raise ValueError(f"on_error must be abort|skip, got {on_error!r}")
        self.config = config
        self.view = load_mix(config) if view is None else view
        self.items = plan(config, self.view)
        self.categories = list(self.view.supervised.categories)
        self.on_error = on_error
        self._pos = 0  # next plan index to submit
        self._next_ann_id = 1
        self._emitted = 0
        self._pasted = 0
        self._removed = 0
        self._candidates = 0
        self._ratio_sum = 0.0
        self._started = time.perf_counter()
        self._elapsed = 0.0
        self._closed = False
        self._exhausted = False
        self._consumer_lock = threading.Lock()
        self._pool: ThreadPoolExecutor | None = None
        self._pending: deque[tuple[PlanItem, Future]] = deque()
        if config.workers > 1 and len(self.items) > 1:
            self._pool = ThreadPoolExecutor(max_workers=config.workers)
            for _ in range(min(2 * config.workers, len(self.items))):
                self._submit_next()

    def _submit_next(self) -> None:
        if self._pool is not None and self._pos < len(self.items):
            item = self.items[self._pos]
            self._pos += 1
            self._pending.append((item, self._pool.submit(execute_item, self.config, self.view, item)))

    def _next_result(self) -> _ItemResult:
        """Next raw result in plan order, honoring the on_error policy."""
        while True:
            if self._pool is None:
                if self._pos >= len(self.items):
                    raise StopIteration
                item = self.items[self._pos]
                self._pos += 1
                try:
                    return execute_item(self.config, self.view, item)
                except Exception as exc:
                    self._handle_error(item.index, exc)
                    continue
            if not self._pending:
                raise StopIteration
            item, fut = self._pending.popleft()
            self._submit_next()
            try:
                return fut.result()
            except Exception as exc:
                self._handle_error(item.index, exc)
                continue

    def _handle_error(self, index: int, exc: Exception) -> None:
        if self.on_error == "abort":
            self.close()
            raise ItemError(index, str(exc)) from exc
        logger.warning("skipping item %d: %s", index, exc)

    def __iter__(self) -> Iterator[EmittedSample]:
        return self

    def __next__(self) -> EmittedSample:
        if not self._consumer_lock.acquire(blocking=False):
            raise RuntimeError("SampleStream is single-consumer; concurrent next() is unsupported")
        try:
            if self._exhausted:
                raise StopIteration
            if self._closed:
                raise RuntimeError("SampleStream is closed")
            try:
                result = self._next_result()
            except StopIteration:
                self._elapsed = time.perf_counter() - self._started
                self._exhausted = True
                self.close()
                raise
            sample = self._finalize(result)
            self._elapsed = time.perf_counter() - self._started
            return sample
        finally:
            self._consumer_lock.release()

    def _finalize(self, result: _ItemResult) -> EmittedSample:
        image_id = result.index + 1
        annotations = []
        for ann in result.annotations:
            annotations.append(replace_annotation(ann, id=self._next_ann_id, image_id=image_id))
            self._next_ann_id += 1
        h, w = result.image.shape[:2]
        record = ImageRecord(
            id=image_id,
            file_name=result.file_name,
            width=w,
            height=h,
            extra={"provenance": result.provenance},
        )
        self._emitted += 1
        self._pasted += result.pasted
        self._removed += result.removed
        self._candidates += result.candidates
        self._ratio_sum += result.ratio_sum
        return EmittedSample(index=result.index, record=record, image=result.image, annotations=annotations)

    def close(self) -> None:
        """Stop the workers and release resources; safe to call twice."""
        if self._closed:
            return
        self._closed = True
        if self._pool is not None:
            self._pool.shutdown(wait=True, cancel_futures=True)
            self._pool = None
        self._pending.clear()

    @property
    def closed(self) -> bool:
        return self._closed

    def stats(self) -> RunStats:
        """Counters so far (final once the stream is exhausted)."""
        elapsed = self._elapsed if self._elapsed > 0 else time.perf_counter() - self._started
        return RunStats(
            samples_emitted=self._emitted,
            instances_pasted=self._pasted,
            instances_removed=self._removed,
            mean_visible_area_ratio=(
                None if self._candidates == 0 else self._ratio_sum / self._candidates
            ),
            throughput_samples_per_sec=(self._emitted / elapsed if elapsed > 0 else 0.0),
        )


def run(
    config: AugConfig,
    out_dir: str | Path,
    on_error: str = "abort",
    stats_path: str | Path | None = None,
    view: TargetView | None = None,
) -> RunStats:
    """Execute the full plan, writing PNGs plus ``annotations.json`` to ``out_dir``.

    Images are written as each sample is drained (bounded memory); masks are
    compacted to RLE immediately.  The JSON is emitted last, byte-stable for
    equal (config, datasets) regardless of worker count.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stream = SampleStream(config, view=view, on_error=on_error)
    images: list[ImageRecord] = []
    annotations: list[InstanceAnnotation] = []
    try:
        for sample in stream:
            Image.fromarray(sample.image).save(out / sample.file_name)
            images.append(sample.record)
            for ann in sample.annotations:
                seg = ann.segmentation
                if isinstance(seg, np.ndarray):
                    ann = replace_annotation(ann, segmentation=bitmap_to_rle(seg))
                annotations.append(ann)
    finally:
        stream.close()
    write_dataset(Dataset(images, annotations, stream.categories), out / "annotations.json")
    stats = stream.stats()
    if stats_path is not None:
        Path(stats_path).write_text(json.dumps(stats.to_json_dict(), indent=2, sort_keys=True) + "\n")
    return stats


def materialize_merged(view: TargetView) -> Dataset:
    """Flatten the sampling view into one dataset with ids renumbered.

    Supervised images come first, then pseudo; every record carries a
    ``pseudo`` flag and its origin ids, and file names are resolved against
    each dataset's image root so the merged JSON stands on its own.
    """
    images: list[ImageRecord] = []
    annotations: list[InstanceAnnotation] = []
    next_image = 1
    next_ann = 1
    parts = [(view.supervised, False)]
    if view.pseudo is not None:
        parts.append((view.pseudo, True))
    for ds, is_pseudo in parts:
        id_map: dict[int, int] = {}
        for rec in ds.images:
            id_map[rec.id] = next_image
            file_name = (
                str(ds.image_root / rec.file_name) if ds.image_root is not None else rec.file_name
            )
            images.append(
                ImageRecord(
                    id=next_image,
                    file_name=file_name,
                    width=rec.width,
                    height=rec.height,
                    extra={**rec.extra, "pseudo": is_pseudo, "origin_image_id": int(rec.id)},
                )
            )
            next_image += 1
        for ann in ds.annotations:
            annotations.append(
                replace_annotation(
                    ann,
                    id=next_ann,
                    image_id=id_map[ann.image_id],
                    extra={**ann.extra, "pseudo": is_pseudo, "origin_annotation_id": int(ann.id)},
                )
            )
            next_ann += 1
    return Dataset(images, annotations, list(view.supervised.categories))
