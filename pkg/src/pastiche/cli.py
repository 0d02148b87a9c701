"""Command-line surface: augment, long-tail tables, merging, inspection, overlays.

Exit codes are a stable scripting contract: 0 on success, 2 for usage or
configuration problems (bad flags, malformed config, missing files), 1 for
runtime failures mid-run.
"""

from __future__ import annotations

import functools
import json
import sys
from dataclasses import replace
from pathlib import Path

import click
from PIL import Image

from . import __version__
from .annotations import load_dataset, write_dataset
from .config import DEFAULT_SCORE_THRESHOLD, DataMixSpec, DatasetRef, load_config
from .errors import ConfigError, DatasetError, PasticheError
from .longtail import (
    DEFAULT_CB_BETA,
    DEFAULT_RFS_T,
    class_balanced_weights,
    instance_counts,
    rfs_table,
)
from .pipeline import load_pseudo_dataset, materialize_merged, merge_pseudo, run
from .visualize import overlay_for_image


def engine_errors(fn):
    """Map engine exceptions onto the exit-code contract."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, DatasetError, FileNotFoundError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except (PasticheError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Deterministic instance-pasting augmentation for COCO-style datasets."""


def _table_out(lines: list[str], out_path: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out_path is None:
        click.echo(text, nl=False)
    else:
        Path(out_path).write_text(text)
        click.echo(f"wrote {out_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="JSON/TOML run config.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Output directory.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--workers", type=int, default=None, help="Override the worker count.")
@click.option("--num-samples", type=int, default=None, help="Override how many samples to emit.")
@click.option("--on-error", type=click.Choice(["abort", "skip"]), default="abort", show_default=True)
@click.option("--stats-out", type=click.Path(), default=None, help="Also write the stats JSON here.")
@engine_errors
def augment(config_path, out_dir, seed, workers, num_samples, on_error, stats_out) -> None:
    """Write an augmented dataset (PNGs plus annotations.json) to --out."""
    config = load_config(config_path)
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if workers is not None:
        overrides["workers"] = workers
    if num_samples is not None:
        overrides["num_samples"] = num_samples
    if overrides:
        config = replace(config, **overrides)
        if config.seed < 0:
            raise ConfigError(f"seed: must be >= 0, got {config.seed}")
        if config.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {config.workers}")
        if config.num_samples is not None and config.num_samples < 0:
            raise ConfigError(f"num_samples: must be >= 0, got {config.num_samples}")
    stats = run(config, out_dir, on_error=on_error, stats_path=stats_out)
    click.echo(json.dumps(stats.to_json_dict(), indent=2, sort_keys=True))


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--image-root", type=click.Path(), default=None)
@click.option("--t", "t", type=float, default=DEFAULT_RFS_T, show_default=True,
              help="Rare-category frequency threshold.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="CSV path (stdout if omitted).")
@engine_errors
def rfs(dataset_path, image_root, t, out_path) -> None:
    """Per-category image frequency and repeat factor, as CSV."""
    d = load_dataset(dataset_path, image_root)
    try:
        rows = rfs_table(d, t)
    except ValueError as exc:
        raise DatasetError(str(exc)) from exc
    lines = [f"# repeat factor sampling, t={t!r}", "category_id,name,frequency,repeat_factor"]
    lines += [
        f"{r['category_id']},{_csv_name(r['name'])},{r['frequency']!r},{r['repeat_factor']!r}"
        for r in rows
    ]
    _table_out(lines, out_path)


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--image-root", type=click.Path(), default=None)
@click.option("--beta", type=float, default=DEFAULT_CB_BETA, show_default=True,
              help="Effective-number decay.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="CSV path (stdout if omitted).")
@engine_errors
def cbweights(dataset_path, image_root, beta, out_path) -> None:
    """Per-category class-balanced loss weights (raw, normalized, clipped), as CSV."""
    d = load_dataset(dataset_path, image_root)
    try:
        weights = class_balanced_weights(instance_counts(d), beta)
    except ValueError as exc:
        raise DatasetError(str(exc)) from exc
    names = {c.id: c.name for c in d.categories}
    lines = [f"# class-balanced weights, beta={beta!r}",
             "category_id,name,instances,raw,normalized,final"]
    lines += [
        f"{r['category_id']},{_csv_name(r['name'])},{r['instances']},"
        f"{r['raw']!r},{r['normalized']!r},{r['final']!r}"
        for r in weights.rows(names)
    ]
    _table_out(lines, out_path)


def _csv_name(name: str) -> str:
    if any(ch in name for ch in ',"\n'):
        return '"' + name.replace('"', '""') + '"'
    return name


@main.command("merge-pseudo")
@click.option("--supervised", "sup_path", required=True, type=click.Path())
@click.option("--supervised-root", type=click.Path(), default=None)
@click.option("--pseudo", "pseudo_path", required=True, type=click.Path())
@click.option("--pseudo-root", type=click.Path(), default=None)
@click.option("--score-threshold", type=float, default=DEFAULT_SCORE_THRESHOLD, show_default=True,
              help="Drop machine-labeled instances scoring below this.")
@click.option("--out", "out_path", required=True, type=click.Path())
@engine_errors
def merge_pseudo_cmd(sup_path, supervised_root, pseudo_path, pseudo_root, score_threshold, out_path) -> None:
    """Materialize supervised + machine-labeled data as one standalone JSON."""
    supervised = load_dataset(sup_path, supervised_root)
    pseudo_ref = DatasetRef(
        json_path=str(pseudo_path),
        image_root=None if pseudo_root is None else str(pseudo_root),
        score_threshold=score_threshold,
    )
    pseudo = load_pseudo_dataset(pseudo_ref)
    spec = DataMixSpec(
        supervised=DatasetRef(json_path=str(sup_path)),
        pseudo=pseudo_ref,
        paste_targets="both",
    )
    merged = materialize_merged(merge_pseudo(supervised, pseudo, spec))
    write_dataset(merged, out_path)
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--image-root", type=click.Path(), default=None)
@engine_errors
def inspect(dataset_path, image_root) -> None:
    """Print a JSON summary: counts, category table, size ranges."""
    d = load_dataset(dataset_path, image_root)
    per_category = instance_counts(d, include_crowd=True)
    images_with: dict[int, set[int]] = {}
    for ann in d.annotations:
        images_with.setdefault(ann.category_id, set()).add(ann.image_id)
    summary = {
        "images": len(d.images),
        "annotations": len(d.annotations),
        "crowd_annotations": sum(1 for a in d.annotations if a.iscrowd),
        "categories": [
            {
                "id": c.id,
                "name": c.name,
                "instances": per_category.get(c.id, 0),
                "images": len(images_with.get(c.id, ())),
            }
            for c in sorted(d.categories, key=lambda c: c.id)
        ],
        "image_size": (
            None
            if not d.images
            else {
                "min_width": min(r.width for r in d.images),
                "max_width": max(r.width for r in d.images),
                "min_height": min(r.height for r in d.images),
                "max_height": max(r.height for r in d.images),
            }
        ),
    }
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--image-root", type=click.Path(), default=None)
@click.option("--image-id", type=int, required=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--labels/--no-labels", default=True, show_default=True)
@engine_errors
def visualize(dataset_path, image_root, image_id, out_path, labels) -> None:
    """Write a PNG overlay of one image's masks, boxes, and labels."""
    d = load_dataset(dataset_path, image_root)
    rendered = overlay_for_image(d, image_id, draw_labels=labels)
    Image.fromarray(rendered).save(out_path)
    click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
