"""Run configuration: parsing, validation, and round-trippable serialization.

Config files are JSON (always) or TOML (when a TOML parser is available —
stdlib ``tomllib`` on Python 3.11+, else an importable ``tomli``).  Keys mirror
the :class:`AugConfig` field names exactly; unknown keys are rejected so typos
fail loudly.  ``PASTICHE_SEED`` and ``PASTICHE_WORKERS`` environment variables
override the file values; command-line flags override both.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping

from .copy_paste import BlendConfig, PastePolicy
from .errors import ConfigError
from .transforms import JitterMode, normalize_pad_value

ENV_SEED = "PASTICHE_SEED"
ENV_WORKERS = "PASTICHE_WORKERS"

PASTE_TARGET_CHOICES = ("supervised_only", "pseudo_only", "both")
PASTE_SOURCE_CHOICES = ("supervised_only",)
DEFAULT_SCORE_THRESHOLD = 0.5


@dataclass(frozen=True, slots=True)
class DatasetRef:
    """Pointer to a COCO-style JSON file plus the directory its images live in."""

    json_path: str
    image_root: str | None = None
    score_threshold: float | None = None  # pseudo-label confidence filter


@dataclass(frozen=True, slots=True)
class DataMixSpec:
    """Which datasets supply paste targets and sources, and in what proportion."""

    supervised: DatasetRef
    pseudo: DatasetRef | None = None
    batch_fraction_supervised: float = 0.5
    paste_targets: str = "supervised_only"
    paste_sources: str = "supervised_only"


@dataclass(frozen=True, slots=True)
class AugConfig:
    """The full, serializable recipe for one augmentation run."""

    target_size: tuple[int, int]
    mix: DataMixSpec
    main_jitter: JitterMode = JitterMode.lsj()
    pasted_jitter: JitterMode = JitterMode.lsj()
    paste_policy: PastePolicy = PastePolicy.random_subset(0.5)
    blend: BlendConfig = BlendConfig()
    copy_paste_enabled: bool = True
    mixup_enabled: bool = False
    seed: int = 0
    min_visible_pixels: int = 0
    workers: int = 1
    rfs: float | None = None
    num_samples: int | None = None
    pad_value: tuple[int, int, int] = (128, 128, 128)
    random_anchor: bool = False


def _require(mapping: Mapping, key: str, where: str) -> Any:
    if key not in mapping:
        raise ConfigError(f"{where}{key}: missing required key")
    return mapping[key]


def _parse_jitter(raw: Any, field: str) -> JitterMode:
    try:
        if isinstance(raw, str):
            if raw == "fixed":
                raise ValueError("fixed mode needs a scale, use {kind: fixed, scale: s}")
            return JitterMode(kind=raw)
        if isinstance(raw, Mapping):
            extra = set(raw) - {"kind", "scale"}
            if extra:
                raise ValueError(f"unknown keys {sorted(extra)}")
            scale = raw.get("scale")
            return JitterMode(kind=raw.get("kind", ""), scale=None if scale is None else float(scale))
    except ValueError as exc:
        raise ConfigError(f"{field}: {exc}") from exc
    raise ConfigError(f"{field}: expected a mode name or mapping, got {type(raw).__name__}")


def _parse_policy(raw: Any, field: str) -> PastePolicy:
    try:
        if isinstance(raw, str):
            return PastePolicy(kind=raw, p=0.5 if raw == "random_subset" else None)
        if isinstance(raw, Mapping):
            extra = set(raw) - {"kind", "p"}
            if extra:
                raise ValueError(f"unknown keys {sorted(extra)}")
            kind = raw.get("kind", "")
            p = raw.get("p")
            if kind == "random_subset" and p is None:
                p = 0.5
            return PastePolicy(kind=kind, p=None if p is None else float(p))
    except ValueError as exc:
        raise ConfigError(f"{field}: {exc}") from exc
    raise ConfigError(f"{field}: expected a policy name or mapping, got {type(raw).__name__}")


def _parse_blend(raw: Any, field: str) -> BlendConfig:
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{field}: expected a mapping")
    extra = set(raw) - {"enabled", "sigma", "kernel_radius"}
    if extra:
        raise ConfigError(f"{field}: unknown keys {sorted(extra)}")
    try:
        return BlendConfig(
            enabled=bool(raw.get("enabled", True)),
            sigma=float(raw.get("sigma", 1.0)),
            kernel_radius=int(raw.get("kernel_radius", 2)),
        )
    except ValueError as exc:
        raise ConfigError(f"{field}: {exc}") from exc


def _parse_dataset_ref(raw: Any, field: str, base_dir: Path | None) -> DatasetRef:
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{field}: expected a mapping with a 'json' key")
    extra = set(raw) - {"json", "image_root", "score_threshold"}
    if extra:
        raise ConfigError(f"{field}: unknown keys {sorted(extra)}")
    json_path = _require(raw, "json", f"{field}.")
    image_root = raw.get("image_root")
    threshold = raw.get("score_threshold")

    def _resolve(p: str) -> str:
        path = Path(p)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return str(path)

    return DatasetRef(
        json_path=_resolve(str(json_path)),
        image_root=None if image_root is None else _resolve(str(image_root)),
        score_threshold=None if threshold is None else float(threshold),
    )


def _parse_mix(raw: Any, base_dir: Path | None) -> DataMixSpec:
    if not isinstance(raw, Mapping):
        raise ConfigError("mix: expected a mapping")
    known = {"supervised", "pseudo", "batch_fraction_supervised", "paste_targets", "paste_sources"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"mix: unknown keys {sorted(extra)}")
    supervised = _parse_dataset_ref(_require(raw, "supervised", "mix."), "mix.supervised", base_dir)
    pseudo_raw = raw.get("pseudo")
    pseudo = (
        None if pseudo_raw is None else _parse_dataset_ref(pseudo_raw, "mix.pseudo", base_dir)
    )
    fraction = float(raw.get("batch_fraction_supervised", 0.5))
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"mix.batch_fraction_supervised: must be in [0, 1], got {fraction}")
    targets = str(raw.get("paste_targets", "supervised_only"))
    if targets not in PASTE_TARGET_CHOICES:
        raise ConfigError(
            f"mix.paste_targets: must be one of {'|'.join(PASTE_TARGET_CHOICES)}, got {targets!r}"
        )
    sources = str(raw.get("paste_sources", "supervised_only"))
    if sources not in PASTE_SOURCE_CHOICES:
        raise ConfigError(
            f"mix.paste_sources: only {'|'.join(PASTE_SOURCE_CHOICES)} is supported, got {sources!r}"
        )
    if targets != "supervised_only" and pseudo is None:
        raise ConfigError(f"mix.pseudo: required when mix.paste_targets is {targets!r}")
    return DataMixSpec(
        supervised=supervised,
        pseudo=pseudo,
        batch_fraction_supervised=fraction,
        paste_targets=targets,
        paste_sources=sources,
    )


_TOP_LEVEL_KEYS = {
    "target_size",
    "mix",
    "main_jitter",
    "pasted_jitter",
    "paste_policy",
    "blend",
    "copy_paste_enabled",
    "mixup_enabled",
    "seed",
    "min_visible_pixels",
    "workers",
    "rfs",
    "num_samples",
    "pad_value",
    "random_anchor",
}


def config_from_mapping(raw: Mapping[str, Any], base_dir: str | Path | None = None) -> AugConfig:
    """Validate a config mapping into an :class:`AugConfig`.

    Relative dataset paths resolve against ``base_dir`` when given.  Raises
    :class:`ConfigError` with the offending field named in the message.
    """
    if not isinstance(raw, Mapping):
        raise ConfigError("config: top level must be a mapping")
    extra = set(raw) - _TOP_LEVEL_KEYS
    if extra:
        raise ConfigError(f"config: unknown keys {sorted(extra)}")
    base = Path(base_dir) if base_dir is not None else None

    ts_raw = _require(raw, "target_size", "")
    try:
        th, tw = (int(v) for v in ts_raw)
        if th < 1 or tw < 1:
            raise ValueError(f"dimensions must be >= 1, got {th}x{tw}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"target_size: {exc}") from exc

    try:
        pad = normalize_pad_value(raw.get("pad_value", 128))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"pad_value: {exc}") from exc

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0 or seed >= 2**64:
        raise ConfigError(f"seed: must be an unsigned 64-bit integer, got {seed!r}")
    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        raise ConfigError(f"workers: must be an integer >= 1, got {workers!r}")
    min_visible = raw.get("min_visible_pixels", 0)
    if not isinstance(min_visible, int) or isinstance(min_visible, bool) or min_visible < 0:
        raise ConfigError(f"min_visible_pixels: must be an integer >= 0, got {min_visible!r}")

    rfs_raw = raw.get("rfs")
    if isinstance(rfs_raw, Mapping):
        extra_rfs = set(rfs_raw) - {"t"}
        if extra_rfs:
            raise ConfigError(f"rfs: unknown keys {sorted(extra_rfs)}")
        rfs_raw = _require(rfs_raw, "t", "rfs.")
    rfs = None if rfs_raw is None else float(rfs_raw)
    if rfs is not None and rfs <= 0:
        raise ConfigError(f"rfs: threshold must be > 0, got {rfs}")

    num_samples = raw.get("num_samples")
    if num_samples is not None and (
        not isinstance(num_samples, int) or isinstance(num_samples, bool) or num_samples < 0
    ):
        raise ConfigError(f"num_samples: must be an integer >= 0 or null, got {num_samples!r}")

    copy_paste_enabled = bool(raw.get("copy_paste_enabled", True))
    mixup_enabled = bool(raw.get("mixup_enabled", False))
    if copy_paste_enabled and mixup_enabled:
        raise ConfigError(
            "copy_paste_enabled/mixup_enabled: at most one augmentation mode may be active"
        )

    config = AugConfig(
        target_size=(th, tw),
        mix=_parse_mix(_require(raw, "mix", ""), base),
        main_jitter=_parse_jitter(raw.get("main_jitter", "lsj"), "main_jitter"),
        pasted_jitter=_parse_jitter(raw.get("pasted_jitter", "lsj"), "pasted_jitter"),
        paste_policy=_parse_policy(raw.get("paste_policy", "random_subset"), "paste_policy"),
        blend=_parse_blend(raw.get("blend", {}), "blend"),
        copy_paste_enabled=copy_paste_enabled,
        mixup_enabled=mixup_enabled,
        seed=seed,
        min_visible_pixels=min_visible,
        workers=workers,
        rfs=rfs,
        num_samples=num_samples,
        pad_value=pad,
        random_anchor=bool(raw.get("random_anchor", False)),
    )
    return config


def config_to_mapping(config: AugConfig) -> dict[str, Any]:
    """Inverse of :func:`config_from_mapping` (paths emitted as stored)."""

    def _jitter(j: JitterMode) -> Any:
        return {"kind": j.kind, "scale": j.scale} if j.kind == "fixed" else j.kind

    def _policy(p: PastePolicy) -> Any:
        return {"kind": p.kind, "p": p.p} if p.kind == "random_subset" else p.kind

    def _ref(r: DatasetRef | None) -> Any:
        if r is None:
            return None
        out: dict[str, Any] = {"json": r.json_path}
        if r.image_root is not None:
            out["image_root"] = r.image_root
        if r.score_threshold is not None:
            out["score_threshold"] = r.score_threshold
        return out

    return {
        "target_size": list(config.target_size),
        "mix": {
            "supervised": _ref(config.mix.supervised),
            "pseudo": _ref(config.mix.pseudo),
            "batch_fraction_supervised": config.mix.batch_fraction_supervised,
            "paste_targets": config.mix.paste_targets,
            "paste_sources": config.mix.paste_sources,
        },
        "main_jitter": _jitter(config.main_jitter),
        "pasted_jitter": _jitter(config.pasted_jitter),
        "paste_policy": _policy(config.paste_policy),
        "blend": {
            "enabled": config.blend.enabled,
            "sigma": config.blend.sigma,
            "kernel_radius": config.blend.kernel_radius,
        },
        "copy_paste_enabled": config.copy_paste_enabled,
        "mixup_enabled": config.mixup_enabled,
        "seed": config.seed,
        "min_visible_pixels": config.min_visible_pixels,
        "workers": config.workers,
        "rfs": config.rfs,
        "num_samples": config.num_samples,
        "pad_value": list(config.pad_value),
        "random_anchor": config.random_anchor,
    }


def apply_env_overrides(config: AugConfig, env: Mapping[str, str] | None = None) -> AugConfig:
    """Fold ``PASTICHE_SEED`` / ``PASTICHE_WORKERS`` into the config when set."""
    env = os.environ if env is None else env
    changes: dict[str, int] = {}
    if ENV_SEED in env:
        try:
            changes["seed"] = int(env[ENV_SEED])
        except ValueError as exc:
            raise ConfigError(f"{ENV_SEED}: must be an integer, got {env[ENV_SEED]!r}") from exc
    if ENV_WORKERS in env:
        try:
            changes["workers"] = int(env[ENV_WORKERS])
        except ValueError as exc:
            raise ConfigError(f"{ENV_WORKERS}: must be an integer, got {env[ENV_WORKERS]!r}") from exc
    if not changes:
        return config
    out = replace(config, **changes)
    if out.workers < 1:
        raise ConfigError(f"{ENV_WORKERS}: must be >= 1, got {out.workers}")
    if out.seed < 0:
        raise ConfigError(f"{ENV_SEED}: must be >= 0, got {out.seed}")
    return out


def _load_toml(text: str, path: Path) -> Mapping[str, Any]:
    try:
        import tomllib  # Python 3.11+
    except ImportError:
        try:
            import tomli as tomllib  # type: ignore[no-redef]
        except ImportError:
            raise ConfigError(
                f"{path}: TOML configs need Python 3.11+ or the 'tomli' package; "
                "use a JSON config instead"
            ) from None
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:  # type: ignore[attr-defined]
        raise ConfigError(f"{path}: malformed TOML: {exc}") from exc


def load_config(path: str | Path, apply_env: bool = True) -> AugConfig:
    """Read and validate a JSON or TOML config file.

    Relative dataset paths resolve against the config file's directory.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    if path.suffix.lower() == ".toml":
        raw = _load_toml(text, path)
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON: {exc}") from exc
    config = config_from_mapping(raw, base_dir=path.parent)
    if apply_env:
        config = apply_env_overrides(config)
    return config
