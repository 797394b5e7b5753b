"""key = value configuration files for the CLI.

UTF-8 text, one assignment per line, '#' starts a comment, blank lines
ignored. Unknown keys are hard errors. ``lambda`` and ``alpha`` are the
position / boundary loss weights.
"""

from dataclasses import dataclass
from pathlib import Path

from .augment import AugmentConfig
from .errors import ConfigError
from .model import ModelConfig
from .train import TrainConfig


def _parse_bool(raw, key):
    low = raw.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _parse_int_tuple(raw, key):
    try:
        return tuple(int(part.strip()) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated integers, got {raw!r}") from None


_SCHEMA = {
    # model
    "s": int,
    "widths": "int_tuple",
    "d": int,
    "compress_mid": int,
    "k": int,
    "variant": str,
    "use_ai": "bool",
    "precision": str,
    # training
    "lr": float,
    "batch": int,
    "total_iters": int,
    "lr_halving_period": int,
    "lambda": float,
    "alpha": float,
    "stage1_iters": int,
    "crop": int,
    "seed": int,
    "max_patches": int,
    # synthetic data
    "size": int,
    "regions": int,
    # augmentation
    "p_replace": float,
    "aug_shuffle": "bool",
    "aug_shift": "bool",
}


@dataclass
class ConfigBundle:
    model: ModelConfig
    train: TrainConfig
    size: int
    regions: int


def parse_config_text(text, source="<config>"):
    values = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw_line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        kind = _SCHEMA[key]
        if kind == "bool":
            values[key] = _parse_bool(raw, key)
        elif kind == "int_tuple":
            values[key] = _parse_int_tuple(raw, key)
        elif kind is str:
            values[key] = raw
        else:
            try:
                values[key] = kind(raw)
            except ValueError:
                raise ConfigError(
                    f"{source}:{lineno}: {key} expects {kind.__name__}, got {raw!r}"
                ) from None
    return values


def load_config(path):
    """Parse a config file into (ModelConfig, TrainConfig, synthetic sizes)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = parse_config_text(text, source=str(path))
    return bundle_from_values(values)


def bundle_from_values(values):
    model_kwargs = {}
    for src, dst in (
        ("s", "S"),
        ("widths", "widths"),
        ("d", "D"),
        ("compress_mid", "compress_mid"),
        ("k", "K"),
        ("variant", "variant"),
        ("use_ai", "use_ai"),
        ("precision", "precision"),
    ):
        if src in values:
            model_kwargs[dst] = values[src]
    model = ModelConfig(**model_kwargs)

    augment = AugmentConfig(
        S=model.S,
        p_replace=values.get("p_replace", 0.25),
        shuffle=values.get("aug_shuffle", True),
        shift=values.get("aug_shift", True),
    )
    train_kwargs = {}
    for src, dst in (
        ("lr", "lr"),
        ("batch", "batch"),
        ("total_iters", "total_iters"),
        ("lr_halving_period", "lr_halving_period"),
        ("lambda", "position_weight"),
        ("alpha", "boundary_weight"),
        ("stage1_iters", "stage1_iters"),
        ("crop", "crop"),
        ("seed", "seed"),
        ("max_patches", "max_patches"),
    ):
        if src in values:
            train_kwargs[dst] = values[src]
    train = TrainConfig(augment=augment, **train_kwargs)
    if train.crop % model.S:
        raise ConfigError(f"crop {train.crop} is not divisible by s={model.S}")
    size = values.get("size", train.crop)
    regions = values.get("regions", 6)
    if size < train.crop:
        raise ConfigError(f"size {size} is smaller than crop {train.crop}")
    return ConfigBundle(model=model, train=train, size=size, regions=regions)
