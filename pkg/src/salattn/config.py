"""Run configuration: plain key=value text, UTF-8, # comments.

Unknown keys are rejected so a typo cannot silently fall back to a
default. Every value is validated on parse; image extents must be
divisible by 8 to match the three stride-2 encoder stages.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


class ConfigError(ValueError):
    """Unparseable, unknown, or out-of-range configuration entry."""


@dataclass
class RunConfig:
    seed: int = 1
    steps: int = 2000
    lr: float = 1e-4
    tau: float = 0.1
    k_pos: int = 4
    k_neg: int = 4
    batch_videos: int = 2
    batch_frames: int = 4
    n_videos: int = 10
    frames_per_video: int = 16
    height: int = 64
    width: int = 64
    channels: int = 32
    holdout: int = 2
    use_attention: int = 1
    use_contrastive: int = 1
    dataset_root: str = "data"
    checkpoint_path: str = "model.ckpt"
    output_dir: str = "out"


def _int_at_least(minimum):
    def convert(key, raw):
        try:
            v = int(raw, 0)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
        if v < minimum:
            raise ConfigError(f"{key}: must be >= {minimum}, got {v}")
        return v
    return convert


def _positive_float(key, raw):
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if not v > 0.0:
        raise ConfigError(f"{key}: must be positive, got {v}")
    return v


def _extent(key, raw):
    v = _int_at_least(8)(key, raw)
    if v % 8:
        raise ConfigError(f"{key}: must be divisible by 8, got {v}")
    return v


def _flag(key, raw):
    if raw not in ("0", "1"):
        raise ConfigError(f"{key}: expected 0 or 1, got {raw!r}")
    return int(raw)


def _path(key, raw):
    if not raw:
        raise ConfigError(f"{key}: empty path")
    return raw


_VALIDATORS = {
    "seed": _int_at_least(0),
    "steps": _int_at_least(0),
    "lr": _positive_float,
    "tau": _positive_float,
    "k_pos": _int_at_least(1),
    "k_neg": _int_at_least(1),
    "batch_videos": _int_at_least(1),
    "batch_frames": _int_at_least(1),
    "n_videos": _int_at_least(1),
    "frames_per_video": _int_at_least(1),
    "height": _extent,
    "width": _extent,
    "channels": _int_at_least(1),
    "holdout": _int_at_least(0),
    "use_attention": _flag,
    "use_contrastive": _flag,
    "dataset_root": _path,
    "checkpoint_path": _path,
    "output_dir": _path,
}

assert set(_VALIDATORS) == {f.name for f in fields(RunConfig)}


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    seen = set()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw_line.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _VALIDATORS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        setattr(cfg, key, _VALIDATORS[key](key, value))
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
