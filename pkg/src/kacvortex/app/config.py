"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Unknown keys are rejected, as are
values that fail to parse; messages name the key.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path


@dataclass(frozen=True)
class RunSettings:
    q: int = 2
    width: int = 64
    height: int = 64
    kernel_radius: int = 2
    block_size: int = 4
    beta: float = 5.0
    boundary: str = "vortex"
    degree: int = 1
    phi0: float = 1.0
    boundary_noise: float = 0.0
    theta0: float = math.pi / 2
    init_kind: str = "zero"
    init_max_modulus: float = 0.05
    seed: int = 0
    h: float = 0.05
    t_max: float = 20000.0
    tol: float = 1e-8
    record_every: int = 200
    checkpoint_every: int = 0
    out_dir: str = "run"
    schedule_file: str = ""
    warm_start: str = ""

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())

    def with_values(self, **changes) -> "RunSettings":
        return replace(self, **changes)


_TYPES = {f.name: f.type for f in fields(RunSettings)}
_PATH_KEYS = ("out_dir", "schedule_file", "warm_start")


class ConfigError(ValueError):
    pass


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        if kind == "float":
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError
            return value
        return raw
    except ValueError:
        raise ConfigError(f"invalid value for key {key!r}: {raw!r}") from None


def parse_config(text: str, base_dir: Path | None = None) -> RunSettings:
    """Parse configuration text; relative paths resolve against ``base_dir``."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r} on line {lineno}")
        if key in values:
            raise ConfigError(f"duplicate key {key!r} on line {lineno}")
        values[key] = _convert(key, raw)
    if base_dir is not None:
        values.setdefault("out_dir", RunSettings.out_dir)
        for key in _PATH_KEYS:
            if values.get(key) and not Path(values[key]).is_absolute():
                values[key] = str(Path(base_dir) / values[key])
    settings = RunSettings(**values)
    validate_settings(settings)
    return settings


def load_config(path) -> RunSettings:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def validate_settings(s: RunSettings) -> None:
    def need(ok: bool, key: str, why: str) -> None:
        if not ok:
            raise ConfigError(f"invalid value for key {key!r}: {getattr(s, key)!r} ({why})")

    need(s.q in (2, 3), "q", "must be 2 or 3")
    for key in ("width", "height", "kernel_radius", "block_size", "record_every"):
        need(getattr(s, key) >= 1, key, "must be >= 1")
    need(s.beta > 0, "beta", "must be > 0")
    need(s.boundary in ("vortex", "zero"), "boundary", "must be 'vortex' or 'zero'")
    need(s.boundary_noise >= 0, "boundary_noise", "must be >= 0")
    need(0 < s.theta0 <= math.pi / 2, "theta0", "must lie in (0, pi/2]")
    need(s.init_kind in ("zero", "random"), "init_kind", "must be 'zero' or 'random'")
    need(0 <= s.init_max_modulus < 1, "init_max_modulus", "must lie in [0, 1)")
    need(s.h > 0, "h", "must be > 0")
    need(s.tol > 0, "tol", "must be > 0")
    need(s.t_max >= s.h, "t_max", "must be >= h")
    need(s.checkpoint_every >= 0, "checkpoint_every", "must be >= 0")
    need(bool(s.out_dir), "out_dir", "must not be empty")
