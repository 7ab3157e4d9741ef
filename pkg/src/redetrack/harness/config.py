"""Flat ``section.key = value`` configuration files.

Values are coerced to the type of the matching dataclass field. Lists are
comma separated. Later assignments (and ``-o key=value`` overrides) win.
"""
from __future__ import annotations

import dataclasses
import hashlib
import typing
from dataclasses import dataclass, field

from ..anchors import GridConfig
from ..detector import SyntheticOracleConfig
from ..errors import ConfigError
from ..generator import GeneratorConfig
from ..linker import LinkConfig
from ..simulator import SceneConfig


@dataclass(frozen=True)
class MotionConfig:
    kind: str = "identity"  # identity | oracle | block
    block: int = 8
    radius: int = 4
    step: int = 8

    def validate(self) -> None:
        if self.kind not in ("identity", "oracle", "block"):
            raise ConfigError(f"motion.kind must be identity, oracle or block, got {self.kind!r}")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "synthetic"  # synthetic | replay
    replay_path: str = ""

    def validate(self) -> None:
        if self.kind not in ("synthetic", "replay"):
            raise ConfigError(f"backend.kind must be synthetic or replay, got {self.kind!r}")
        if self.kind == "replay" and not self.replay_path:
            raise ConfigError("backend.replay_path is required for the replay backend")


@dataclass(frozen=True)
class BenchConfig:
    buckets: tuple[int, ...] = (1, 10, 50)
    frames: int = 100
    warmup: int = 10
    # the runtime comparison uses a square 1024-pixel input
    frame_w: int = 1024
    frame_h: int = 1024
    size_min: float = 32.0
    size_max: float = 64.0

    def validate(self) -> None:
        if not self.buckets or any(b < 0 for b in self.buckets):
            raise ConfigError("bench.buckets must be a non-empty list of counts >= 0")
        if self.frames < 2 or not 0 <= self.warmup < self.frames:
            raise ConfigError("bench.frames must be >= 2 and bench.warmup in [0, frames)")


SECTIONS = {
    "scene": SceneConfig,
    "grid": GridConfig,
    "generator": GeneratorConfig,
    "linker": LinkConfig,
    "oracle": SyntheticOracleConfig,
    "motion": MotionConfig,
    "backend": BackendConfig,
    "bench": BenchConfig,
}


@dataclass(frozen=True)
class RunConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    linker: LinkConfig = field(default_factory=LinkConfig)
    oracle: SyntheticOracleConfig = field(default_factory=SyntheticOracleConfig)
    motion: MotionConfig = field(default_factory=MotionConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)

    def validate(self) -> None:
        for name in SECTIONS:
            check = getattr(getattr(self, name), "validate", None)
            if check is not None:
                check()

    def section_text(self, name: str) -> str:
        """Canonical ``key=value`` text of one section (used for hashing)."""
        obj = getattr(self, name)
        return "".join(f"{name}.{f.name}={_render(getattr(obj, f.name))}\n" for f in dataclasses.fields(obj))

    def digest(self, *names: str) -> str:
        text = "".join(self.section_text(n) for n in names)
        return hashlib.sha256(text.encode()).hexdigest()


def _render(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_render(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _coerce(tp, raw: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or type(tp).__name__ == "UnionType":
        if raw.lower() in ("", "none"):
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], raw)
    if origin is tuple:
        if raw.strip() == "":
            return ()
        return tuple(_coerce(args[0], x.strip()) for x in raw.split(","))
    if tp is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if tp is int:
        return int(raw)
    if tp is float:
        return float(raw)
    if tp is str:
        return raw
    raise ValueError(f"unsupported field type {tp}")


def _hints(cls) -> dict:
    return {f.name: typing.get_type_hints(cls)[f.name] for f in dataclasses.fields(cls)}


def apply(cfg: RunConfig, assignments, source: str = "<override>") -> RunConfig:
    """Apply (line, key, raw value) triples and return the new config."""
    sections = {n: {} for n in SECTIONS}
    for lineno, key, raw in assignments:
        where = f"{source}:{lineno}" if lineno else source
        sec, _, name = key.partition(".")
        if sec not in SECTIONS or not name:
            raise ConfigError(f"{where}: unknown key {key!r}")
        hints = _hints(SECTIONS[sec])
        if name not in hints:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if sec == "grid" and name == "levels":
            raise ConfigError(f"{where}: grid.levels cannot be set from a config file; use grid.strides")
        try:
            sections[sec][name] = _coerce(hints[name], raw)
        except ValueError as e:
            raise ConfigError(f"{where}: {key}: {e}") from None
    parts = {n: dataclasses.replace(getattr(cfg, n), **vals) if vals else getattr(cfg, n) for n, vals in sections.items()}
    return RunConfig(**parts)


def parse_lines(lines, source: str):
    out = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out.append((lineno, k.strip(), v.strip()))
    return out


def load(path=None, overrides=(), base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    if path is not None:
        try:
            with open(path) as fh:
                lines = fh.readlines()
        except OSError as e:
            raise ConfigError(f"{path}: cannot open: {e.strerror}") from None
        cfg = apply(cfg, parse_lines(lines, str(path)), str(path))
    ov = []
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        ov.append((0, k.strip(), v.strip()))
    return apply(cfg, ov)
