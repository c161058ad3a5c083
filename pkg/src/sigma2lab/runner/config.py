"""Scenario configuration in TOML.

A scenario file holds a few top-level keys and one table per option
group. Writing and parsing a :class:`Scenario` is lossless.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli
import tomli_w

SCHEMA_VERSION = 1
KINDS = ("classify", "football", "levelset-verify", "isoperimetry", "boundary-sequence")
SOURCES = ("sphere", "football", "perturbed", "file")


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


@dataclass(frozen=True)
class GridOptions:
    resolution: int = 64
    domain_radius: float = 6.0
    bins: int = 201


@dataclass(frozen=True)
class LevelsetOptions:
    source: str = "sphere"
    path: str = "grid"  # "grid" or "analytic"
    field_file: str = ""
    index: int = 0  # member of the perturbed family


@dataclass(frozen=True)
class SequenceOptions:
    eps0: float = -0.1
    length: int = 20
    index: int = 1
    schedule: str = "harmonic"  # eps_l = eps0 / l; "constant" keeps eps0


@dataclass(frozen=True)
class IsoperimetryOptions:
    eps: tuple[float, ...] = (0.05, 0.1, 0.2)
    log2_samples: int = 20
    random_sets: int = 50


@dataclass(frozen=True)
class Scenario:
    kind: str
    betas: tuple[float, ...] = (-0.5, -0.5)
    seed: int = 0
    out_dir: str = "out"
    grid: GridOptions = field(default_factory=GridOptions)
    levelset: LevelsetOptions = field(default_factory=LevelsetOptions)
    sequence: SequenceOptions = field(default_factory=SequenceOptions)
    isoperimetry: IsoperimetryOptions = field(default_factory=IsoperimetryOptions)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        if self.levelset.source not in SOURCES:
            raise ConfigError(f"unknown field source {self.levelset.source!r}")
        if self.levelset.path not in ("grid", "analytic"):
            raise ConfigError("levelset.path must be 'grid' or 'analytic'")
        if self.sequence.schedule not in ("harmonic", "constant"):
            raise ConfigError("sequence.schedule must be 'harmonic' or 'constant'")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"schema version {self.schema_version} is not supported")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["isoperimetry"]["eps"] = list(self.isoperimetry.eps)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        groups = {"grid": GridOptions, "levelset": LevelsetOptions, "sequence": SequenceOptions,
                  "isoperimetry": IsoperimetryOptions}
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown keys {sorted(extra)}")
        if "kind" not in d:
            raise ConfigError("missing 'kind'")
        for name, typ in groups.items():
            sub = dict(d.get(name, {}))
            bad = set(sub) - {f.name for f in fields(typ)}
            if bad:
                raise ConfigError(f"unknown keys {sorted(bad)} in [{name}]")
            if "eps" in sub:
                sub["eps"] = tuple(float(x) for x in sub["eps"])
            try:
                d[name] = typ(**sub)
            except TypeError as exc:
                raise ConfigError(str(exc)) from exc
        if "betas" in d:
            d["betas"] = tuple(float(b) for b in d["betas"])
        return cls(**d)

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "Scenario":
        try:
            return cls.from_dict(tomli.loads(text))
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        return cls.loads(text)

    def updated(self, **changes) -> "Scenario":
        """Copy with top-level or ``group__key`` overrides; ``None`` values are ignored."""
        top, groups = {}, {}
        for k, v in changes.items():
            if v is None:
                continue
            if "__" in k:
                g, key = k.split("__", 1)
                groups.setdefault(g, {})[key] = v
            else:
                top[k] = v
        for g, kv in groups.items():
            top[g] = replace(getattr(self, g), **kv)
        return replace(self, **top)
