"""Flat ``key = value`` experiment configuration files.

One file covers the environment, reward, TD3, Dyna, STLSQ and chirp
settings. Keys are the dataclass field names, except the chirp fields which
take a ``chirp_`` prefix. Blank lines and ``#`` comments are ignored; unknown
or repeated keys are errors. Tuples are written comma-separated.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .dyna import DynaConfig
from .plant import EnvConfig, RewardConfig
from .signals import ChirpConfig
from .sindy import StlsqConfig
from .td3 import Td3Config

SECTIONS = {
    "env": (EnvConfig, ""),
    "reward": (RewardConfig, ""),
    "td3": (Td3Config, ""),
    "dyna": (DynaConfig, ""),
    "stlsq": (StlsqConfig, ""),
    "chirp": (ChirpConfig, "chirp_"),
}


class ConfigError(ValueError):
    pass


def _key_table():
    table = {}
    for section, (cls, prefix) in SECTIONS.items():
        for f in fields(cls):
            key = prefix + f.name
            if key in table:
                raise RuntimeError(f"config key {key!r} is ambiguous")
            table[key] = (section, f.name, str(f.type))
    return table


KEYS = _key_table()


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    td3: Td3Config = field(default_factory=Td3Config)
    dyna: DynaConfig = field(default_factory=DynaConfig)
    stlsq: StlsqConfig = field(default_factory=StlsqConfig)
    chirp: ChirpConfig = field(default_factory=ChirpConfig)

    def with_values(self, **values) -> "ExperimentConfig":
        """Copy with flat keys overridden, e.g. ``with_values(seed=3)``."""
        grouped: dict[str, dict] = {}
        for key, val in values.items():
            if key not in KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            section, name, _ = KEYS[key]
            grouped.setdefault(section, {})[name] = val
        parts = {s: replace(getattr(self, s), **kw) for s, kw in grouped.items()}
        return replace(self, **parts)

    def to_text(self) -> str:
        lines = []
        for section, (cls, prefix) in SECTIONS.items():
            lines.append(f"# {section}")
            obj = getattr(self, section)
            for f in fields(cls):
                lines.append(f"{prefix}{f.name} = {_format(getattr(obj, f.name))}")
        return "\n".join(lines) + "\n"


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(text: str, typ: str, where: str):
    text = text.strip()
    optional = "None" in typ
    base = typ.replace("| None", "").replace("None |", "").strip()
    if optional and text.lower() == "none":
        return None
    try:
        if base == "bool":
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
        if base == "int":
            value = float(text)
            if not value.is_integer():
                raise ValueError(text)
            return int(value)
        if base == "float":
            return float(text)
        if base == "tuple":
            inner = text.strip("()[] ")
            return tuple(float(v) for v in inner.split(",") if v.strip())
        return text.strip("'\"")
    except ValueError:
        raise ConfigError(f"{where}: cannot read {text!r} as {base}") from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{where}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        values[key] = _parse(val, KEYS[key][2], where)
    try:
        return ExperimentConfig().with_values(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), str(path))
