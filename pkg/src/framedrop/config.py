"""Layered run configuration: built-in defaults < JSON config file < command-line flags.

Settings live in named sections (``tracker``, ``scheduler``, ``matching``,
``energy``, ``data``, ``sweep``, ``output``). Every effective value remembers
which layer supplied it so the CLI can print an honest banner.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import ConfigError
from .metrics import MatchingConfig
from .scheduler import SchedulerConfig
from .tracker import TrackerConfig

DEFAULT_TARGETS = "1/1,1/2,1/3,1/5,1/10"

_SECTION_TYPES = {"tracker": TrackerConfig, "scheduler": SchedulerConfig, "matching": MatchingConfig}

_PLAIN_DEFAULTS = {
    "energy": {"profile": "castrack-pv-rcnn", "camera_always_on": True},
    "data": {"root": None, "sequences": [], "scenario": None, "seed": 7, "duration": None},
    "sweep": {"targets": DEFAULT_TARGETS, "trigger": "both"},
    "output": {"dir": None, "format": "csv", "plots": True, "workers": 1},
}


def _dataclass_defaults(cls) -> dict:
    out = {}
    for f in dataclasses.fields(cls):
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:
            out[f.name] = f.default_factory()
    return out


def defaults() -> dict:
    out = {name: _dataclass_defaults(cls) for name, cls in _SECTION_TYPES.items()}
    out.update({k: dict(v) for k, v in _PLAIN_DEFAULTS.items()})
    return out


@dataclasses.dataclass
class Settings:
    values: dict
    sources: dict        # "section.key" -> "default" | "file" | "flag"

    @classmethod
    def build(cls, file_data: Optional[Mapping] = None, flags: Optional[Mapping[str, Any]] = None) -> "Settings":
        values = defaults()
        sources = {f"{s}.{k}": "default" for s, sec in values.items() for k in sec}
        for layer, data in (("file", _flatten(file_data or {})), ("flag", dict(flags or {}))):
            for dotted, value in data.items():
                if value is None:
                    continue
                section, _, key = dotted.partition(".")
                if section not in values:
                    raise ConfigError(f"unknown config section {section!r}", dotted)
                if key not in values[section]:
                    raise ConfigError(f"unknown config key {dotted!r}", dotted)
                values[section][key] = value
                sources[dotted] = layer
        return cls(values, sources)

    def get(self, dotted: str):
        section, _, key = dotted.partition(".")
        return self.values[section][key]

    def tracker(self) -> TrackerConfig:
        return _construct(TrackerConfig, self.values["tracker"], "tracker")

    def scheduler(self) -> SchedulerConfig:
        return _construct(SchedulerConfig, self.values["scheduler"], "scheduler")

    def matching(self) -> MatchingConfig:
        return _construct(MatchingConfig, self.values["matching"], "matching")

    def banner(self, sections=None) -> list[str]:
        """``# section.key = value  [source]`` lines, sorted by key."""
        lines = ["# effective configuration"]
        for section in sections or self.values:
            for key in sorted(self.values[section]):
                dotted = f"{section}.{key}"
                value = json.dumps(self.values[section][key], default=str)
                lines.append(f"#   {dotted} = {value}  [{self.sources[dotted]}]")
        return lines


def _flatten(data: Mapping) -> dict:
    if not isinstance(data, Mapping):
        raise ConfigError("config file must hold a JSON object of sections")
    out = {}
    for section, body in data.items():
        if not isinstance(body, Mapping):
            raise ConfigError(f"config section {section!r} must be an object", section)
        for key, value in body.items():
            out[f"{section}.{key}"] = value
    return out


def _construct(cls, values: dict, section: str):
    try:
        return cls(**values)
    except ConfigError as exc:
        raise ConfigError(str(exc), f"{section}.{exc.field}" if exc.field else section) from None
    except TypeError as exc:
        raise ConfigError(f"invalid {section} settings: {exc}", section) from None


def load_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}", "config") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}", "config") from None


def parse_targets(text: str) -> list[tuple[int, int]]:
    """``"1/1,1/2,2/5"`` -> [(1, 1), (1, 2), (2, 5)]."""
    out = []
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        try:
            n, m = (int(x) for x in item.split("/"))
        except ValueError:
            raise ConfigError(f"processing target {item!r} is not of the form n/m", "sweep.targets") from None
        if not 1 <= n <= m:
            raise ConfigError(f"processing target {item!r} needs 1 <= n <= m", "sweep.targets")
        out.append((n, m))
    if not out:
        raise ConfigError("no processing targets given", "sweep.targets")
    return out
