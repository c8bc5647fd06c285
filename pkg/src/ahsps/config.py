"""Flat ``key = value`` configuration files.

One pair per line, ``#`` starts a comment. Source keys are the
:class:`~ahsps.model.SourceConfig` field names; bench detectors use the
``det_a.`` and ``det_b.`` prefixes::

    pump_power = 1.6e-3
    det_a.efficiency = 0.084
    det_a.dark_count_prob = 35.1e-6
"""

from __future__ import annotations

import dataclasses
import hashlib
from pathlib import Path

from .model import DetectorConfig, SourceConfig


class ConfigError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.line = line


_SOURCE_FIELDS = {f.name: f for f in dataclasses.fields(SourceConfig)}
_DETECTOR_FIELDS = {f.name: f for f in dataclasses.fields(DetectorConfig)}
_VALID_KEYS = set(_SOURCE_FIELDS) | {
    f"{prefix}.{name}" for prefix in ("det_a", "det_b") for name in _DETECTOR_FIELDS
}


def _required(fields) -> list[str]:
    return [name for name, f in fields.items()
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING]


def parse_config_text(text: str, path: str | None = None) -> dict[str, float]:
    values: dict[str, float] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", path, lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _VALID_KEYS:
            raise ConfigError(f"unknown key {key!r}", path, lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", path, lineno)
        try:
            values[key] = float(value)
        except ValueError:
            raise ConfigError(f"value for {key!r} is not a number: {value!r}", path, lineno) from None
        lines[key] = lineno
    return values


def load_config(path: str | Path) -> dict[str, float]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config_text(text, str(path))


def detectors_from(values: dict[str, float], path: str | None = None) -> tuple[DetectorConfig, DetectorConfig]:
    dets = []
    for prefix in ("det_a", "det_b"):
        kwargs = {}
        for name in _DETECTOR_FIELDS:
            key = f"{prefix}.{name}"
            if key in values:
                kwargs[name] = values[key]
            elif name in _required(_DETECTOR_FIELDS):
                raise ConfigError(f"missing required key {key!r}", path)
        try:
            dets.append(DetectorConfig(**kwargs))
        except ValueError as exc:
            raise ConfigError(f"{prefix}: {exc}", path) from None
    return dets[0], dets[1]


def source_from(values: dict[str, float], path: str | None = None) -> SourceConfig:
    for key in _required(_SOURCE_FIELDS):
        if key not in values:
            raise ConfigError(f"missing required key {key!r}", path)
    kwargs = {k: v for k, v in values.items() if k in _SOURCE_FIELDS}
    try:
        return SourceConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), path) from None


def format_config(src: SourceConfig | None = None,
                  det_a: DetectorConfig | None = None,
                  det_b: DetectorConfig | None = None) -> str:
    """Render configs back to the file format (round-trips through ``parse_config_text``)."""
    out = []
    if src is not None:
        out += [f"{k} = {v!r}" for k, v in dataclasses.asdict(src).items()]
    for prefix, det in (("det_a", det_a), ("det_b", det_b)):
        if det is not None:
            out += [f"{prefix}.{k} = {v!r}" for k, v in dataclasses.asdict(det).items()]
    return "\n".join(out) + "\n"


def config_hash(values: dict[str, float]) -> str:
    """Order-independent SHA-256 over the parsed values."""
    canon = "\n".join(f"{k}={values[k]!r}" for k in sorted(values))
    return hashlib.sha256(canon.encode()).hexdigest()
