"""Project settings access and the ``key=value`` config text format.

The text format holds one pair per line. Blank lines and lines starting
with ``#`` are ignored and keys must be unique. Tuples are written
comma-separated and missing optional values as ``none``.
"""
from __future__ import annotations

import dataclasses
import enum
import os
import types
import typing
from collections.abc import Mapping

from django.conf import settings

from .exceptions import ConfigError

DEFAULTS = {
    "OUTPUT_ROOT": "runs",
    "DEFAULT_SCENARIO": "G1",
    "DEFAULT_PRESET": "desk",
    "DEFAULT_SEED": 0,
    "EVAL_EPISODES": 200,
    "SEEDS_PER_CELL": 3,
    "LOG_LEVEL": "INFO",
}

NONE_TOKEN = "none"


def dfp_setting(name: str):
    """Read ``settings.DFP[name]``; a ``DFP_<NAME>`` environment variable wins."""
    if name not in DEFAULTS:
        raise ConfigError(f"unknown dfp setting {name!r}")
    default = DEFAULTS[name]
    value = getattr(settings, "DFP", {}).get(name, default)
    raw = os.environ.get(f"DFP_{name}")
    if raw is None:
        return value
    try:
        return type(default)(raw)
    except ValueError as exc:
        raise ConfigError(f"DFP_{name}={raw!r} is not a valid {type(default).__name__}") from exc


def format_value(value) -> str:
    if value is None:
        return NONE_TOKEN
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(item) for item in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(mapping: Mapping[str, object]) -> str:
    lines = []
    for key, value in mapping.items():
        if not key or "=" in key or "\n" in key or key.strip() != key:
            raise ConfigError(f"invalid config key {key!r}")
        text = format_value(value)
        if "\n" in text:
            raise ConfigError(f"value for {key!r} spans several lines")
        lines.append(f"{key}={text}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> dict[str, str]:
    result: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {number}: expected key=value, got {stripped!r}")
        if key in result:
            raise ConfigError(f"line {number}: duplicate key {key!r}")
        result[key] = value.strip()
    return result


def dataclass_to_config(obj, *, prefix: str = "") -> dict[str, object]:
    return {f"{prefix}{field.name}": getattr(obj, field.name) for field in dataclasses.fields(obj)}


def _coerce(raw, annotation, key: str):
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)

    if origin in (typing.Union, types.UnionType):
        members = [arg for arg in args if arg is not type(None)]
        if raw is None or (isinstance(raw, str) and raw.strip().lower() == NONE_TOKEN):
            if len(members) < len(args):
                return None
            raise ConfigError(f"{key} may not be none")
        return _coerce(raw, members[0], key)

    if origin is tuple:
        items = raw if isinstance(raw, (tuple, list)) else [p for p in str(raw).split(",") if p.strip()]
        item_type = args[0] if args else str
        return tuple(_coerce(item, item_type, key) for item in items)

    if not isinstance(raw, str):
        try:
            if annotation is bool or isinstance(raw, annotation):
                return raw
            return annotation(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: cannot use {raw!r} as {annotation}") from exc

    text = raw.strip()
    try:
        if annotation is bool:
            lowered = text.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if annotation is int:
            return int(text)
        if annotation is float:
            return float(text)
        if isinstance(annotation, type) and issubclass(annotation, enum.Enum):
            return annotation(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {text!r} as {getattr(annotation, '__name__', annotation)}") from exc
    return text


def dataclass_from_config(cls, mapping: Mapping[str, object], *, base=None):
    """Build ``cls`` from a mapping of (possibly textual) values.

    Keys missing from ``mapping`` keep the value of ``base`` or the field
    default.
    """
    hints = typing.get_type_hints(cls)
    names = {field.name for field in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - names)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
    values = {key: _coerce(raw, hints[key], key) for key, raw in mapping.items()}
    try:
        if base is not None:
            return dataclasses.replace(base, **values)
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"incomplete {cls.__name__}: {exc}") from exc


def split_prefixed(mapping: Mapping[str, object], prefix: str) -> dict[str, object]:
    return {key[len(prefix):]: value for key, value in mapping.items() if key.startswith(prefix)}
