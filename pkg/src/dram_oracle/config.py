"""Flat ``key = value`` text files for dataclass-backed configs.

Lines starting with ``#`` are comments. List fields are comma-separated.
"""
from __future__ import annotations

import dataclasses
import os
import typing
from typing import Any, TypeVar

T = TypeVar("T")


class ConfigError(ValueError):
    pass


def parse_pairs(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        out[key.strip()] = value.strip()
    return out


def format_value(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def _coerce(raw: str, tp: Any, name: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    try:
        if origin in (list, tuple):
            inner = args[0] if args else str
            items = [x.strip() for x in raw.split(",") if x.strip()]
            vals = [_coerce(x, inner, name) for x in items]
            return tuple(vals) if origin is tuple else vals
        if origin is typing.Union or (origin is not None and type(None) in args):
            if raw == "":
                return None
            inner = next(a for a in args if a is not type(None))
            return _coerce(raw, inner, name)
        if tp is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if tp is int:
            return int(raw, 0)
        if tp is float:
            return float(raw)
        return raw
    except (ValueError, StopIteration):
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None


def from_pairs(cls: type[T], pairs: dict[str, str], strict: bool = True) -> T:
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}  # type: ignore[arg-type]
    unknown = set(pairs) - names
    if strict and unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    kwargs = {k: _coerce(v, hints[k], k) for k, v in pairs.items() if k in names}
    return cls(**kwargs)


def to_text(obj: Any) -> str:
    lines = [f"{f.name} = {format_value(getattr(obj, f.name))}" for f in dataclasses.fields(obj)]
    return "\n".join(lines) + "\n"


def load(cls: type[T], path: str | os.PathLike, strict: bool = True) -> T:
    with open(path) as fh:
        return from_pairs(cls, parse_pairs(fh.read()), strict=strict)


def dump(obj: Any, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(to_text(obj))
