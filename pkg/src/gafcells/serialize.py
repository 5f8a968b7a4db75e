"""JSON encoding of report dataclasses, versioned and exactly reversible."""
from __future__ import annotations

import dataclasses
import json
import types
import typing
from enum import Enum
from typing import Any, Union

SCHEMA_VERSION = 1


def to_plain(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        # JSON keys are strings; keep the original type recoverable via the hints
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if hasattr(obj, "tolist"):
        return obj.tolist()
    return obj


def _from_plain(tp: Any, value: Any) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _from_plain(inner[0], value)
    if dataclasses.is_dataclass(tp):
        return from_plain(tp, value)
    if isinstance(tp, type) and issubclass(tp, Enum):
        return tp(value)
    if origin is list:
        return [_from_plain(args[0], v) for v in value]
    if origin is tuple:
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_from_plain(args[0], v) for v in value)
        return tuple(_from_plain(a, v) for a, v in zip(args, value))
    if origin is dict:
        kt, vt = args
        return {_from_plain(kt, k): _from_plain(vt, v) for k, v in value.items()}
    if tp is float:
        return float(value)
    if tp is int:
        return int(value)
    return value


def from_plain(cls: type, data: dict) -> Any:
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _from_plain(hints[f.name], data[f.name])
    return cls(**kwargs)


def dumps(obj: Any, kind: str | None = None, indent: int | None = 2) -> str:
    """Wrap ``obj`` (a dataclass or list of them) in a versioned envelope."""
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind or _kind_name(obj),
        "data": to_plain(obj),
    }
    return json.dumps(payload, indent=indent, allow_nan=False)


def _kind_name(obj: Any) -> str:
    if isinstance(obj, list):
        return f"list[{type(obj[0]).__name__}]" if obj else "list"
    return type(obj).__name__


def loads(text: str, cls: type) -> Any:
    payload = json.loads(text)
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {version!r}")
    data = payload["data"]
    if isinstance(data, list):
        return [from_plain(cls, d) for d in data]
    return from_plain(cls, data)
