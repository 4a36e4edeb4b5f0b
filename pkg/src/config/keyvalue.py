"""Plain-text experiment configs: one key=value per line.

    # toy run
    variant=constrained
    hidden=512,512,512
    train.lr=0.0005

Blank lines and lines starting with '#' are ignored. Dotted keys address
fields of nested models; comma-separated values become lists for list- and
tuple-typed fields. Everything else stays a string for pydantic to coerce.
"""

import types
import typing
from pathlib import Path
from typing import Any, TypeVar

from pydantic import BaseModel, ValidationError

from src.errors import ConfigError

M = TypeVar("M", bound=BaseModel)

_SEQUENCE_ORIGINS = (list, tuple, set, frozenset)


def parse_keyvalue(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat {dotted key: raw value}; later duplicates are rejected."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}", key=key)
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}", key=key)
        entries[key] = value.strip()
    return entries


def read_keyvalue(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}", key="config") from e
    return parse_keyvalue(text, source=str(path))


def _unwrap_optional(annotation: Any) -> Any:
    origin = typing.get_origin(annotation)
    if origin is typing.Union or origin is types.UnionType:
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return annotation


def _nested_model(annotation: Any) -> type[BaseModel] | None:
    annotation = _unwrap_optional(annotation)
    if isinstance(annotation, type) and issubclass(annotation, BaseModel):
        return annotation
    return None


def _is_sequence(annotation: Any) -> bool:
    return typing.get_origin(_unwrap_optional(annotation)) in _SEQUENCE_ORIGINS


def structure(model: type[BaseModel], flat: dict[str, Any]) -> dict[str, Any]:
    """Turn dotted keys into nested dicts and split comma lists, guided by the model's fields.

    Unknown keys are passed through untouched so the model's extra="forbid"
    rejects them with their name.
    """
    tree: dict[str, Any] = {}
    nested: dict[str, dict[str, Any]] = {}
    for key, value in flat.items():
        head, dot, rest = key.partition(".")
        field = model.model_fields.get(head)
        if dot:
            sub = _nested_model(field.annotation) if field is not None else None
            if sub is None:
                raise ConfigError(f"{head!r} has no sub-keys (got {key!r})", key=key)
            nested.setdefault(head, {})[rest] = value
            continue
        if field is not None and isinstance(value, str) and _is_sequence(field.annotation):
            value = [v.strip() for v in value.split(",") if v.strip()]
        tree[key] = value
    for head, sub_flat in nested.items():
        sub = _nested_model(model.model_fields[head].annotation)
        base = tree.get(head, {})
        if not isinstance(base, dict):
            raise ConfigError(f"{head!r} given both as a value and with sub-keys", key=head)
        tree[head] = {**base, **structure(sub, sub_flat)}
    return tree


def _merge(base: dict[str, Any], over: dict[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def build_model(model: type[M], *layers: dict[str, Any]) -> M:
    """Validate model from flat layers applied in order (file, then flags).

    Pydantic validation errors come back as ConfigError naming the first
    offending key.
    """
    merged: dict[str, Any] = {}
    for layer in layers:
        merged = _merge(merged, structure(model, layer))
    try:
        return model.model_validate(merged)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"invalid value for {key or model.__name__}: {first['msg']}", key=key) from e
