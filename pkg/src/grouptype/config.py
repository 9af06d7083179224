"""``key = value`` config files mapped onto flat dataclasses."""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import TypeVar

C = TypeVar("C")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(kind: str, raw: str, key: str):
    kind = str(kind).replace("typing.", "")
    if kind in ("int", "<class 'int'>"):
        return int(raw)
    if kind in ("float", "<class 'float'>"):
        return float(raw)
    if kind in ("bool", "<class 'bool'>"):
        low = raw.lower()
        if low in _TRUE | _FALSE:
            return low in _TRUE
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    return raw


def parse_key_values(text: str, cls: type[C], **overrides) -> C:
    """Build ``cls`` from ``key = value`` lines; ``#`` starts a comment.

    Keyword overrides that are not ``None`` win over file values. Unknown
    keys and malformed lines raise ``ValueError``.
    """
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = (s.strip() for s in line.partition("="))
        if not sep or key not in types:
            raise ValueError(f"config line {lineno}: unknown or malformed entry {line!r}")
        values[key] = _convert(types[key], val, key)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**values)
    except TypeError as exc:
        raise ValueError(f"incomplete config: {exc}") from None


def to_key_values(obj) -> str:
    return "".join(f"{f.name} = {getattr(obj, f.name)}\n" for f in dataclasses.fields(obj))


def load_key_values(path, cls: type[C], **overrides) -> C:
    return parse_key_values(Path(path).read_text(encoding="utf-8"), cls, **overrides)
