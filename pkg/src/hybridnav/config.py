"""JSON/TOML configuration files.

A config is a mapping of sections; each section overrides dataclass defaults::

    [search]
    heuristic_weight = 5.0

    [gains]
    k_v = 2.5
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def load_config(path) -> dict:
    """Read a ``.json`` or ``.toml`` file into a dict (None: empty config)."""
    if path is None:
        return {}
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    elif path.suffix.lower() == ".toml":
        data = tomllib.loads(text)
    else:
        raise ValueError(f"unsupported config format {path.suffix!r} (use .json or .toml)")
    if not isinstance(data, dict):
        raise ValueError("config root must be a mapping")
    return data


def build(cls, overrides: dict | None = None, **defaults):
    """Instantiate dataclass ``cls`` from ``defaults`` updated by ``overrides``.

    Unknown keys raise so typos in config files are caught early.
    """
    overrides = dict(overrides or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} option(s): {sorted(unknown)}")
    kw = {**defaults, **overrides}
    return cls(**kw)
