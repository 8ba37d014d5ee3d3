"""Flat key-value config files.

Format: one `key = value` per line, `#` starts a comment. Values are parsed
as bool/int/float when they look like one, comma-separated lists become
lists, everything else stays a string. The environment variable
SWITCHTRACK_SEED overrides the master seed.
"""

from __future__ import annotations

import os

from ..errors import ConfigError


def _parse_scalar(raw: str):
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if "," in raw:
            out[key] = [_parse_scalar(p.strip()) for p in raw.split(",") if p.strip()]
        else:
            out[key] = _parse_scalar(raw)
    return out


def load_config(path) -> dict:
    with open(path) as f:
        cfg = parse_config_text(f.read())
    env_seed = os.environ.get("SWITCHTRACK_SEED")
    if env_seed is not None:
        cfg["master_seed"] = int(env_seed)
    return cfg


def as_list(value) -> list:
    if isinstance(value, list):
        return value
    return [value]
