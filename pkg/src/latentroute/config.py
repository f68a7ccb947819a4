"""Flat TOML-style configuration files with environment overrides.

Documents are `key = value` lines with optional `[section]` headers; values
are quoted strings, integers, floats, or true/false.  A section key `k` under
`[sec]` is addressed as `sec.k`.  Environment variables override file values
using the prefix ``LATENTROUTE_``, with dots replaced by double underscores
and upper-cased: `world.seed` <- ``LATENTROUTE_WORLD__SEED``.
"""

from __future__ import annotations

import os
import re
from pathlib import Path

ENV_PREFIX = "LATENTROUTE_"

_KEY_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")


def _parse_value(raw: str):
    raw = raw.strip()
    if (raw.startswith('"') and raw.endswith('"')) or (raw.startswith("'") and raw.endswith("'")):
        return raw[1:-1]
    low = raw.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config(text: str) -> dict:
    out: dict = {}
    section = ""
    for ln_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            continue
        if "=" not in stripped:
            raise ValueError(f"line {ln_no}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ValueError(f"line {ln_no}: bad key {key!r}")
        full = f"{section}.{key}" if section else key
        out[full] = _parse_value(raw)
    return out


def apply_env_overrides(cfg: dict, environ: dict | None = None) -> dict:
    env = os.environ if environ is None else environ
    out = dict(cfg)
    for name, raw in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower().replace("__", ".")
        out[key] = _parse_value(raw)
    return out


def load_config(path: str | Path, environ: dict | None = None) -> dict:
    return apply_env_overrides(parse_config(Path(path).read_text()), environ)
