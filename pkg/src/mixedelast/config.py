"""Flat ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored.  Values are parsed as bool
(true/false/yes/no/on/off), int, float, or a comma separated list of
those; anything else stays a string.
"""
from __future__ import annotations

from pathlib import Path

KNOWN_KEYS = {
    "experiment", "elements", "mesh.m", "mesh.files", "mu", "lambda", "load", "load.direction",
    "continuation.steps", "newton.tol_abs", "newton.tol_rel", "newton.max_iter",
    "newton.line_search", "newton.max_halvings", "newton.pivot_tol", "problem", "dim",
    "geometry.width", "geometry.height", "geometry.load_start", "geometry.load_end",
    "geometry.thickness", "infsup.constants", "infsup.normalization", "infsup.boundary",
    "out",
}


class ConfigError(ValueError):
    pass


def parse_value(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if "," in t:
        return [parse_value(p) for p in t.split(",") if p.strip()]
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def parse_config(text: str, strict: bool = True) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if strict and key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = parse_value(value)
    return out


def load_config(path, strict: bool = True) -> dict:
    return parse_config(Path(path).read_text(), strict)
