"""Flat ``key = value`` experiment configs with sections [profile], [grid], [stitch], [run].

Every key is validated: unknown sections or keys are errors that name the
offending ``section.key``, so a typo never silently falls back to a default.

Example::

    [profile]
    kind = gaussian_mixture
    weights = 0.3, 0.7
    means = -1, 1
    variances = 0.25, 0.25

    [grid]
    half_width = 16
    points = 4096

    [stitch]
    c = 0.5

    [run]
    k_max = 10
"""

from __future__ import annotations

import configparser
import math

from .errors import CltlabError, ConfigError
from .experiment import ExperimentConfig
from .grid import build_grid
from .profiles import make_profile

_PROFILE_PARAMS = {
    "gaussian": {"t": float},
    "uniform": {"a": float},
    "laplace_smoothed": {"b": float, "smoothing": float},
    "gaussian_mixture": {"weights": "floats", "means": "floats", "variances": "floats"},
    "gF_quartic": {"s": float},
}

_SCHEMA = {
    "profile": {"kind"},
    "grid": {"half_width", "points"},
    "stitch": {"c"},
    "run": {"k_max", "k_min", "mollify_t", "local_radii"},
}

_REQUIRED = ("profile.kind", "grid.half_width", "grid.points", "run.k_max")


def _floats(text: str, key: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"{key}: malformed number list {text!r}") from None


def _number(text: str, key: str, kind=float):
    try:
        value = kind(text)
    except ValueError:
        raise ConfigError(f"{key}: malformed number {text!r}") from None
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite, got {text!r}")
    return value


def read_config_text(text: str, overrides=()) -> dict:
    """Parse config text plus ``section.key=value`` overrides into a flat dict."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    flat = {f"{sec}.{key}": val.strip() for sec in parser.sections() for key, val in parser[sec].items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        key, val = item.split("=", 1)
        key = key.strip()
        if "." not in key:
            raise ConfigError(f"override key {key!r} must be section.key")
        flat[key] = val.strip()
    return flat


def _validate_keys(flat: dict) -> None:
    kind = flat.get("profile.kind")
    profile_keys = set(_PROFILE_PARAMS.get(kind, {}))
    for key in flat:
        section, _, name = key.partition(".")
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section in key {key!r}")
        allowed = _SCHEMA[section] | (profile_keys if section == "profile" else set())
        if name not in allowed:
            raise ConfigError(f"unknown config key {key!r}")
    for key in _REQUIRED:
        if key not in flat:
            raise ConfigError(f"missing required key {key!r}")
    if kind not in _PROFILE_PARAMS:
        raise ConfigError(f"profile.kind: unknown profile {kind!r}; known: {sorted(_PROFILE_PARAMS)}")


def build_config(flat: dict) -> ExperimentConfig:
    _validate_keys(flat)
    kind = flat["profile.kind"]
    params = {}
    for name, conv in _PROFILE_PARAMS[kind].items():
        key = f"profile.{name}"
        if key in flat:
            params[name] = _floats(flat[key], key) if conv == "floats" else _number(flat[key], key)
    try:
        profile = make_profile(kind, **params)
        grid = build_grid(_number(flat["grid.half_width"], "grid.half_width"),
                          _number(flat["grid.points"], "grid.points", int))
        kwargs = dict(profile=profile, grid=grid,
                      k_max=_number(flat["run.k_max"], "run.k_max", int))
        if "run.k_min" in flat:
            kwargs["k_min"] = _number(flat["run.k_min"], "run.k_min", int)
        if "run.mollify_t" in flat and flat["run.mollify_t"].lower() not in ("", "none"):
            kwargs["mollify_t"] = _number(flat["run.mollify_t"], "run.mollify_t")
        if "run.local_radii" in flat:
            kwargs["local_radii"] = _floats(flat["run.local_radii"], "run.local_radii")
        if "stitch.c" in flat:
            kwargs["stitch_c"] = _number(flat["stitch.c"], "stitch.c")
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except CltlabError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(path, overrides=()) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return build_config(read_config_text(text, overrides))
