"""INI-style run configuration: defaults, then file, then command-line overrides."""

from __future__ import annotations

import configparser
import typing
from dataclasses import fields, replace
from typing import Mapping, Optional

from .trainer import TOGGLES, TrainConfig

SECTIONS = {
    "train": (
        "epochs", "batch_size", "lr", "momentum", "hidden_dim", "embed_dim", "temperature",
        "infonce_denominator", "selector", "seed", "workers",
    ),
    "augment": ("node_drop_ratio", "edge_drop_ratio", "augment_kind"),
    "sparsity": ("alpha0", "alpha_min", "reactivation_interval"),
    "decanter": (
        "subset_fraction", "epsilon", "min_subset", "warmup_epochs", "cad_target_fraction",
        "diet_pick_epoch", "diet_keep_fraction",
    ),
    "ablation": TOGGLES,
    "probe": ("probe_epochs", "probe_lr", "probe_l2", "probe_balanced"),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    """Bad configuration file or override; maps to exit code 3."""


def _field_types() -> dict:
    hints = typing.get_type_hints(TrainConfig)
    out = {}
    for f in fields(TrainConfig):
        tp = hints[f.name]
        optional = False
        args = typing.get_args(tp)
        if args and type(None) in args:
            optional = True
            tp = next(a for a in args if a is not type(None))
        out[f.name] = (tp, optional)
    return out


def coerce(name: str, value):
    """Convert ``value`` (string or native) to the type of ``TrainConfig.<name>``."""
    types = _field_types()
    if name not in types:
        raise ConfigError(f"unknown config key: {name}")
    tp, optional = types[name]
    if not isinstance(value, str):
        if value is None and optional:
            return None
        if tp is float and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, tp) and not (tp is int and isinstance(value, bool)):
            return value
        raise ConfigError(f"{name}: expected {tp.__name__}, got {value!r}")
    text = value.strip()
    if optional and text.lower() in ("", "none"):
        return None
    try:
        if tp is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        return tp(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot read {text!r} as {tp.__name__}") from None


def read_config_file(path: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values, problems = {}, []
    for section in parser.sections():
        allowed = SECTIONS.get(section)
        if allowed is None:
            problems.append(f"unknown section [{section}]")
            continue
        for key, raw in parser.items(section):
            if key not in allowed:
                problems.append(f"unknown key {section}.{key}")
                continue
            try:
                values[key] = coerce(key, raw)
            except ConfigError as exc:
                problems.append(str(exc))
    if problems:
        raise ConfigError(f"{path}: " + "; ".join(problems))
    return values


def load_config(path: Optional[str] = None, overrides: Optional[Mapping] = None) -> TrainConfig:
    """Build a validated :class:`TrainConfig`.

    ``overrides`` entries set to ``None`` are ignored, so unset CLI flags
    do not clobber file values.
    """
    values = read_config_file(path) if path else {}
    problems = []
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        try:
            values[key] = coerce(key, val)
        except ConfigError as exc:
            problems.append(str(exc))
    if problems:
        raise ConfigError("; ".join(problems))
    cfg = replace(TrainConfig(), **values)
    try:
        return cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
