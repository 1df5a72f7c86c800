"""INI-style configuration files for training runs.

Two sections, ``[train]`` and ``[model]``, whose keys are the field names of
:class:`~sidefx.training.TrainConfig` and :class:`~sidefx.training.ModelConfig`.
``none`` disables optional stopping criteria; tuples are comma separated.
"""

from __future__ import annotations

import configparser
import dataclasses
from importlib import resources
from pathlib import Path

from .training import ModelConfig, TrainConfig

PRESETS = ("exp_a", "exp_b", "exp_b1", "exp_c")


def _convert(value: str, current):
    value = value.strip()
    if value.lower() == "none":
        return None
    if isinstance(current, tuple):
        return tuple(int(v) for v in value.split(",") if v.strip())
    if isinstance(current, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float) or current is None:
        return float(value)
    return value


def _apply(obj, section: configparser.SectionProxy):
    names = {f.name for f in dataclasses.fields(obj)} - {"model"}
    updates = {}
    for key, value in section.items():
        if key not in names:
            raise ValueError(f"unknown key {key!r} in [{section.name}]")
        updates[key] = _convert(value, getattr(obj, key))
    return dataclasses.replace(obj, **updates)


def parse_config(text: str) -> TrainConfig:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    unknown = set(parser.sections()) - {"train", "model"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    model = _apply(ModelConfig(), parser["model"]) if parser.has_section("model") else ModelConfig()
    train = TrainConfig(model=model)
    if parser.has_section("train"):
        train = _apply(train, parser["train"])
    return train


def load_config(path_or_preset: str | Path) -> TrainConfig:
    """Load a config file, or one of the bundled presets by name (e.g. ``exp_b1``)."""
    if str(path_or_preset) in PRESETS:
        text = resources.files("sidefx.configs").joinpath(f"{path_or_preset}.cfg").read_text()
    else:
        text = Path(path_or_preset).read_text()
    return parse_config(text)


def dump_config(config: TrainConfig) -> str:
    def fmt(v):
        if v is None:
            return "none"
        if isinstance(v, tuple):
            return ",".join(str(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v)

    lines = ["[train]"]
    lines += [f"{f.name} = {fmt(getattr(config, f.name))}" for f in dataclasses.fields(config) if f.name != "model"]
    lines += ["", "[model]"]
    lines += [f"{f.name} = {fmt(getattr(config.model, f.name))}" for f in dataclasses.fields(config.model)]
    return "\n".join(lines) + "\n"
