"""INI experiment configuration.

Sections::

    [experiment]      seed, instances, test_seed, timing
    [dataset]         kind = smooth | mixture | file, plus its parameters
    [model]           checkpoint = path, or training settings
    [operator.NAME]   one per task; kind plus ForwardOperator fields
    [solver.NAME]     one per method row; every SolverConfig field is a key

Unknown sections and keys are errors so typos do not silently fall back to
defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from ..solve import SolverConfig


class ConfigError(ValueError):
    pass


EXPERIMENT_KEYS = {"seed": int, "instances": int, "test_seed": int, "timing": bool}
DATASET_KEYS = {
    "kind": str,
    "count": int,
    "size": int,
    "cutoff": float,
    "seed": int,
    "components": int,
    "path": str,
}
MODEL_KEYS = {
    "checkpoint": str,
    "hidden": "ints",
    "time_features": int,
    "output": str,
    "lr": float,
    "steps": int,
    "batch_size": int,
    "seed": int,
    "schedule": str,
}
OPERATOR_KEYS = {
    "kind": str,
    "noise_sigma": float,
    "kernel_size": int,
    "blur_sigma": float,
    "factor": int,
    "mask_fraction": float,
    "mask_seed": int,
}
SOLVER_KEYS = {f.name: f.type for f in dataclasses.fields(SolverConfig)}


@dataclass
class ExperimentConfig:
    experiment: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    operators: dict = field(default_factory=dict)
    solvers: dict = field(default_factory=dict)
    base_dir: Path = Path(".")


def _convert(section: str, key: str, raw: str, kind):
    try:
        if kind in (bool, "bool"):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
        if kind == "ints":
            return tuple(int(v) for v in raw.replace(",", " ").split())
        return raw.strip()
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r}: expected {getattr(kind, '__name__', kind)}") from None


def _read(parser, section: str, schema: dict) -> dict:
    out = {}
    for key, raw in parser.items(section):
        if key not in schema:
            raise ConfigError(f"[{section}] unknown key {key!r}; allowed: {sorted(schema)}")
        out[key] = _convert(section, key, raw, schema[key])
    return out


def parse_config(text: str, base_dir=".") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    cfg = ExperimentConfig(base_dir=Path(base_dir))
    for section in parser.sections():
        if section == "experiment":
            cfg.experiment = _read(parser, section, EXPERIMENT_KEYS)
        elif section == "dataset":
            cfg.dataset = _read(parser, section, DATASET_KEYS)
        elif section == "model":
            cfg.model = _read(parser, section, MODEL_KEYS)
        elif section.startswith("operator."):
            cfg.operators[section.split(".", 1)[1]] = _read(parser, section, OPERATOR_KEYS)
        elif section.startswith("solver."):
            vals = _read(parser, section, SOLVER_KEYS)
            try:
                SolverConfig(**vals)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{section}] {exc}") from None
            cfg.solvers[section.split(".", 1)[1]] = vals
        else:
            raise ConfigError(f"unknown section [{section}]")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)
