"""Run configuration: YAML file with nested blocks, plus CLI-flag overrides.

A run config has four blocks:

    model:    name ("ising" | "xxz"), h or delta, n_strings
    numerics: grid_n, n_steps, newton_tol, max_iter, bootstrap_substeps
    task:     free-form, interpreted by the subcommand
    output:   directory, basename, formats

Every emitted artifact embeds the fully resolved config and a schema version
so results stay reproducible and self-describing.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .grids import RapidityGrid, make_grid
from .models import IsingModel, XXZModel

SCHEMA_VERSION = 1

_DEFAULTS = {
    "model": {"name": "ising", "h": 1.0, "delta": 2.0, "n_strings": 10},
    "numerics": {
        "grid_n": 128,
        "n_steps": 400,
        "newton_tol": 1e-11,
        "max_iter": 80,
        "bootstrap_substeps": 100,
    },
    "task": {},
    "output": {"directory": ".", "basename": "run", "formats": ["json"]},
}


@dataclass
class RunConfig:
    """Validated, fully resolved configuration for one CLI invocation."""

    model: dict
    numerics: dict
    task: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model": copy.deepcopy(self.model),
            "numerics": copy.deepcopy(self.numerics),
            "task": copy.deepcopy(self.task),
            "output": copy.deepcopy(self.output),
        }

    def build_model(self):
        name = self.model["name"]
        if name == "ising":
            return IsingModel(float(self.model["h"]))
        return XXZModel(float(self.model["delta"]),
                        n_strings=int(self.model["n_strings"]))

    def build_grid(self, model=None) -> RapidityGrid:
        if model is None:
            model = self.build_model()
        return make_grid(int(self.numerics["grid_n"]), model.domain)


def load_config_file(path) -> dict:
    """Parse a YAML config file into a plain dict (may be partial)."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    return data


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def apply_overrides(data: dict, overrides: dict) -> dict:
    """Overlay dotted-key overrides ('numerics.grid_n' -> value) onto a config."""
    out = copy.deepcopy(data)
    for dotted, value in overrides.items():
        keys = dotted.split(".")
        node = out
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override {dotted}: {k} is not a block")
        node[keys[-1]] = value
    return out


def _require_number(block: dict, block_name: str, key: str, *, positive=False,
                    integer=False, minimum=None):
    if key not in block:
        raise ConfigError(f"missing {block_name}.{key}")
    val = block[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{block_name}.{key} must be a number, got {val!r}")
    if integer:
        if float(val) != int(val):
            raise ConfigError(f"{block_name}.{key} must be an integer, got {val!r}")
        block[key] = int(val)
    else:
        block[key] = float(val)
    if positive and block[key] <= 0:
        raise ConfigError(f"{block_name}.{key} must be > 0, got {val!r}")
    if minimum is not None and block[key] < minimum:
        raise ConfigError(f"{block_name}.{key} must be >= {minimum}, got {val!r}")


def resolve_config(data: dict, overrides: dict | None = None) -> RunConfig:
    """Merge defaults <- file <- overrides and validate the result.

    Raises ConfigError on any structural or range violation; nothing is
    solved before validation passes.
    """
    merged = _merge(_DEFAULTS, data or {})
    if overrides:
        merged = apply_overrides(merged, overrides)

    unknown = set(merged) - {"model", "numerics", "task", "output",
                             "schema_version"}
    if unknown:
        raise ConfigError(f"unknown config blocks: {sorted(unknown)}")
    for name in ("model", "numerics", "task", "output"):
        if not isinstance(merged[name], dict):
            raise ConfigError(f"config block '{name}' must be a mapping")

    model = merged["model"]
    if model.get("name") not in ("ising", "xxz"):
        raise ConfigError(
            f"model.name must be 'ising' or 'xxz', got {model.get('name')!r}")
    if model["name"] == "ising":
        _require_number(model, "model", "h")
    else:
        _require_number(model, "model", "delta")
        _require_number(model, "model", "n_strings", integer=True, minimum=1)
        if abs(model["delta"]) <= 1.0:
            raise ConfigError(
                f"model.delta must satisfy |delta| > 1, got {model['delta']}")

    num = merged["numerics"]
    _require_number(num, "numerics", "grid_n", integer=True, minimum=8)
    _require_number(num, "numerics", "n_steps", integer=True, minimum=1)
    _require_number(num, "numerics", "newton_tol", positive=True)
    _require_number(num, "numerics", "max_iter", integer=True, minimum=1)
    _require_number(num, "numerics", "bootstrap_substeps", integer=True, minimum=1)

    out = merged["output"]
    formats = out.get("formats", ["json"])
    if isinstance(formats, str):
        formats = [formats]
    if not formats or not all(f in ("json", "csv") for f in formats):
        raise ConfigError(f"output.formats entries must be json/csv, got {formats}")
    out["formats"] = list(formats)
    out["directory"] = str(out.get("directory", "."))
    out["basename"] = str(out.get("basename", "run"))

    return RunConfig(model=model, numerics=num, task=merged["task"], output=out)
