"""Run configuration: JSON schema, defaults and cross-field validation."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from egohpo.acquisition import SearchBudget
from egohpo.driver import BudgetPlan, DriverConfig
from egohpo.errors import ConfigError, DomainError
from egohpo.gp import GpConfig
from egohpo.search_space import SearchSpace

SCHEMA_VERSION = 1

_bounds = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
           "minItems": 2, "maxItems": 2}

RUN_CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "egohpo run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "name", "direction", "budget", "parameters", "blackbox"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "direction": {"enum": ["minimize", "maximize"]},
        "seed": {"type": "integer", "minimum": 0},
        "budget": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n_init", "n_opt"],
            "properties": {
                "n_init": {"type": "integer", "minimum": 1},
                "n_opt": {"type": "integer", "minimum": 1},
                "q": {"type": "integer", "minimum": 1},
                "init_parallelism": {"type": "integer", "minimum": 1},
            },
        },
        "parameters": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "lower", "upper"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "lower": {"type": "number"},
                    "upper": {"type": "number"},
                    "warp": {"enum": ["identity", "log10", "logit"]},
                    "integer": {"type": "boolean"},
                },
            },
        },
        "gp": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "restarts": {"type": "integer", "minimum": 1},
                "theta_bounds": _bounds,
                "nugget_bounds": _bounds,
            },
        },
        "acquisition": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "type": {"enum": ["ei", "qei"]},
                "mc_samples": {"type": "integer", "minimum": 1000},
                "multistarts": {"type": "integer", "minimum": 1},
                "local_steps": {"type": "integer", "minimum": 0},
            },
        },
        "blackbox": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["builtin", "command"]},
                "builtin": {"type": "string"},
                "command": {
                    "oneOf": [
                        {"type": "string", "minLength": 1},
                        {"type": "array", "items": {"type": "string"}, "minItems": 1},
                    ]
                },
                "timeout_s": {"type": "number", "exclusiveMinimum": 0},
                "noise_sd": {"type": "number", "minimum": 0},
                "noise_seed": {"type": "integer", "minimum": 0},
                "latency_s": {"type": "number", "minimum": 0},
            },
            "allOf": [
                {"if": {"properties": {"kind": {"const": "builtin"}}}, "then": {"required": ["builtin"]}},
                {"if": {"properties": {"kind": {"const": "command"}}}, "then": {"required": ["command"]}},
            ],
        },
    },
}

DEFAULTS = {
    "seed": 0,
    "budget": {"q": 1, "init_parallelism": 8},
    "gp": {"restarts": 5, "theta_bounds": [1e-3, 1e3], "nugget_bounds": [1e-8, 1.0]},
    "acquisition": {"type": "qei", "mc_samples": 4096, "multistarts": 64, "local_steps": 100},
}


@dataclass
class RunConfig:
    data: dict
    base_dir: Path | None = None

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def direction(self) -> str:
        return self.data["direction"]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def space(self) -> SearchSpace:
        return SearchSpace.from_dicts(self.data["parameters"])

    @property
    def plan(self) -> BudgetPlan:
        b = self.data["budget"]
        return BudgetPlan(n_init=b["n_init"], n_opt=b["n_opt"], q=b["q"])

    @property
    def gp(self) -> GpConfig:
        g = self.data["gp"]
        return GpConfig(restarts=g["restarts"], theta_bounds=tuple(g["theta_bounds"]),
                        nugget_bounds=tuple(g["nugget_bounds"]))

    def driver_config(self, parallel=None, on_batch=None) -> DriverConfig:
        a = self.data["acquisition"]
        return DriverConfig(
            seed=self.seed, direction=self.direction, gp=self.gp, acquisition=a["type"],
            mc_samples=a["mc_samples"],
            search=SearchBudget(multistarts=a["multistarts"], local_steps=a["local_steps"]),
            init_parallelism=self.data["budget"]["init_parallelism"],
            parallel=parallel, on_batch=on_batch,
        )

    def digest(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _with_defaults(data: dict) -> dict:
    out = copy.deepcopy(data)
    out.setdefault("seed", DEFAULTS["seed"])
    for section in ("budget", "gp", "acquisition"):
        merged = dict(DEFAULTS[section])
        merged.update(out.get(section, {}))
        out[section] = merged
    out["parameters"] = [
        {"warp": "identity", "integer": False, **p} for p in out["parameters"]
    ]
    return out


def parse_config(data: dict, base_dir=None, seed: int | None = None) -> RunConfig:
    """Validate ``data`` against the schema and the cross-field rules."""
    try:
        jsonschema.validate(data, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    full = _with_defaults(data)
    if seed is not None:
        full["seed"] = int(seed)
    cfg = RunConfig(full, Path(base_dir) if base_dir else None)
    try:
        space = cfg.space
        cfg.plan.validate(space.dim)
        cfg.gp
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path, seed: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(data, base_dir=path.resolve().parent, seed=seed)
