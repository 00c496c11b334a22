"""Run configuration: strict JSON schema, dotted overrides, typed accessors."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .hilbert import SpaceTruncation
from .params import SPIN_MODELS, ParameterError, SystemParams


class ConfigError(ValueError):
    """Invalid or incomplete configuration (exit code 2)."""


_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_num = {"type": "number"}

_ENSEMBLE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["N_s", "Delta"],
    "properties": {"N_s": {"type": "number", "minimum": 1}, "Delta": _num, "g_m": {"type": ["number", "null"], "minimum": 0}},
}

_STATE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["transmon", "photons", "k"],
    "properties": {
        "transmon": {"enum": [0, 1]},
        "photons": {"type": "integer", "minimum": 0},
        "k": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "mode": {"enum": ["dimensionless", "SI"]},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "required": ["g_c", "g_m", "ensembles"],
            "properties": {
                "g_c": _pos,
                "g_m": _nonneg,
                "delta": _num,
                "omega_c": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "kappa_c": _nonneg,
                "gamma_JJ": _nonneg,
                "gamma_spin": _nonneg,
                "spin_model": {"enum": list(SPIN_MODELS)},
                "ensembles": {"type": "array", "minItems": 1, "items": _ENSEMBLE},
            },
        },
        "truncation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_max": {"type": "integer", "minimum": 1},
                "k_max": {"type": "integer", "minimum": 1},
                "total_excitation_max": {"type": ["integer", "null"], "minimum": 1},
                "dimension_cap": {"type": "integer", "minimum": 1},
            },
        },
        "estimate": {
            "type": "object",
            "additionalProperties": False,
            "required": ["omega_c", "V_c", "density_cm3", "thickness", "width", "length", "temperature"],
            "properties": {
                "omega_c": _pos,
                "g_c": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "V_c": _pos,
                "density_cm3": _pos,
                "thickness": _pos,
                "width": _pos,
                "length": _pos,
                "temperature": _pos,
                "kappa_c": _nonneg,
                "gamma_JJ": _nonneg,
                "gamma_spin": _nonneg,
                "delta": _num,
                "Delta": _num,
                "hierarchy_factor": _pos,
                "quoted_g_m": _pos,
            },
        },
        "spectrum": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "embedded": {"type": "boolean"},
                "vectors": {"type": "boolean"},
                "dump_basis": {"type": "boolean"},
                "dump_operator": {"type": "boolean"},
            },
        },
        "dynamics": {
            "type": "object",
            "additionalProperties": False,
            "required": ["initial"],
            "properties": {
                "kind": {"enum": ["unitary", "lindblad"]},
                "initial": _STATE,
                "t_grid": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
                "t_end": _nonneg,
                "n_points": {"type": "integer", "minimum": 1},
                "populations": {"type": "array", "items": _STATE},
                "fit": {"type": ["string", "null"]},
            },
        },
        "gate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "target": {"enum": ["sqrt_swap", "swap", "identity"]},
                "ensembles": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
                "model": {"enum": ["full", "effective"]},
                "dissipative": {"type": "boolean"},
                "calibrated": {"type": "boolean"},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["command", "grid"],
            "properties": {
                "command": {"enum": ["regime", "embedded", "gate"]},
                "grid": {
                    "type": "object",
                    "minProperties": 1,
                    "additionalProperties": {"type": "array", "minItems": 1},
                },
            },
        },
        "output_dir": {"type": "string"},
        "seed": {"type": "integer"},
    },
}

MAX_SWEEP_POINTS = 100_000


@dataclass
class RunConfig:
    raw: dict
    mode: str = "dimensionless"
    output_dir: str = "out"
    seed: int = 0
    sections: dict = field(default_factory=dict)

    def params(self) -> SystemParams:
        if "params" not in self.raw:
            raise ConfigError("missing 'params' section")
        try:
            return SystemParams.from_dict(self.raw["params"])
        except (ParameterError, TypeError) as exc:
            raise ConfigError(f"params: {exc}") from exc

    def truncation(self) -> SpaceTruncation:
        t = dict(self.raw.get("truncation", {}))
        t.pop("dimension_cap", None)
        try:
            return SpaceTruncation(**t)
        except ValueError as exc:
            raise ConfigError(f"truncation: {exc}") from exc

    def dimension_cap(self) -> int:
        return int(self.raw.get("truncation", {}).get("dimension_cap", 20_000))

    def section(self, name: str) -> dict:
        if name not in self.raw:
            raise ConfigError(f"missing '{name}' section")
        return self.raw[name]

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_path(doc, path: str, value):
    """Assign ``value`` at a dotted path; integer segments index lists."""
    keys = path.split(".")
    node = doc
    for i, key in enumerate(keys):
        last = i == len(keys) - 1
        if isinstance(node, list):
            try:
                idx = int(key)
                node[idx]
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"bad list index {key!r} in {path!r}") from exc
            if last:
                node[idx] = value
            else:
                node = node[idx]
        else:
            if last:
                node[key] = value
            else:
                node = node.setdefault(key, {})


def apply_overrides(doc: dict, overrides) -> dict:
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        set_path(doc, key.strip(), _parse_value(val.strip()))
    return doc


def validate(doc: dict) -> RunConfig:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from exc
    return RunConfig(
        raw=doc,
        mode=doc.get("mode", "dimensionless"),
        output_dir=doc.get("output_dir", "out"),
        seed=int(doc.get("seed", 0)),
    )


def load_config(path, overrides=()) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    return validate(apply_overrides(doc, overrides))
