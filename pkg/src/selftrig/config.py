"""Run configuration: JSON loading, validation and defaults."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .abstraction import AbstractionParams, contained_in
from .geometry import Region
from .plant import PlantModel, make_plant
from .synthesis import TIE_BREAK_POLICIES


class ConfigError(ValueError):
    pass


_BOX = {
    "type": "object",
    "required": ["lo", "hi"],
    "properties": {
        "lo": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "hi": {"type": "array", "items": {"type": "number"}, "minItems": 1},
    },
    "additionalProperties": False,
}
_REGION = {
    "type": "object",
    "required": ["allowed"],
    "properties": {
        "allowed": {"type": "array", "items": _BOX, "minItems": 1},
        "obstacles": {"type": "array", "items": _BOX},
    },
    "additionalProperties": False,
}
SCHEMA = {
    "type": "object",
    "required": ["plant", "sets", "abstraction"],
    "properties": {
        "plant": {
            "type": "object",
            "required": ["name", "lipschitz"],
            "properties": {
                "name": {"enum": ["vehicle", "scalar_linear", "linear"]},
                "params": {"type": "object"},
                "lipschitz": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "sets": {
            "type": "object",
            "required": ["safe", "initial", "target", "inputs"],
            "properties": {k: _REGION for k in ("safe", "initial", "target", "inputs")},
            "additionalProperties": False,
        },
        "abstraction": {
            "type": "object",
            "required": ["eta_x", "eta_u", "eps", "m_max"],
            "properties": {
                "eta_x": {"type": "number", "exclusiveMinimum": 0},
                "eta_u": {"type": "number", "exclusiveMinimum": 0},
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "m_max": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "synthesis": {
            "type": "object",
            "properties": {
                "tie_break": {"enum": list(TIE_BREAK_POLICIES)},
                "cover_delta": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "simulation": {
            "type": "object",
            "properties": {
                "x0": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                "sweep": {"type": "boolean"},
                "step_cap": {"type": ["integer", "null"], "minimum": 1},
                "baseline": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "verification": {
            "type": "object",
            "properties": {
                "samples": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

DEFAULTS = {
    "synthesis": {"tie_break": "max_horizon", "cover_delta": None},
    "simulation": {"x0": [], "sweep": False, "step_cap": None, "baseline": False},
    "verification": {"samples": 1000, "seed": 0},
    "output": {"dir": "out"},
}


@dataclass
class RunConfig:
    raw: dict
    plant: PlantModel
    safe: Region
    initial: Region
    target: Region
    inputs: Region
    abstraction: AbstractionParams
    tie_break: str
    cover_delta: float
    x0: list[list[float]]
    sweep: bool
    step_cap: int | None
    baseline: bool
    samples: int
    seed: int
    out_dir: Path
    source: Path | None = field(default=None)

    def problem_hash(self) -> str:
        """Digest of everything that determines the synthesized controller."""
        key = {k: self.raw[k] for k in ("plant", "sets", "abstraction")}
        key["tie_break"] = self.tie_break
        blob = json.dumps(key, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def echo(self) -> dict:
        """Effective configuration with defaults filled in."""
        return self.raw


def _path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def parse_config(data: dict, source: Path | None = None) -> RunConfig:
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as err:
        hint = ""
        if "lipschitz" in err.message:
            hint = " (selftrig.plant.estimate_lipschitz gives a sampled lower estimate)"
        raise ConfigError(f"config error at {_path(err)}: {err.message}{hint}") from None
    raw = json.loads(json.dumps(data))
    for block, vals in DEFAULTS.items():
        raw.setdefault(block, {})
        for k, v in vals.items():
            raw[block].setdefault(k, v)
    try:
        params = AbstractionParams(**raw["abstraction"])
    except ValueError as err:
        raise ConfigError(f"config error at abstraction: {err}") from None
    p = raw["plant"]
    try:
        plant = make_plant(p["name"], p.get("params", {}), p["lipschitz"])
        regions = {k: Region.from_dict(v) for k, v in raw["sets"].items()}
    except (ValueError, TypeError, KeyError) as err:
        raise ConfigError(f"config error: {err}") from None
    for k in ("safe", "initial", "target"):
        if regions[k].n != plant.state_dim:
            raise ConfigError(f"config error at sets/{k}: dimension {regions[k].n} != state dimension {plant.state_dim}")
    if regions["inputs"].n != plant.input_dim:
        raise ConfigError("config error at sets/inputs: dimension does not match the plant input")
    if not contained_in(regions["target"], regions["safe"]):
        raise ConfigError("config error at sets/target: not contained in the safety set")
    if not contained_in(regions["initial"], regions["safe"]):
        raise ConfigError("config error at sets/initial: not contained in the safety set")
    delta = raw["synthesis"]["cover_delta"]
    if delta is None:
        delta = params.eps / 4
        raw["synthesis"]["cover_delta"] = delta
    for x in raw["simulation"]["x0"]:
        if len(x) != plant.state_dim:
            raise ConfigError(f"config error at simulation/x0: {x} has the wrong dimension")
    return RunConfig(
        raw=raw,
        plant=plant,
        safe=regions["safe"],
        initial=regions["initial"],
        target=regions["target"],
        inputs=regions["inputs"],
        abstraction=params,
        tie_break=raw["synthesis"]["tie_break"],
        cover_delta=float(delta),
        x0=raw["simulation"]["x0"],
        sweep=raw["simulation"]["sweep"],
        step_cap=raw["simulation"]["step_cap"],
        baseline=raw["simulation"]["baseline"],
        samples=raw["verification"]["samples"],
        seed=raw["verification"]["seed"],
        out_dir=Path(raw["output"]["dir"]),
        source=source,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: not valid JSON ({err})") from None
    return parse_config(data, path)


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package (``vehicle``, ``line1d``, ...)."""
    ref = resources.files("selftrig") / "configs" / f"{name}.json"
    return Path(str(ref))
