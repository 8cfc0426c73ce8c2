"""Scenario configuration: JSON schema, loading with defaults, and object construction."""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path
from typing import Any, Union

import jsonschema

from .exceptions import ConfigError, InvalidStateError
from .lindblad import EvolutionSpec
from .register import (MAX_BATH_SPINS, ClassicalMixture, CouplingGraph, ExplicitPolarizations,
                       SpinSystem, Thermal, UniformPolarization, coupling_ata, coupling_explicit,
                       coupling_nn, coupling_power_law, prepare_initial_state,
                       thermal_polarization)

_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_pos = {"type": "number", "exclusiveMinimum": 0}
_pol = {"type": "number", "minimum": -0.5, "maximum": 0.5}


def _obj(props: dict, required=(), **kw) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False, **kw}


def _variant(key: str, name: str, params: dict) -> dict:
    return {"if": {"properties": {key: {"const": name}}, "required": [key]},
            "then": {"properties": {"params": params}}}


COUPLING_SCHEMA = {
    **_obj({"type": {"enum": ["ata", "nn", "power_law", "explicit"]}, "params": {"type": "object"}},
           ["type", "params"]),
    "allOf": [
        _variant("type", "ata", _obj({"xi": _num}, ["xi"])),
        _variant("type", "nn", _obj({"xi_bath": _num, "xi_sb": _num}, ["xi_bath", "xi_sb"])),
        _variant("type", "power_law", _obj({"xi0": _num, "delta": _num}, ["xi0", "delta"])),
        _variant("type", "explicit", _obj({"xi": {"type": "array", "items": {"type": "array",
                                                                             "items": _num}}},
                                          ["xi"])),
    ],
}

BATH_SCHEMA = {
    **_obj({"kind": {"enum": ["thermal", "uniform", "explicit", "mixture"]},
            "params": {"type": "object"}}, ["kind", "params"]),
    "allOf": [
        _variant("kind", "thermal", _obj({"T": {"oneOf": [_pos, {"const": "inf"}]}}, ["T"])),
        _variant("kind", "uniform", _obj({"z": _pol}, ["z"])),
        _variant("kind", "explicit", _obj({"z": {"type": "array", "items": _pol, "minItems": 1}},
                                          ["z"])),
        _variant("kind", "mixture", _obj({"p": {"type": "number", "minimum": 0, "maximum": 1}},
                                         ["p"])),
    ],
}

ENGINE_NAMES = ["exact", "reduced", "markovian", "coupled"]

SCHEMA: dict = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "dephased-bath scenario",
    **_obj({
        "name": {"type": "string"},
        "model": _obj({
            "n_bath": {"type": "integer", "minimum": 1, "maximum": MAX_BATH_SPINS},
            "h0": {**_num, "default": 1.0},
            "coupling": COUPLING_SCHEMA,
        }, ["n_bath", "coupling"]),
        "dephasing": _obj({"alpha": _nonneg, "system_alpha": {**_nonneg, "default": 0.0}},
                          ["alpha"]),
        "initial": _obj({
            "bath": BATH_SCHEMA,
            "system": _obj({"z": _pol, "x": {**_pol, "default": 0.0}}, ["z"]),
        }, ["bath", "system"]),
        "time": _obj({
            "t_max": _pos,
            "dt_out": _pos,
            "integrator": {**_obj({
                "method": {"enum": ["rk4", "adaptive", "expm"]},
                "dt": _pos, "rtol": _pos, "atol": _pos,
            }, ["method"]), "default": {"method": "rk4"}},
        }, ["t_max", "dt_out"]),
        "engines": {"type": "array", "minItems": 1, "items": {"oneOf": [
            {"enum": ENGINE_NAMES},
            _obj({"trajectories": _obj({"n_traj": {"type": "integer", "minimum": 2},
                                        "seed": {"type": "integer", "minimum": 0}},
                                       ["n_traj", "seed"])}, ["trajectories"]),
        ]}},
        "outputs": {**_obj({"csv_dir": {"type": "string"}, "report_path": {"type": "string"},
                            "figures": {"type": "boolean", "default": False}}),
                    "default": {}},
    }, ["model", "dephasing", "initial", "time", "engines"]),
}


def _fill_defaults(cfg: dict) -> dict:
    cfg = copy.deepcopy(cfg)
    cfg["model"].setdefault("h0", 1.0)
    cfg["dephasing"].setdefault("system_alpha", 0.0)
    cfg["initial"]["system"].setdefault("x", 0.0)
    cfg["time"].setdefault("integrator", {"method": "rk4"})
    out = cfg.setdefault("outputs", {})
    out.setdefault("csv_dir", ".")
    out.setdefault("report_path", str(Path(out["csv_dir"]) / "report.json"))
    out.setdefault("figures", False)
    return cfg


def validate_config(cfg: Any) -> dict:
    """Validate against the schema and the physical constraints; return the normalized config."""
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    cfg = _fill_defaults(cfg)
    try:
        sys = build_system(cfg)
        build_initial_state(cfg, sys)
        build_evolution_spec(cfg)
    except (ValueError, InvalidStateError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    return cfg


def load_config(path: Union[str, Path]) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return validate_config(raw)


def dump_config(cfg: dict) -> str:
    """Canonical serialization; loading its output yields the same text again."""
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


def build_coupling(cfg: dict) -> CouplingGraph:
    n = cfg["model"]["n_bath"]
    c = cfg["model"]["coupling"]
    p = c["params"]
    if c["type"] == "ata":
        return coupling_ata(n, p["xi"])
    if c["type"] == "nn":
        return coupling_nn(n, p["xi_bath"], p["xi_sb"])
    if c["type"] == "power_law":
        return coupling_power_law(n, p["xi0"], p["delta"])
    g = coupling_explicit(p["xi"])
    if g.n_bath != n:
        raise ValueError(f"explicit coupling has {g.n_spins} sites, expected {n + 1}")
    return g


def build_system(cfg: dict) -> SpinSystem:
    d = cfg["dephasing"]
    return SpinSystem.dephased(build_coupling(cfg), d["alpha"], d.get("system_alpha", 0.0),
                               cfg["model"].get("h0", 1.0))


def build_bath(cfg: dict):
    b = cfg["initial"]["bath"]
    p = b["params"]
    if b["kind"] == "thermal":
        return Thermal(math.inf if p["T"] == "inf" else p["T"])
    if b["kind"] == "uniform":
        return UniformPolarization(p["z"])
    if b["kind"] == "explicit":
        return ExplicitPolarizations(tuple(p["z"]))
    return ClassicalMixture(p["p"])


def bath_polarizations(cfg: dict, sys: SpinSystem) -> list[float]:
    bath = build_bath(cfg)
    N = sys.n_bath
    if isinstance(bath, Thermal):
        return [thermal_polarization(sys.h0, bath.T)] * N
    if isinstance(bath, UniformPolarization):
        return [bath.z] * N
    if isinstance(bath, ExplicitPolarizations):
        return list(bath.z)
    return [bath.p - 0.5] * N


def build_initial_state(cfg: dict, sys: SpinSystem):
    s = cfg["initial"]["system"]
    return prepare_initial_state(sys, build_bath(cfg), s["z"], s.get("x", 0.0))


def build_evolution_spec(cfg: dict) -> EvolutionSpec:
    t = cfg["time"]
    integ = t.get("integrator", {"method": "rk4"})
    kw = {k: integ[k] for k in ("dt", "rtol", "atol") if k in integ}
    return EvolutionSpec(t["t_max"], t["dt_out"], integ["method"], **kw)
