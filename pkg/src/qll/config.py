"""Scenario files: JSON schema, validation, and builders for core objects."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import algebra, ffunc, interactions, lattice
from .errors import ConfigError

_NUM = {"type": "number"}
_INTERACTION = {
    "type": "object",
    "properties": {
        "model": {"enum": ["ising", "tfim", "xxz", "longrange_ising"]},
        "terms": {"type": "array"},
        "profile": {"type": "object"},
    },
    "anyOf": [{"required": ["model"]}, {"required": ["terms"]}],
}
_PAULI_OP = {
    "type": "object",
    "required": ["op"],
    "properties": {"op": {"type": "array", "minItems": 1, "items": {
        "type": "object", "required": ["string"],
        "properties": {"coeff": {"type": ["array", "number"]}, "string": {"type": "object"}},
    }}},
}
_FAMILY = {
    "oneOf": [
        {"type": "object", "required": ["pauli"],
         "properties": {"pauli": {"enum": ["X", "Y", "Z"]},
                        "sites": {"oneOf": [{"const": "all"}, {"type": "array", "items": {"type": "integer"}}]}}},
        {"type": "array", "items": _PAULI_OP},
    ]
}
_GRID = {
    "oneOf": [
        {"type": "array", "items": _NUM, "minItems": 1},
        {"type": "object", "required": ["stop"],
         "properties": {"start": _NUM, "stop": _NUM, "step": _NUM, "points": {"type": "integer", "minimum": 1}}},
    ]
}

SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "qll scenario",
    "type": "object",
    "required": ["schema", "lattice"],
    "properties": {
        "schema": {"const": 1},
        "lattice": {
            "type": "object",
            "required": ["kind", "dims"],
            "properties": {
                "kind": {"enum": ["chain", "ring", "grid"]},
                "dims": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "periodic": {"type": "boolean"},
            },
        },
        "ffunction": {
            "type": "object",
            "properties": {"family": {"enum": ["power", "weighted", "logweighted"]},
                           "nu": _NUM, "eps": _NUM, "a": _NUM, "theta": _NUM},
        },
        "interaction": _INTERACTION,
        "compare": _INTERACTION,
        "path": {"type": "object", "required": ["from", "to"],
                 "properties": {"from": _INTERACTION, "to": _INTERACTION}},
        "observables": {
            "type": "object",
            "properties": {
                "A": _FAMILY, "B": _FAMILY,
                "pairs": {"type": "array", "items": {"type": "array", "items": _PAULI_OP,
                                                     "minItems": 2, "maxItems": 2}},
            },
        },
        "region": {"type": "array", "items": {"type": "integer"}},
        "times": _GRID,
        "s_grid": _GRID,
        "flow_grid": _GRID,
        "growth": {"type": "object", "required": ["c", "nu"], "properties": {"c": _NUM, "nu": _NUM}},
        "volumes": {"type": "array", "items": {"oneOf": [
            {"type": "integer", "minimum": 1},
            {"type": "array", "items": {"type": "integer"}, "minItems": 1}]}},
        "tolerances": {"type": "object"},
        "seed": {"type": "integer"},
        "outputs": {"type": "object"},
    },
}


def load(path: str | Path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    validate(cfg)
    return cfg


def validate(cfg: Any) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}") from exc


def scenario_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def graph(cfg: dict) -> lattice.MetricGraph:
    return lattice.from_config(cfg["lattice"])


def ffunction(cfg: dict) -> ffunc.FFunction:
    return ffunc.from_config(cfg.get("ffunction", {"family": "power"}))


def interaction(cfg: dict, g: lattice.MetricGraph, key: str = "interaction") -> interactions.Interaction:
    if key not in cfg:
        raise ConfigError(f"scenario needs an {key!r} block")
    return interactions.from_config(cfg[key], g)


def path(cfg: dict, g: lattice.MetricGraph) -> interactions.InteractionPath:
    if "path" not in cfg:
        raise ConfigError("scenario needs a 'path' block")
    return interactions.linear_path(interactions.from_config(cfg["path"]["from"], g),
                                    interactions.from_config(cfg["path"]["to"], g))


def _check_sites(op: algebra.LocalOperator, g: lattice.MetricGraph):
    if any(not (0 <= x < g.n) for x in op.support):
        raise ConfigError(f"observable support {op.support} outside the lattice")
    return op


def family(spec, g: lattice.MetricGraph) -> list[algebra.LocalOperator]:
    if isinstance(spec, dict):
        sites = spec.get("sites", "all")
        sites = list(g.sites) if sites == "all" else sites
        return [_check_sites(algebra.pauli(spec["pauli"], x), g) for x in sites]
    return [_check_sites(algebra.from_pauli_terms(item["op"]), g) for item in spec]


def observables(cfg: dict, g: lattice.MetricGraph):
    """(A family, B family, explicit pairs or None)."""
    obs = cfg.get("observables", {})
    pairs = None
    if "pairs" in obs:
        pairs = [tuple(_check_sites(algebra.from_pauli_terms(p["op"]), g) for p in pr) for pr in obs["pairs"]]
    A = family(obs["A"], g) if "A" in obs else []
    B = family(obs["B"], g) if "B" in obs else []
    return A, B, pairs


def grid(spec, default=None) -> np.ndarray:
    """Explicit list, or start/stop with either step or point count (endpoint included)."""
    if spec is None:
        if default is None:
            raise ConfigError("missing grid")
        spec = default
    if isinstance(spec, list):
        return np.array(spec, dtype=float)
    start, stop = float(spec.get("start", 0.0)), float(spec["stop"])
    if "points" in spec:
        return np.linspace(start, stop, int(spec["points"]))
    step = float(spec.get("step", 0.1))
    if step <= 0:
        raise ConfigError("grid step must be positive")
    count = int(round((stop - start) / step))
    return start + step * np.arange(count + 1)


def volumes(cfg: dict, g: lattice.MetricGraph) -> list[tuple]:
    vols = cfg.get("volumes") or [g.n]
    out = []
    for v in vols:
        sites = tuple(range(v)) if isinstance(v, int) else tuple(sorted(v))
        if any(not (0 <= x < g.n) for x in sites):
            raise ConfigError(f"volume {v} does not fit the lattice")
        out.append(sites)
    return out


def tolerance(cfg: dict, key: str, default):
    return cfg.get("tolerances", {}).get(key, default)
