"""Run configuration: strict JSON schema, defaults, canonical form."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import jsonschema

from .analytic import WaveguideGeometry
from .explorer import DEFAULT_EPSILONS
from .io import canonical_json, content_hash
from .mesh import MeshConfig

TASKS = ("analytic", "sweep", "gaps", "study", "verify")


class ConfigError(ValueError):
    pass


_NUM = {"type": "number"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["geometry"],
    "properties": {
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "required": ["d", "h"],
            "properties": {"d": _NUM, "h": _NUM, "d_plus": _NUM},
        },
        "epsilons": {"type": "array", "items": _NUM, "minItems": 1},
        "k_grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "count": {"type": "integer", "minimum": 2},
                "symmetric": {"type": "boolean"},
            },
        },
        "mesh": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n1": {"type": "integer"},
                "n2": {"type": "integer"},
                "grading": _NUM,
                "order": {"type": "integer", "enum": [1, 2]},
            },
        },
        "bands": {"type": "integer", "minimum": 2},
        "energy_window": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lo": _NUM, "hi": _NUM},
        },
        "tasks": {"type": "array", "items": {"enum": list(TASKS)}},
        "output_dir": {"type": "string", "minLength": 1},
        "cache": {"type": "boolean"},
        "tolerance": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"eig": _NUM, "k": _NUM},
        },
    },
}

DEFAULTS = {
    "geometry": {"d_plus": math.pi},
    "epsilons": list(DEFAULT_EPSILONS),
    "k_grid": {"count": 33, "symmetric": False},
    "mesh": MeshConfig(n1=20, n2=8, grading=0.7, order=2).as_dict(),
    "bands": 6,
    "energy_window": {"lo": 0.25, "hi": 2.25},
    "tasks": ["analytic"],
    "output_dir": "splitband_out",
    "cache": True,
    "tolerance": {"eig": 1e-10, "k": 1e-4},
}


@dataclass(frozen=True)
class RunConfig:
    geometry: WaveguideGeometry
    epsilons: tuple[float, ...]
    k_count: int
    k_symmetric: bool
    mesh: MeshConfig
    bands: int
    energy_window: tuple[float, float]
    tasks: tuple[str, ...]
    output_dir: str
    cache: bool
    eig_tol: float
    k_tol: float
    document: dict = field(compare=False, repr=False)

    @property
    def hash(self) -> str:
        return content_hash(self.document)

    def canonical(self) -> str:
        return canonical_json(self.document)


def _merge(defaults: dict, doc: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in doc.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def from_dict(doc: dict) -> RunConfig:
    """Validate a config document, apply defaults and check physical rules."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"schema violation at {_path(err)}: {err.message}") from None
    full = _merge(DEFAULTS, doc)
    g = full["geometry"]
    try:
        geom = WaveguideGeometry(d_minus=g["d"], half_period=g["h"], d_plus=g["d_plus"])
    except ValueError as err:
        raise ConfigError(str(err)) from None
    eps = [float(e) for e in full["epsilons"]]
    for e in eps:
        if not (0 < e < geom.h):
            raise ConfigError(f"0 < eps < h violated (eps={e}, h={geom.h})")
        if not e < 1:
            raise ConfigError(f"eps < 1 violated (eps={e}); the asymptotics need ln(eps) < 0")
    if len(set(eps)) != len(eps):
        raise ConfigError("epsilons must be distinct")
    try:
        mesh = MeshConfig(**full["mesh"])
    except ValueError as err:
        raise ConfigError(f"mesh: {err}") from None
    win = full["energy_window"]
    if not win["lo"] < win["hi"]:
        raise ConfigError("energy_window: lo < hi violated")
    tol = full["tolerance"]
    if not (1e-14 < tol["eig"] < 1e-2):
        raise ConfigError("tolerance/eig must lie in (1e-14, 1e-2)")
    if not tol["k"] >= 1e-6:
        raise ConfigError("tolerance/k must be >= 1e-6")
    if full["k_grid"]["count"] < 16 and any(t in full["tasks"] for t in ("gaps", "study")):
        raise ConfigError("k_grid/count must be >= 16 for gap work")
    full["epsilons"] = sorted(eps, reverse=True)
    return RunConfig(
        geometry=geom,
        epsilons=tuple(full["epsilons"]),
        k_count=full["k_grid"]["count"],
        k_symmetric=full["k_grid"]["symmetric"],
        mesh=mesh,
        bands=full["bands"],
        energy_window=(float(win["lo"]), float(win["hi"])),
        tasks=tuple(full["tasks"]),
        output_dir=full["output_dir"],
        cache=full["cache"],
        eig_tol=float(tol["eig"]),
        k_tol=float(tol["k"]),
        document=full,
    )


def parse_config(text: str) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"malformed JSON: {err}") from None
    if not isinstance(doc, dict):
        raise ConfigError("schema violation at <root>: config must be a JSON object")
    return from_dict(doc)
