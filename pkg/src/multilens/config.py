"""Ensemble config files and result records.

Configs are JSON::

    {"planes": [{"masses": [1.0], "positions": [[0.0, 0.0]]}, ...],
     "betas": [[b12], [b13, b23], ...],
     "source": [re, im]}

Records are written one JSON object per line.  Every float is printed with
17 significant digits so values round-trip exactly.
"""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .ensemble import Ensemble, Plane, as_complex

_NUMBER = {"type": "number"}
_POINT = {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["planes"],
    "additionalProperties": False,
    "properties": {
        "planes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["masses", "positions"],
                "additionalProperties": False,
                "properties": {
                    "masses": {
                        "type": "array",
                        "minItems": 1,
                        "items": {"type": "number", "exclusiveMinimum": 0},
                    },
                    "positions": {"type": "array", "minItems": 1, "items": _POINT},
                },
            },
        },
        "betas": {"type": "array", "items": {"type": "array", "items": _NUMBER}},
        "source": _POINT,
    },
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def parse_config(doc: Any) -> tuple[Ensemble, complex | None]:
    """Validate a decoded config document and build the ensemble."""
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from exc
    try:
        planes = tuple(
            Plane(tuple(p["masses"]), tuple(complex(*xy) for xy in p["positions"]))
            for p in doc["planes"]
        )
        ens = Ensemble(planes, tuple(tuple(r) for r in doc.get("betas", [])))
        src = doc.get("source")
        source = as_complex(complex(*src)) if src is not None else None
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ens, source


def load_config(path) -> tuple[Ensemble, complex | None]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc)


def ensemble_to_config(ensemble: Ensemble, source=None) -> dict:
    doc: dict = {
        "planes": [
            {
                "masses": list(p.masses),
                "positions": [[y.real, y.imag] for y in p.positions],
            }
            for p in ensemble.planes
        ],
        "betas": [list(r) for r in ensemble.betas],
    }
    if source is not None:
        s = as_complex(source)
        doc["source"] = [s.real, s.imag]
    return doc


# -- serialisation ------------------------------------------------------------

def _plain(obj):
    """Convert numpy scalars, complex numbers and tuples to JSON types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    return obj


def format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = format(x, ".17g")
    # keep the value a float when read back
    return text if any(c in text for c in ".en") else text + ".0"


def dumps(obj) -> str:
    """Compact JSON with 17 significant digits for every float.

    Non-finite floats use the ``NaN``/``Infinity`` tokens that Python's
    ``json`` module reads back.
    """
    obj = _plain(obj)

    def enc(o) -> str:
        if isinstance(o, dict):
            return "{" + ",".join(f"{json.dumps(k)}:{enc(v)}" for k, v in o.items()) + "}"
        if isinstance(o, list):
            return "[" + ",".join(enc(v) for v in o) + "]"
        if isinstance(o, float):
            return format_float(o)
        return json.dumps(o)

    return enc(obj)


def digest(obj) -> str:
    """SHA-256 of the canonical (sorted-key) serialisation of ``obj``."""
    canon = json.dumps(json.loads(dumps(obj)), sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canon.encode()).hexdigest()


def make_record(command: str, inputs, outputs, *, status="ok", exit_code=0,
                seed=None, wall_time=None) -> dict:
    return {
        "command": command,
        "input_digest": digest(inputs),
        "status": status,
        "exit_code": exit_code,
        "seed": seed,
        "wall_time": wall_time,
        "outputs": outputs,
    }
