"""JSON run configuration: schema, cross-field checks and object builders."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import jsonschema
import numpy as np

from .fields import RotationAngleField, TransformationField
from .geometry import DomainBox
from .tensors import Tensor4

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1, "maxItems": 3}
_TENSOR = {
    "oneOf": [
        {"type": "object", "properties": {"lambda": _NUM, "mu": {"type": "number", "exclusiveMinimum": 0}},
         "required": ["lambda", "mu"], "additionalProperties": False},
        {"type": "object", "properties": {"young": {"type": "number", "exclusiveMinimum": 0},
                                          "poisson": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 0.5}},
         "required": ["young", "poisson"], "additionalProperties": False},
        {"type": "object", "properties": {"voigt": {"type": "array", "minItems": 6, "maxItems": 6,
                                                    "items": {"type": "array", "items": _NUM, "minItems": 6,
                                                              "maxItems": 6}}},
         "required": ["voigt"], "additionalProperties": False},
    ]
}
_GAMMA = {
    "type": "object",
    "properties": {"kind": {"enum": ["default", "constant", "linear"]}, "value": _NUM, "slope": _NUM, "offset": _NUM},
    "required": ["kind"], "additionalProperties": False,
}

SCHEMA: dict = {
    "type": "object",
    "properties": {
        "domain": {"type": "object", "properties": {"lower": _VEC, "upper": _VEC},
                   "required": ["lower", "upper"], "additionalProperties": False},
        "seed": {"type": "integer", "minimum": 0},
        "epsilon": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "schedule": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
        "r": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "rho": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "output": {"type": "string"},
        "covering": {"type": "object", "properties": {
            "anchors": {"enum": ["center", "corner", "random"]},
            "shifts": {"enum": ["auto", "lattice", "corner", "anchor", "zero"]},
            "transform": {"enum": ["identity", "exp", "plywood", "plywood_sheared"]},
            "gamma": _GAMMA}, "additionalProperties": False},
        "microstructure": {"type": "object", "properties": {
            "variant": {"enum": ["plywood_lp", "plywood_np", "perforation"]},
            "a": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
            "radius": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "radius_slope": _NUM,
            "gamma": _GAMMA}, "required": ["variant"], "additionalProperties": False},
        "moduli": {"type": "object", "properties": {"E1": _TENSOR, "E2": _TENSOR}, "required": ["E1", "E2"],
                   "additionalProperties": False},
        "grid": {"type": "object", "properties": {
            "cell_n": {"type": "integer", "minimum": 4},
            "samples": {"type": "integer", "minimum": 1},
            "voxels": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1, "maxItems": 3},
            "macro_n": {"type": "integer", "minimum": 1},
            "fine_n": {"type": "integer", "minimum": 8},
            "per_period": {"type": "integer", "minimum": 1},
            "samples_mc": {"type": "integer", "minimum": 1000}}, "additionalProperties": False},
        "homogenize": {"type": "object", "properties": {
            "tensor": {"enum": ["A_hom", "B_hom"]},
            "x3_range": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
            "additionalProperties": False},
        "macro": {"type": "object", "properties": {
            "tensor_file": {"type": "string"},
            "boundary": {"enum": ["zero", "linear", "manufactured"]},
            "gradient": {"type": "array", "items": {"type": "array", "items": _NUM}},
            "load": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}}, "additionalProperties": False},
        "study": {"type": "object", "properties": {
            "kind": {"enum": ["lemma_suite", "homog_error", "corrector_gradient", "lp_np_trend"]},
            "params": {"type": "object"},
            "resolutions": {"type": "object"}}, "required": ["kind"], "additionalProperties": False},
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Validation failure; the message starts with the offending field path."""


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


@dataclass
class Config:
    raw: dict
    source: str = "<dict>"
    overrides: dict = field(default_factory=dict)

    def get(self, *keys, default=None) -> Any:
        d: Any = self.raw
        for k in keys:
            if not isinstance(d, dict) or k not in d:
                return default
            d = d[k]
        return d

    @property
    def seed(self) -> int:
        return int(self.overrides.get("seed", self.raw.get("seed", 0)))

    def domain(self, default_dim: int | None = None) -> DomainBox:
        d = self.get("domain")
        if d is None:
            dim = 3 if self.get("microstructure", "variant", default="").startswith("plywood") else 1
            return DomainBox.unit(default_dim or dim)
        return DomainBox(tuple(d["lower"]), tuple(d["upper"]))

    def gamma(self, section: str = "microstructure") -> RotationAngleField:
        return gamma_from(self.get(section, "gamma"))

    def moduli(self) -> tuple[Tensor4, Tensor4]:
        m = self.get("moduli")
        if m is None:
            return Tensor4.from_young(10.0, 0.3), Tensor4.from_young(1.0, 0.35)
        return tensor_from(m["E1"], "$.moduli.E1"), tensor_from(m["E2"], "$.moduli.E2")

    def transform(self) -> TransformationField | None:
        kind = self.get("covering", "transform")
        if kind is None:
            return None
        if kind == "identity":
            return TransformationField.identity(self.domain().dim)
        if kind == "exp":
            return TransformationField.exponential_1d(self.domain().lo[0], self.domain().hi[0])
        g = self.gamma("covering")
        return TransformationField.plywood(g) if kind == "plywood" else TransformationField.plywood_sheared(g)


def gamma_from(d) -> RotationAngleField:
    if d is None or d["kind"] == "default":
        return RotationAngleField.default()
    if d["kind"] == "constant":
        return RotationAngleField.constant(float(d.get("value", 0.0)))
    return RotationAngleField.linear(float(d.get("slope", 1.0)), float(d.get("offset", 0.0)))


def tensor_from(d: dict, path: str) -> Tensor4:
    if "voigt" in d:
        T = Tensor4.from_voigt(d["voigt"])
    elif "young" in d:
        T = Tensor4.from_young(d["young"], d["poisson"])
    else:
        T = Tensor4.isotropic(d["lambda"], d["mu"])
    try:
        return T.validate()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def validate(raw: dict, source: str = "<dict>") -> Config:
    """Schema and cross-field validation."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        e = errors[0]
        raise ConfigError(f"{_path(e.absolute_path)}: {e.message}")
    cfg = Config(raw, source)
    d = raw.get("domain")
    if d is not None:
        if len(d["lower"]) != len(d["upper"]):
            raise ConfigError("$.domain: lower and upper differ in dimension")
        if any(u <= l for l, u in zip(d["lower"], d["upper"])):
            raise ConfigError("$.domain.upper: must exceed lower in every coordinate")
    r, rho = raw.get("r"), raw.get("rho")
    if r is not None and rho is not None and not r < rho:
        raise ConfigError(f"$.rho: must exceed r ({rho} <= {r})")
    sched = raw.get("schedule")
    if sched is not None and not all(b < a for a, b in zip(sched, sched[1:])):
        raise ConfigError("$.schedule: must be strictly decreasing")
    eps = raw.get("epsilon")
    if eps is not None and r is not None:
        side = eps ** r
        if any(side >= s for s in cfg.domain().sides):
            raise ConfigError(f"$.epsilon: cube side eps^r = {side:g} not smaller than the domain")
    fine = cfg.get("grid", "fine_n")
    per = cfg.get("grid", "per_period", default=8)
    if fine is not None and sched:
        if fine * min(sched) < per:
            raise ConfigError(f"$.grid.fine_n: {fine} under-resolves eps={min(sched):g}; need at least "
                              f"{int(math.ceil(per / min(sched)))}")
    ms = raw.get("microstructure")
    if ms is not None and ms["variant"] == "perforation" and "radius" not in ms:
        raise ConfigError("$.microstructure.radius: required for the perforation variant")
    if cfg.get("moduli") is not None:
        cfg.moduli()
    return cfg


def load(path: str) -> Config:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"$: invalid JSON ({exc})") from None
    return validate(raw, path)


def radius_field(ms: dict):
    r0, r1 = float(ms.get("radius", 0.25)), float(ms.get("radius_slope", 0.0))
    return lambda x: r0 + r1 * np.atleast_2d(x)[:, 0]
