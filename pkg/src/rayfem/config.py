"""Experiment configuration: YAML loading, validation against documented bounds, defaults.

Grammar (all keys lowercase snake_case; every section optional)::

    kind: four-source            # required
    frequencies: [10, 20, 40]    # required; omega / 2pi values
    npw: 6
    solver: direct               # direct | polarized-traces
    output_dir: results
    seed: 0
    source: [-0.4, -0.4]         # interior-source kinds only
    include_timings: true
    pipeline:  {beta, probe_scale, probe_round, probe_radius, hc, max_iter, eps,
                radial_wavelengths, standard_cells, exclude_wavelengths, exact_rays, quad_order}
    nmla:      {radius_scale, wavelengths, max_radius, shrink_min, oversampling,
                threshold, floor, min_samples, peak_method, max_directions}
    gmres:     {tol, restart, maxiter}
    polarized: {layer_rows, interface_pml, extra_step}
    pml:       {wavelengths, reflection}
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import yaml

from .linsolve.gmres import KrylovConfig
from .nmla import NMLAConfig
from .pipeline import PipelineConfig, SolverConfig

log = logging.getLogger(__name__)

KINDS = (
    "one-source",
    "four-source",
    "interior-source-homogeneous",
    "interior-source-gaussian",
    "sinusoidal-caustic",
    "scaling-sweep",
)
SOLVERS = {"direct": "direct", "polarized-traces": "polarized"}

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "KINDS", "SCHEMA"]


class ConfigError(ValueError):
    """Unreadable, unknown or out-of-range configuration."""


def _num(lo=None, hi=None, integer=False, optional=False, open_lo=False):
    return {"type": "int" if integer else "float", "lo": lo, "hi": hi, "optional": optional, "open_lo": open_lo}


def _bool():
    return {"type": "bool"}


def _choice(*options):
    return {"type": "choice", "options": options}


# key -> (rule, default); defaults mirror the dataclass defaults
SCHEMA = {
    "": {
        "npw": (_num(2, 100, open_lo=False), 6.0),
        "solver": (_choice(*SOLVERS), "direct"),
        "output_dir": ({"type": "str"}, "results"),
        "seed": (_num(0, None, integer=True), 0),
        "source": ({"type": "point"}, [-0.4, -0.4]),
        "include_timings": (_bool(), True),
    },
    "pipeline": {
        "beta": (_num(0, 10), 1.0),
        "probe_scale": (_num(0, 10, open_lo=True), 1.0),
        "probe_round": (_bool(), False),
        "probe_radius": (_num(0, 10, optional=True, open_lo=True), None),
        "hc": (_num(0, 1, optional=True, open_lo=True), None),
        "max_iter": (_num(0, 20, integer=True), 3),
        "eps": (_num(0, 1, open_lo=True), 1e-3),
        "radial_wavelengths": (_num(0, 20), 2.0),
        "standard_cells": (_num(0, 10), 1.0),
        "exclude_wavelengths": (_num(0, 20), 4.0),
        "exact_rays": (_bool(), False),
        "quad_order": (_num(1, 12, integer=True, optional=True), None),
    },
    "nmla": {
        "radius_scale": (_num(0, 20, open_lo=True), 3.0),
        "wavelengths": (_num(0, 20), 0.0),
        "max_radius": (_num(0, 10, optional=True, open_lo=True), None),
        "shrink_min": (_num(0, 1, open_lo=True), 0.25),
        "oversampling": (_num(1, 64, integer=True), 4),
        "threshold": (_num(0, 1, open_lo=True), 0.5),
        "floor": (_num(0, 1), 1e-8),
        "min_samples": (_num(4, 4096, integer=True), 16),
        "peak_method": (_choice("peaks", "clean"), "peaks"),
        "max_directions": (_num(1, 32, integer=True), 8),
    },
    "gmres": {
        "tol": (_num(0, 1, open_lo=True), 1e-7),
        "restart": (_num(1, 1000, integer=True), 40),
        "maxiter": (_num(1, 100000, integer=True), 400),
    },
    "polarized": {
        "layer_rows": (_num(1, 10000, integer=True, optional=True), None),
        "interface_pml": (_num(1, 1000, integer=True, optional=True), None),
        "extra_step": (_bool(), True),
    },
    "pml": {
        "wavelengths": (_num(0, 10, open_lo=True), 1.0),
        "reflection": (_num(0, 1, open_lo=True), 1e-6),
    },
}

# per-kind overrides of the defaults above; user values still win
KIND_DEFAULTS = {
    # the weakest front is a quarter of the strongest, and sidelobes would pass a lower plain threshold
    "four-source": {"nmla": {"threshold": 0.15, "peak_method": "clean"}},
    "scaling-sweep": {"": {"solver": "polarized-traces"}, "pipeline": {"max_iter": 0}},
}


@dataclass
class ExperimentConfig:
    kind: str
    frequencies: list
    npw: float = 6.0
    solver: str = "direct"
    output_dir: str = "results"
    seed: int = 0
    source: tuple = (-0.4, -0.4)
    include_timings: bool = True
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    pml_wavelengths: float = 1.0
    pml_reflection: float = 1e-6
    resolved: dict = field(default_factory=dict)
    defaulted: list = field(default_factory=list)

    def config_hash(self):
        """SHA-256 of the fully resolved configuration (canonical JSON)."""
        blob = json.dumps(self.resolved, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _check(section, key, rule, value):
    name = f"{section}.{key}" if section else key
    kind = rule["type"]
    if value is None:
        if rule.get("optional"):
            return None
        raise ConfigError(f"{name}: a value is required")
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str) or not value:
            raise ConfigError(f"{name}: expected a non-empty string")
        return value
    if kind == "choice":
        if value not in rule["options"]:
            raise ConfigError(f"{name}: {value!r} not one of {', '.join(rule['options'])}")
        return value
    if kind == "point":
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise ConfigError(f"{name}: expected [x, z]")
        try:
            pt = [float(v) for v in value]
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: expected numbers") from None
        if not all(-0.5 <= v <= 0.5 for v in pt):
            raise ConfigError(f"{name}: must lie in [-0.5, 0.5]^2")
        return pt
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    if kind == "int":
        if float(value) != int(value):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{name}: must be finite")
    lo, hi = rule["lo"], rule["hi"]
    if lo is not None and (value < lo or (rule["open_lo"] and value == lo)):
        bound = f"> {lo}" if rule["open_lo"] else f">= {lo}"
        raise ConfigError(f"{name}: {value} violates bound {bound}")
    if hi is not None and value > hi:
        raise ConfigError(f"{name}: {value} violates bound <= {hi}")
    return value


def parse_config(data):
    """Validate a mapping (already parsed from YAML) into an ``ExperimentConfig``."""
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    data = dict(data)
    if "kind" not in data:
        raise ConfigError("kind: missing required key")
    kind = data.pop("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind: {kind!r} not one of {', '.join(KINDS)}")
    if "frequencies" not in data:
        raise ConfigError("frequencies: missing required key")
    freqs = data.pop("frequencies")
    if freqs is None:
        freqs = []
    if not isinstance(freqs, (list, tuple)):
        raise ConfigError("frequencies: expected a list")
    for f in freqs:
        if isinstance(f, bool) or not isinstance(f, (int, float)) or not 0 < f <= 1000:
            raise ConfigError(f"frequencies: {f!r} violates bound (0, 1000]")
    freqs = [float(f) for f in freqs]

    overrides = KIND_DEFAULTS.get(kind, {})
    resolved = {"kind": kind, "frequencies": freqs}
    defaulted = []
    for section, rules in SCHEMA.items():
        given = data if section == "" else data.pop(section, None) or {}
        if section and not isinstance(given, dict):
            raise ConfigError(f"{section}: expected a mapping")
        out = {}
        for key, (rule, default) in rules.items():
            if key in given:
                out[key] = _check(section, key, rule, given.pop(key))
            else:
                out[key] = overrides.get(section, {}).get(key, default)
                defaulted.append(f"{section}.{key}" if section else key)
                log.info("default %s = %r", defaulted[-1], out[key])
        if section:
            if given:
                raise ConfigError(f"{section}: unknown key {sorted(given)[0]!r}")
            resolved[section] = out
        else:
            resolved.update(out)
    if data:
        raise ConfigError(f"unknown key {sorted(data)[0]!r}")

    try:
        nm = NMLAConfig(**resolved["nmla"])
        kr = KrylovConfig(**resolved["gmres"])
        pol = resolved["polarized"]
        solver = SolverConfig(
            SOLVERS[resolved["solver"]], kr, pol["layer_rows"], pol["interface_pml"], pol["extra_step"]
        )
        pipe = PipelineConfig(npw=resolved["npw"], nmla=nm, solver=solver, **resolved["pipeline"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(
        kind=kind,
        frequencies=freqs,
        npw=resolved["npw"],
        solver=resolved["solver"],
        output_dir=resolved["output_dir"],
        seed=resolved["seed"],
        source=tuple(resolved["source"]),
        include_timings=resolved["include_timings"],
        pipeline=pipe,
        pml_wavelengths=resolved["pml"]["wavelengths"],
        pml_reflection=resolved["pml"]["reflection"],
        resolved=resolved,
        defaulted=defaulted,
    )


def load_config(path):
    """Read and validate a YAML experiment file."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"parse error{where}: {exc}") from exc
    return parse_config(data)
