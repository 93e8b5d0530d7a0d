"""Experiment configuration: a flat, typed ``key = value`` text format.

Grammar, one entry per line::

    line    := blank | comment | entry
    comment := '#' anything
    entry   := key '=' value          (whitespace around '=' is ignored)
    key     := section '.' name       (see SCHEMA for the closed key set)

Values are typed by the schema: ``int``, ``float``, ``bool`` (true/false),
``str``, ``floats`` (comma separated, possibly empty) and ``optfloat``
(a float or ``none``).  Unknown keys and duplicate keys are errors.  Every
violation found is reported together in a single :class:`ConfigError`.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .classify import VerdictThresholds
from .evolve import EvolveConfig, Sponge
from .field import GridSpec, make_grid
from .model import ModelParams, ParameterError

FAMILIES = ("gaussian", "sampled-W", "translated-gaussian", "ring")
VIRIAL_WEIGHTS = ("none", "quadratic", "bump")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class Key:
    type: str
    default: Any
    doc: str


SCHEMA: dict[str, Key] = {
    "model.N": Key("int", 3, "spatial dimension"),
    "model.b": Key("float", 1.0, "singularity exponent b"),
    "model.mu": Key("int", 1, "+1 focusing, -1 defocusing"),
    "model.alpha": Key("optfloat", None, "nonlinearity power; none derives the energy-critical value"),
    "model.exploratory": Key("bool", False, "allow a non-critical alpha"),
    "grid.points": Key("int", 64, "points per axis (even, prime factors 2, 3, 5 only)"),
    "grid.L": Key("float", 20.0, "box half-width (radial: outer radius)"),
    "grid.offset": Key("bool", True, "half-cell offset so that no sample sits at the origin"),
    "grid.radial": Key("bool", False, "radial profile grid instead of a Cartesian box"),
    "data.family": Key("str", "gaussian", "one of " + ", ".join(FAMILIES)),
    "data.amplitude": Key("float", 1.0, "amplitude A"),
    "data.width": Key("float", 1.0, "Gaussian width (sampled-W: length scale)"),
    "data.x0": Key("floats", (), "centre offset, one entry per axis (empty means the origin)"),
    "data.ring_radius": Key("float", 3.0, "ring family: radius of the annulus"),
    "data.cutoff": Key("float", 0.9, "sampled-W: cutoff radius as a fraction of L"),
    "data.taper": Key("float", 0.3, "sampled-W: cutoff taper width as a fraction of L"),
    "data.random_offset": Key("float", 0.0, "radius of a seeded random shift added to x0"),
    "evolve.dt": Key("float", 0.01, "time step"),
    "evolve.t_end": Key("float", 1.0, "final time"),
    "evolve.stride": Key("int", 10, "steps between checkpoints"),
    "evolve.dt_control": Key("bool", False, "halve dt when kinetic energy grows fast"),
    "evolve.growth_factor": Key("float", 1.5, "per-step kinetic growth that triggers halving"),
    "evolve.max_halvings": Key("int", 20, "halvings before a run is declared blowing up"),
    "evolve.kinetic_cap": Key("float", 1e3, "halt when kinetic exceeds this multiple of its initial value"),
    "evolve.sup_cap": Key("float", 1e8, "halt when sup|u| exceeds this"),
    "evolve.nonlinear": Key("bool", True, "false runs the free flow only"),
    "evolve.strict_dealias": Key("bool", False, "2/3-rule filter before each nonlinear substep"),
    "evolve.sponge": Key("bool", False, "absorbing layer near the box edge"),
    "evolve.sponge_inner": Key("float", 0.8, "sponge inner radius as a fraction of L"),
    "evolve.sponge_strength": Key("float", 1.0, "sponge damping rate"),
    "diag.virial_weight": Key("str", "none", "one of " + ", ".join(VIRIAL_WEIGHTS)),
    "diag.virial_R": Key("float", 5.0, "virial weight radius R"),
    "diag.proxy": Key("bool", True, "record the scattering proxy"),
    "diag.epsilon": Key("float", 0.0, "regularisation of |x|^-b"),
    "classify.kinetic_ratio": Key("float", 10.0, "bounded-kinetic cutoff"),
    "classify.snorm_decay": Key("float", 10.0, "required decay of scattering-size increments"),
    "classify.proxy_tail": Key("float", 0.05, "proxy tail cutoff relative to the initial H1 norm"),
    "classify.growup_factor": Key("float", 4.0, "kinetic growth for a grow-up verdict"),
    "classify.min_checkpoints": Key("int", 5, "fewer checkpoints give Undetermined"),
    "classify.boundary_tol": Key("float", 1e-3, "relative tolerance for threshold-boundary data"),
    "output.dir": Key("str", "runs", "directory for records and series"),
    "output.name": Key("str", "run", "file name prefix"),
    "seed": Key("int", 0, "seed for randomized placement"),
}


def _parse(kind: str, text: str):
    text = text.strip()
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "optfloat":
        return None if text.lower() in ("", "none") else float(text)
    if kind == "bool":
        low = text.lower()
        if low not in ("true", "false"):
            raise ValueError(f"expected true or false, got {text!r}")
        return low == "true"
    if kind == "floats":
        return tuple(float(p) for p in text.split(",") if p.strip())
    return text


def _format(kind: str, value) -> str:
    if value is None:
        return "none"
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float" or kind == "optfloat":
        return repr(float(value))
    if kind == "floats":
        return ",".join(repr(float(v)) for v in value)
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration.  ``values`` holds every key (defaults filled in);
    ``explicit`` records which keys the source text set."""

    values: dict
    explicit: frozenset = field(default_factory=frozenset)

    def __getitem__(self, key: str):
        return self.values[key]

    def replace(self, **updates) -> "ExperimentConfig":
        """Copy with keys updated, e.g. ``cfg.replace(**{"data.amplitude": 0.5})``."""
        vals = dict(self.values)
        for k, v in updates.items():
            if k not in SCHEMA:
                raise ConfigError([f"unknown key {k!r}"])
            vals[k] = v
        return from_values(vals, self.explicit | set(updates))

    # module objects ---------------------------------------------------------------

    def model(self) -> ModelParams:
        v = self.values
        alpha = v["model.alpha"]
        return ModelParams(N=v["model.N"], b=v["model.b"], alpha=alpha or 0.0, mu=v["model.mu"],
                           energy_critical=alpha is None, exploratory=v["model.exploratory"])

    def grid(self) -> GridSpec:
        v = self.values
        return make_grid(v["model.N"], v["grid.points"], v["grid.L"], v["grid.offset"], radial=v["grid.radial"])

    def evolve_config(self) -> EvolveConfig:
        v = self.values
        sponge = Sponge(v["evolve.sponge_inner"], v["evolve.sponge_strength"]) if v["evolve.sponge"] else None
        return EvolveConfig(dt=v["evolve.dt"], t_end=v["evolve.t_end"], sponge=sponge,
                            dt_control=v["evolve.dt_control"], growth_factor=v["evolve.growth_factor"],
                            max_halvings=v["evolve.max_halvings"], checkpoint_stride=v["evolve.stride"],
                            kinetic_cap_factor=v["evolve.kinetic_cap"], sup_cap=v["evolve.sup_cap"],
                            nonlinear=v["evolve.nonlinear"], strict_dealias=v["evolve.strict_dealias"])

    def thresholds(self) -> VerdictThresholds:
        v = self.values
        return VerdictThresholds(kinetic_ratio=v["classify.kinetic_ratio"], snorm_decay=v["classify.snorm_decay"],
                                 proxy_tail=v["classify.proxy_tail"], growup_factor=v["classify.growup_factor"],
                                 min_checkpoints=v["classify.min_checkpoints"])

    # serialization ----------------------------------------------------------------

    def dumps(self, *, full: bool = True) -> str:
        """Canonical text, keys sorted.  ``full=False`` emits only explicitly set keys."""
        keys = sorted(self.values if full else self.explicit)
        return "".join(f"{k} = {_format(SCHEMA[k].type, self.values[k])}\n" for k in keys)

    def as_strings(self) -> dict:
        return {k: _format(SCHEMA[k].type, self.values[k]) for k in sorted(self.values)}

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.dumps(full=True).encode()).hexdigest()


def _validate(v: dict) -> list[str]:
    errors = []

    def check(module: str, fn):
        try:
            fn()
        except (ParameterError, ValueError, TypeError) as exc:
            msg = str(exc)
            errors.append(msg if msg.startswith(module + ":") else f"{module}: {msg}")

    probe = ExperimentConfig(v)
    check("model", probe.model)
    if v["model.N"] in (1, 2, 3, 4, 5):
        check("grid", probe.grid)
        if not v["grid.radial"] and v["model.N"] > 3:
            errors.append("grid: Cartesian grids support N <= 3; use grid.radial = true")
    check("evolve", probe.evolve_config)
    if v["evolve.t_end"] < 0:
        errors.append("evolve: t_end must be nonnegative")
    if v["evolve.max_halvings"] < 0:
        errors.append("evolve: max_halvings must be nonnegative")
    check("classify", probe.thresholds)
    for k in ("classify.kinetic_ratio", "classify.snorm_decay", "classify.proxy_tail",
              "classify.growup_factor", "classify.boundary_tol"):
        if not v[k] > 0:
            errors.append(f"classify: {k.split('.')[1]} must be positive, got {v[k]}")
    fam = v["data.family"]
    if fam not in FAMILIES:
        errors.append(f"harness: data.family must be one of {', '.join(FAMILIES)}, got {fam!r}")
    if not v["data.width"] > 0:
        errors.append(f"harness: data.width must be positive, got {v['data.width']}")
    x0 = v["data.x0"]
    dims = 1 if v["grid.radial"] else v["model.N"]
    if x0 and len(x0) != dims:
        errors.append(f"harness: data.x0 needs {dims} entries, got {len(x0)}")
    if v["grid.radial"] and (any(x0) or v["data.random_offset"] or fam == "translated-gaussian"):
        errors.append("harness: radial grids need data centred at the origin")
    if fam == "translated-gaussian" and not any(x0) and not v["data.random_offset"]:
        errors.append("harness: translated-gaussian needs a nonzero data.x0")
    if not 0 < v["data.cutoff"] <= 1 or not 0 < v["data.taper"] < v["data.cutoff"]:
        errors.append("harness: sampled-W cutoff needs 0 < taper < cutoff <= 1")
    if v["data.random_offset"] < 0:
        errors.append("harness: data.random_offset must be nonnegative")
    if v["diag.virial_weight"] not in VIRIAL_WEIGHTS:
        errors.append(f"diagnostics: virial_weight must be one of {', '.join(VIRIAL_WEIGHTS)}")
    else:
        reach = {"none": 0.0, "quadratic": 2.0, "bump": 10.0}[v["diag.virial_weight"]]
        if reach and not (v["diag.virial_R"] > 0 and reach * v["diag.virial_R"] < v["grid.L"]):
            errors.append(f"diagnostics: {v['diag.virial_weight']} weight needs {reach:g}·R < L")
    if v["diag.epsilon"] < 0:
        errors.append("diagnostics: epsilon must be nonnegative")
    if not v["output.name"] or "/" in v["output.name"]:
        errors.append("harness: output.name must be a plain file name prefix")
    return errors


def from_values(values: dict, explicit=frozenset()) -> ExperimentConfig:
    v = {k: key.default for k, key in SCHEMA.items()}
    v.update(values)
    errors = _validate(v)
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(v, frozenset(explicit))


def parse_config(text: str) -> ExperimentConfig:
    errors = []
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw!r}")
            continue
        key, _, val = (p.strip() for p in line.partition("="))
        if key not in SCHEMA:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in values:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        try:
            values[key] = _parse(SCHEMA[key].type, val)
        except ValueError as exc:
            errors.append(f"line {lineno}: bad {SCHEMA[key].type} value for {key!r}: {exc}")
    try:
        cfg = from_values(values, frozenset(values))
    except ConfigError as exc:
        errors.extend(exc.errors)
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file not found: {p}"])
    return parse_config(p.read_text())


def schema_doc() -> str:
    """One line per key: name, type, default, description."""
    return "".join(f"{k} ({key.type}, default {_format(key.type, key.default)}): {key.doc}\n"
                   for k, key in SCHEMA.items())
