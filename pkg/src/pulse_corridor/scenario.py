"""Declarative scenario files and the design pipeline they drive.

A scenario is an INI-style text file (named ``[blocks]`` with ``key = value``
leaves) or the equivalent JSON object of objects. Lists are written as
comma-separated numbers. See ``scenarios/nmb.ini`` for a complete example.
"""
from __future__ import annotations

import configparser
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from .cycle import CorridorAnalysis, OneCycle, corridor_extrema, map_corridor_through_output_nl
from .design import (
    CorridorSpec,
    ModulationConfig,
    PeriodDesign,
    StabilityReport,
    design_period,
    design_weight,
    slope_grid,
    slope_search,
    stability_report,
    synthesize_modulation,
)
from .errors import ValidationError
from .numerics import NumericsSettings
from .plant import (
    HillFunction,
    Identity,
    NmbParams,
    PlantLTI,
    PlantStructure,
    PowerLaw,
    StaticNonlinearity,
    TableNonlinearity,
    plant_from_nmb,
)


class ConfigError(ValidationError):
    """The scenario file does not match the schema."""


_REQUIRED = object()


def _float(v):
    if isinstance(v, bool):
        raise ValueError("boolean where a number is expected")
    out = float(v)
    if not math.isfinite(out):
        raise ValueError("non-finite number")
    return out


def _int(v):
    out = _float(v)
    if out != int(out):
        raise ValueError("expected an integer")
    return int(out)


def _str(v):
    if not isinstance(v, str):
        raise ValueError("expected a string")
    return v.strip().lower()


def _floats(v):
    if isinstance(v, str):
        v = [p for p in v.replace(";", ",").split(",") if p.strip()]
    return [_float(p) for p in v]


def _x0(v):
    if isinstance(v, str) and v.strip().lower() in ("fixed_point", "zero"):
        return v.strip().lower()
    return _floats(v)


# block -> key -> (parser, default); _REQUIRED marks mandatory keys, None optional ones
SCHEMA: Dict[str, Dict[str, tuple]] = {
    "plant": {
        "kind": (_str, "nmb"),
        "alpha": (_float, 0.0374),
        "v1": (_float, 1.0), "v2": (_float, 4.0), "v3": (_float, 10.0),
        "a1": (_float, None), "a2": (_float, None), "a3": (_float, None),
        "g1": (_float, None), "g2": (_float, None),
        "u_max": (_float, None),
    },
    "structure": {
        "kind": (_str, "lti"),
        "nonlinearity": (_str, None),
        "gamma": (_float, 2.6677), "c50": (_float, 3.2425), "emax": (_float, 100.0),
        "exponent": (_float, 2.0), "coef": (_float, 1.0),
        "table_x": (_floats, None), "table_y": (_floats, None),
    },
    "corridor": {
        "given": (_str, _REQUIRED),
        "y_min": (_float, None), "y_max": (_float, None),
        "y_bar_min": (_float, None), "y_bar_max": (_float, None),
    },
    "design": {
        "t_min": (_float, _REQUIRED), "t_max": (_float, _REQUIRED),
        "period_grid": (_int, 256),
        "slopes": (_str, "fixed"),
        "k2": (_float, 0.0), "k4": (_float, 0.0),
        "k2_range": (_floats, None), "k4_range": (_floats, None),
        "slope_grid": (_int, 33),
        "phi1": (_float, _REQUIRED), "phi2": (_float, _REQUIRED),
        "f1": (_float, _REQUIRED), "f2": (_float, _REQUIRED),
    },
    "simulate": {
        "x0": (_x0, "zero"),
        "n_firings": (_int, 30),
        "sample_dt": (_float, 0.1),
        "mode": (_str, "closed"),
        "convergence_tol": (_float, None),
        "window": (_int, 5),
        "corridor_tol": (_float, 1e-3),
    },
    "analyze": {
        "t": (_float, None), "lambda": (_float, None),
    },
    "numerics": {f.name: ((_int if f.type in ("int", int) else _float), f.default)
                 for f in fields(NumericsSettings)},
}

OPTIONAL_BLOCKS = ("simulate", "analyze", "numerics", "structure", "plant")


@dataclass
class ScenarioConfig:
    """Validated scenario with every default filled in."""

    blocks: Dict[str, Dict[str, Any]]
    source: Optional[str] = None

    def __getitem__(self, block):
        return self.blocks[block]

    def effective(self) -> dict:
        """Full effective configuration (JSON-ready), defaults included."""
        return {b: dict(v) for b, v in self.blocks.items()}

    # -- model construction -------------------------------------------------

    @property
    def settings(self) -> NumericsSettings:
        return NumericsSettings(**self.blocks["numerics"])

    def output_map(self) -> Optional[StaticNonlinearity]:
        return self._nonlinearity() if self["structure"]["kind"] == "wiener" else None

    def input_map(self) -> Optional[StaticNonlinearity]:
        return self._nonlinearity() if self["structure"]["kind"] == "hammerstein" else None

    def _nonlinearity(self) -> StaticNonlinearity:
        s = self["structure"]
        kind = s["nonlinearity"]
        if kind == "hill":
            return HillFunction(gamma=s["gamma"], c50=s["c50"], emax=s["emax"])
        if kind == "power":
            return PowerLaw(exponent=s["exponent"], coef=s["coef"])
        if kind == "table":
            return TableNonlinearity(s["table_x"], s["table_y"])
        return Identity()

    def plant(self) -> PlantLTI:
        p = self["plant"]
        if p["kind"] == "nmb":
            s = self["structure"]
            params = NmbParams(alpha=p["alpha"], v1=p["v1"], v2=p["v2"], v3=p["v3"],
                               gamma=s["gamma"], c50=s["c50"], u_max=p["u_max"])
            return plant_from_nmb(params, self.settings)
        return PlantLTI(p["a1"], p["a2"], p["a3"], p["g1"], p["g2"], settings=self.settings)

    def structure(self) -> PlantStructure:
        return PlantStructure(self.plant(), input_nl=self.input_map(), output_nl=self.output_map())

    def corridor(self) -> CorridorSpec:
        c = self["corridor"]
        if c["given"] == "linear":
            return CorridorSpec.linear(c["y_bar_min"], c["y_bar_max"])
        return CorridorSpec.measured(c["y_min"], c["y_max"], self.output_map())


def _check_semantics(blocks):
    p, s, c, d, sim = (blocks[k] for k in ("plant", "structure", "corridor", "design", "simulate"))
    if p["kind"] not in ("nmb", "chain"):
        raise ConfigError("plant.kind must be 'nmb' or 'chain'")
    if p["kind"] == "chain":
        missing = [k for k in ("a1", "a2", "a3", "g1", "g2") if p[k] is None]
        if missing:
            raise ConfigError(f"chain plant needs {missing}")
    if s["kind"] not in ("lti", "wiener", "hammerstein"):
        raise ConfigError("structure.kind must be lti, wiener or hammerstein")
    if s["nonlinearity"] is None:
        s["nonlinearity"] = {"wiener": "hill", "hammerstein": "power"}.get(s["kind"], "identity")
    if s["nonlinearity"] not in ("hill", "power", "table", "identity"):
        raise ConfigError("structure.nonlinearity must be hill, power, table or identity")
    if s["nonlinearity"] == "table" and (s["table_x"] is None or s["table_y"] is None):
        raise ConfigError("table nonlinearity needs table_x and table_y")
    if c["given"] == "measured":
        if c["y_min"] is None or c["y_max"] is None:
            raise ConfigError("measured corridor needs y_min and y_max")
    elif c["given"] == "linear":
        if c["y_bar_min"] is None or c["y_bar_max"] is None:
            raise ConfigError("linear corridor needs y_bar_min and y_bar_max")
    else:
        raise ConfigError("corridor.given must be 'measured' or 'linear'")
    if d["slopes"] not in ("fixed", "search"):
        raise ConfigError("design.slopes must be 'fixed' or 'search'")
    if d["slopes"] == "search" and (d["k2_range"] is None or d["k4_range"] is None):
        raise ConfigError("slope search needs k2_range and k4_range")
    for key in ("k2_range", "k4_range"):
        if d[key] is not None and len(d[key]) != 2:
            raise ConfigError(f"design.{key} needs two numbers")
    if sim["mode"] not in ("closed", "open"):
        raise ConfigError("simulate.mode must be 'closed' or 'open'")
    if isinstance(sim["x0"], list) and len(sim["x0"]) != 3:
        raise ConfigError("simulate.x0 needs three numbers")


def parse_config(raw: Dict[str, Dict[str, Any]], source: Optional[str] = None) -> ScenarioConfig:
    """Validate a block dictionary against :data:`SCHEMA`."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping of blocks")
    raw = {str(k).lower(): v for k, v in raw.items()}
    unknown = set(raw) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown blocks: {sorted(unknown)}")
    blocks = {}
    for name, schema in SCHEMA.items():
        given = raw.get(name)
        if given is None:
            if name not in OPTIONAL_BLOCKS:
                raise ConfigError(f"missing block [{name}]")
            given = {}
        if not isinstance(given, dict):
            raise ConfigError(f"block [{name}] must be a mapping")
        given = {str(k).lower(): v for k, v in given.items()}
        extra = set(given) - set(schema)
        if extra:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
        out = {}
        for key, (parse, default) in schema.items():
            if key in given and given[key] is not None:
                try:
                    out[key] = parse(given[key])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"[{name}] {key}: {exc}") from None
            elif default is _REQUIRED:
                raise ConfigError(f"missing key '{key}' in [{name}]")
            else:
                out[key] = default
        blocks[name] = out
    _check_semantics(blocks)
    cfg = ScenarioConfig(blocks, source)
    # model-level validation errors (distinct rates, corridor order) keep their own types
    cfg.structure()
    cfg.corridor()
    return cfg


def load_config(path) -> ScenarioConfig:
    """Read an INI-style or JSON scenario file."""
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
    else:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"invalid scenario file: {exc}") from None
        raw = {section: dict(parser[section]) for section in parser.sections()}
    return parse_config(raw, str(path))


# ---------------------------------------------------------------------------
# design pipeline

@dataclass
class DesignResult:
    structure: PlantStructure
    spec: CorridorSpec
    period: PeriodDesign
    cycle: OneCycle
    corridor: CorridorAnalysis
    modulation: ModulationConfig
    stability: StabilityReport
    zero_slope_stability: StabilityReport

    @property
    def plant(self) -> PlantLTI:
        return self.structure.linear


def run_design(cfg: ScenarioConfig) -> DesignResult:
    """Period, dose, fixed point, modulation and stability for a scenario."""
    settings = cfg.settings
    structure = cfg.structure()
    plant = structure.linear
    spec = cfg.corridor()
    d = cfg["design"]

    period = design_period(plant, spec, (d["t_min"], d["t_max"]), d["period_grid"], settings)
    lam = design_weight(plant, period.T, spec, settings)
    cycle = OneCycle.from_parameters(plant, period.T, lam, settings)
    corridor = map_corridor_through_output_nl(
        corridor_extrema(plant, period.T, lam, settings), structure.output_nl
    )
    bounds = (d["phi1"], d["phi2"], d["f1"], d["f2"])
    nl = structure.output_nl
    if d["slopes"] == "search":
        choice = slope_search(
            plant, cycle, bounds, nl,
            slope_grid(*d["k2_range"], n=d["slope_grid"]),
            slope_grid(*d["k4_range"], n=d["slope_grid"]),
            settings,
        )
        slopes = (choice.k2, choice.k4)
    else:
        slopes = (d["k2"], d["k4"])
    mod = synthesize_modulation(cycle, slopes, bounds, nl)
    stab = stability_report(plant, cycle, mod, settings)
    zero = stability_report(plant, cycle, synthesize_modulation(cycle, (0.0, 0.0), bounds, nl),
                            settings)
    return DesignResult(structure, spec, period, cycle, corridor, mod, stab, zero)


def initial_state(cfg: ScenarioConfig, cycle: OneCycle) -> np.ndarray:
    x0 = cfg["simulate"]["x0"]
    if x0 == "zero":
        return np.zeros(3)
    if x0 == "fixed_point":
        return cycle.X.copy()
    return np.asarray(x0, dtype=float)
