"""Scenario configuration: INI sections validated with voluptuous."""

from __future__ import annotations

import configparser
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import voluptuous as vol

from .cloud import CloudParams
from .const import (
    DEFAULT_BETA,
    DEFAULT_BOUNDARY_SPACING,
    DEFAULT_JITTER,
    DEFAULT_MAX_ITER,
    DEFAULT_R_MAX,
    DEFAULT_R_MIN,
    DEFAULT_REL_TOL,
    DEFAULT_SEED,
    DEFAULT_SPACING,
    DEFAULT_V_REF,
    DEFAULT_WEIGHT_EXPONENT,
    METHOD_FC,
    METHODS,
    SCENARIO_DECAYING_SHEAR,
    SCENARIO_ROTATING_BLOB,
    SCENARIO_SQUARE_CYLINDER,
    SCENARIO_STITCH_SPHERE,
    SCENARIOS,
)
from .errors import ConfigError
from .solve import FluidParams, SolverConfig

_LOGGER = logging.getLogger(__name__)

Positive = vol.All(vol.Coerce(float), vol.Range(min=0.0, min_included=False))
NonNegative = vol.All(vol.Coerce(float), vol.Range(min=0.0))
Count = vol.All(vol.Coerce(int), vol.Range(min=0))

RUN_SCHEMA = vol.Schema(
    {
        vol.Required("scenario"): vol.In(SCENARIOS),
        vol.Optional("method", default=METHOD_FC): vol.In(METHODS),
        vol.Required("h"): Positive,
        vol.Optional("beta", default=DEFAULT_BETA): Positive,
        vol.Optional("c_dt", default=0.01): Positive,
        vol.Optional("t_end", default=1.0): NonNegative,
        # 0 selects the CFL-like adaptive step
        vol.Optional("dt", default=0.0): NonNegative,
        vol.Optional("seed", default=DEFAULT_SEED): Count,
        vol.Optional("out_dir", default="out"): str,
        vol.Optional("r_min", default=DEFAULT_R_MIN): Positive,
        vol.Optional("r_max", default=DEFAULT_R_MAX): Positive,
        vol.Optional("spacing", default=DEFAULT_SPACING): Positive,
        vol.Optional("boundary_spacing", default=DEFAULT_BOUNDARY_SPACING): Positive,
        vol.Optional("jitter", default=DEFAULT_JITTER): NonNegative,
        vol.Optional("margin", default=0.75): NonNegative,
        vol.Optional("weight_exponent", default=DEFAULT_WEIGHT_EXPONENT): vol.All(
            vol.Coerce(int), vol.In((1, -1))
        ),
        vol.Optional("v_ref", default=DEFAULT_V_REF): Positive,
        vol.Optional("snapshot_every", default=0): Count,
    }
)

FLUID_SCHEMA = vol.Schema(
    {
        vol.Optional("rho", default=1.0): Positive,
        vol.Optional("eta", default=0.0): NonNegative,
        vol.Optional("g_x", default=0.0): vol.Coerce(float),
        vol.Optional("g_y", default=0.0): vol.Coerce(float),
        vol.Optional("alpha", default=0.0): NonNegative,
    }
)

SOLVER_SCHEMA = vol.Schema(
    {
        vol.Optional("rel_tol", default=DEFAULT_REL_TOL): Positive,
        vol.Optional("max_iter", default=DEFAULT_MAX_ITER): vol.All(vol.Coerce(int), vol.Range(min=1)),
        vol.Optional("restart_on_breakdown", default=True): vol.Boolean(),
    }
)

BLOB_SCHEMA = vol.Schema(
    {
        vol.Optional("center_x", default=1.0): vol.Coerce(float),
        vol.Optional("center_y", default=0.0): vol.Coerce(float),
        vol.Optional("radius_sq", default=0.1): Positive,
        vol.Optional("amplitude", default=500.0): vol.Coerce(float),
        vol.Optional("omega", default=1.0): vol.Coerce(float),
    }
)

SHEAR_SCHEMA = vol.Schema(
    {
        vol.Optional("p_mean", default=3.0): vol.Coerce(float),
        vol.Optional("p_amplitude", default=0.01): vol.Coerce(float),
        vol.Optional("p_frequency", default=10.0): NonNegative,
    }
)

CHANNEL_SCHEMA = vol.Schema(
    {
        vol.Optional("length", default=30.0): Positive,
        vol.Optional("height", default=8.0): Positive,
        vol.Optional("obstacle_x", default=8.0): vol.Coerce(float),
        vol.Optional("obstacle_y", default=4.0): vol.Coerce(float),
        vol.Optional("obstacle_size", default=1.0): Positive,
        vol.Optional("v_in", default=2.0): Positive,
        vol.Optional("reynolds", default=500.0): Positive,
    }
)

SPHERE_SCHEMA = vol.Schema({vol.Optional("radius", default=1.0): Positive})

SCENARIO_SECTIONS = {
    SCENARIO_ROTATING_BLOB: ("blob", BLOB_SCHEMA),
    SCENARIO_DECAYING_SHEAR: ("shear", SHEAR_SCHEMA),
    SCENARIO_SQUARE_CYLINDER: ("channel", CHANNEL_SCHEMA),
    SCENARIO_STITCH_SPHERE: ("sphere", SPHERE_SCHEMA),
}

# Scenario presets, applied under the user's values
PRESETS: dict[str, dict[str, dict[str, Any]]] = {
    SCENARIO_ROTATING_BLOB: {
        "run": {"h": 0.2, "c_dt": 0.01, "t_end": 1.0},
        "fluid": {"alpha": 0.4},
    },
    SCENARIO_DECAYING_SHEAR: {
        "run": {"h": 0.25, "c_dt": 0.005, "t_end": 1.0},
        "fluid": {"rho": 1.0, "eta": 0.05},
    },
    SCENARIO_SQUARE_CYLINDER: {
        "run": {"h": 0.6, "c_dt": 0.3, "t_end": 10.0},
        "fluid": {"rho": 1.0},
    },
    SCENARIO_STITCH_SPHERE: {
        "run": {
            "h": 0.5,
            "beta": 0.7,
            "spacing": 0.29,
            "boundary_spacing": 0.29,
            "jitter": 0.05,
            "margin": 1.0,
        },
    },
}

FULL_SCALE = {"run": {"h": 0.4, "t_end": 50.0}, "channel": {"reynolds": 10000.0}}


@dataclass
class ScenarioConfig:
    run: dict[str, Any]
    fluid: dict[str, Any] = field(default_factory=dict)
    solver: dict[str, Any] = field(default_factory=dict)
    params: dict[str, Any] = field(default_factory=dict)

    def __getattr__(self, name: str):
        run = self.__dict__.get("run", {})
        if name in run:
            return run[name]
        raise AttributeError(name)

    @property
    def section(self) -> str:
        return SCENARIO_SECTIONS[self.scenario][0]

    def sections(self) -> dict[str, dict[str, Any]]:
        return {"run": self.run, "fluid": self.fluid, "solver": self.solver, self.section: self.params}

    def cloud_params(self) -> CloudParams:
        return CloudParams(
            r_min=self.r_min,
            r_max=self.r_max,
            beta=self.beta,
            c_dt=self.c_dt,
            v_ref=self.v_ref,
            spacing=self.spacing,
            boundary_spacing=self.boundary_spacing,
            jitter=self.jitter,
            margin=self.margin,
        )

    def fluid_params(self) -> FluidParams:
        eta = self.fluid["eta"]
        if self.scenario == SCENARIO_SQUARE_CYLINDER:
            # viscosity follows from the Reynolds number of the inflow
            p = self.params
            eta = self.fluid["rho"] * p["v_in"] * p["length"] / p["reynolds"]
        return FluidParams(
            rho=self.fluid["rho"],
            eta=eta,
            g=(self.fluid["g_x"], self.fluid["g_y"]),
            alpha=self.fluid["alpha"],
        )

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)


def _validate(schema: vol.Schema, values: dict, section: str) -> dict:
    try:
        return schema(values)
    except vol.MultipleInvalid as err:
        first = err.errors[0]
        path = ".".join([section, *(str(p) for p in first.path)])
        raise ConfigError(first.msg, path=path) from err


def from_sections(raw: dict[str, dict[str, Any]]) -> ScenarioConfig:
    """Validate raw section dicts on top of the scenario preset."""
    if "run" not in raw:
        raise ConfigError("missing [run] section")
    scenario = raw["run"].get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}", path="run.scenario")
    section, section_schema = SCENARIO_SECTIONS[scenario]
    schemas = {"run": RUN_SCHEMA, "fluid": FLUID_SCHEMA, "solver": SOLVER_SCHEMA, section: section_schema}
    for name in raw:
        if name not in schemas:
            raise ConfigError(f"unknown section for scenario {scenario}", path=name)

    preset = PRESETS[scenario]
    validated = {
        name: _validate(schema, {**preset.get(name, {}), **raw.get(name, {})}, name)
        for name, schema in schemas.items()
    }
    config = ScenarioConfig(
        run=validated["run"],
        fluid=validated["fluid"],
        solver=validated["solver"],
        params=validated[section],
    )
    try:
        config.cloud_params()
    except ValueError as err:
        raise ConfigError(str(err), path="run") from err
    return config


def parse_config(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"malformed config: {err}") from err
    return from_sections({name: dict(parser[name]) for name in parser.sections()})


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}", path=str(path)) from err
    _LOGGER.debug("Loaded config from %s", path)
    return parse_config(text)


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(config: ScenarioConfig) -> str:
    """INI text that parses back to exactly this config."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name, values in config.sections().items():
        parser[name] = {key: _format(value) for key, value in values.items()}
    buffer = io.StringIO()
    parser.write(buffer)
    return buffer.getvalue()


def with_overrides(
    config: ScenarioConfig,
    run: Optional[dict[str, Any]] = None,
    full_scale: bool = False,
    **sections: dict[str, Any],
) -> ScenarioConfig:
    """Re-validated copy with override values; full_scale applies first."""
    raw = {name: dict(values) for name, values in config.sections().items()}
    layers = []
    if full_scale:
        if config.scenario != SCENARIO_SQUARE_CYLINDER:
            raise ConfigError("full-scale settings exist for square_cylinder only", path="run.scenario")
        layers.append(FULL_SCALE)
    layers.append({"run": run or {}, **sections})
    for layer in layers:
        for name, values in layer.items():
            raw.setdefault(name, {}).update({k: v for k, v in values.items() if v is not None})
    return from_sections(raw)
