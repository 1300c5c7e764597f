"""Benchmark scenarios: geometry, initial data, boundary data and final metrics."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .cloud import PointCloud
from .config import ScenarioConfig
from .const import (
    SCENARIO_DECAYING_SHEAR,
    SCENARIO_ROTATING_BLOB,
    SCENARIO_SQUARE_CYLINDER,
    SCENARIO_STITCH_SPHERE,
    PointKind,
)
from .domain import Box, DomainSpec, RectangleWithHole, Sphere
from .metrics import energy_error, l2_velocity_error, mass_error
from .solve import SimulationState, advection_diffusion_step, nse_projection_step


class Scenario:
    name: str
    # metric the convergence sweeps report
    error_metric: str = ""
    time_dependent: bool = True
    transport: bool = False

    def domain(self, config: ScenarioConfig) -> DomainSpec:
        raise NotImplementedError

    def initialize(self, cloud: PointCloud, config: ScenarioConfig) -> None:
        """Set initial fields on a freshly generated cloud."""

    def make_state(self, cloud: PointCloud, domain: DomainSpec, config: ScenarioConfig) -> SimulationState:
        return SimulationState(
            cloud=cloud,
            domain=domain,
            fluid=config.fluid_params(),
            method=config.method,
            solver=config.solver_config(),
            weight_exponent=config.weight_exponent,
        )

    def step(self, state: SimulationState, dt: float) -> SimulationState:
        raise NotImplementedError

    def final_metrics(self, state: SimulationState) -> dict[str, float]:
        return {}


class RotatingBlob(Scenario):
    """Diffusing blob carried around the origin by a rigid rotation."""

    name = SCENARIO_ROTATING_BLOB
    error_metric = "eps_E"
    transport = True

    def domain(self, config):
        return Box((-2.0, -2.0), (2.0, 2.0))

    @staticmethod
    def velocity(omega: float) -> Callable[[np.ndarray, float], np.ndarray]:
        def field(x: np.ndarray, t: float) -> np.ndarray:
            return omega * np.column_stack((-x[:, 1], x[:, 0]))

        return field

    def initialize(self, cloud, config):
        p = config.params
        center = np.array([p["center_x"], p["center_y"]])
        inside = np.sum((cloud.x - center) ** 2, axis=1) < p["radius_sq"]
        cloud.phi = np.where(inside, p["amplitude"], 0.0)
        cloud.v = self.velocity(p["omega"])(cloud.x, 0.0)
        cloud.v_prev = cloud.v.copy()

    def make_state(self, cloud, domain, config):
        state = super().make_state(cloud, domain, config)
        state.velocity_field = self.velocity(config.params["omega"])
        return state

    def step(self, state, dt):
        return advection_diffusion_step(state, dt)

    def final_metrics(self, state):
        return {"eps_E": energy_error(state.history)}


class DecayingShear(Scenario):
    """Uniform stream with a viscously decaying transverse shear wave."""

    name = SCENARIO_DECAYING_SHEAR
    error_metric = "eps_2"

    def domain(self, config):
        return Box((0.0, 0.0), (1.0, 1.0), default_kind=PointKind.DIRICHLET)

    @staticmethod
    def exact_velocity(nu: float):
        def field(x: np.ndarray, t: float) -> np.ndarray:
            return np.column_stack(
                (np.ones(len(x)), np.cos(x[:, 0] - t) * math.exp(-nu * t))
            )

        return field

    @staticmethod
    def exact_pressure(p_mean: float, amplitude: float, frequency: float):
        def field(x: np.ndarray, t: float) -> np.ndarray:
            return np.full(len(x), p_mean + amplitude * math.sin(2.0 * math.pi * frequency * t))

        return field

    def _fields(self, config):
        fluid = config.fluid_params()
        p = config.params
        velocity = self.exact_velocity(fluid.eta / fluid.rho)
        pressure = self.exact_pressure(p["p_mean"], p["p_amplitude"], p["p_frequency"])
        return velocity, pressure

    def initialize(self, cloud, config):
        velocity, pressure = self._fields(config)
        cloud.v = velocity(cloud.x, 0.0)
        cloud.v_prev = cloud.v.copy()
        cloud.p = pressure(cloud.x, 0.0)

    def make_state(self, cloud, domain, config):
        state = super().make_state(cloud, domain, config)
        velocity, pressure = self._fields(config)
        state.boundary_velocity = lambda x, kind, t: velocity(x, t)
        state.boundary_pressure = pressure
        state.exact_velocity = velocity
        return state

    def step(self, state, dt):
        return nse_projection_step(state, dt)

    def final_metrics(self, state):
        exact = state.exact_velocity(state.cloud.x, state.t)
        return {"eps_2": l2_velocity_error(state.cloud.v, exact)}


class SquareCylinder(Scenario):
    """Channel flow past a square obstacle: inflow left, outflow right."""

    name = SCENARIO_SQUARE_CYLINDER
    error_metric = "eps_mass"

    def domain(self, config):
        p = config.params
        half = 0.5 * p["obstacle_size"]
        return RectangleWithHole(
            lo=(0.0, 0.0),
            hi=(p["length"], p["height"]),
            hole_lo=(p["obstacle_x"] - half, p["obstacle_y"] - half),
            hole_hi=(p["obstacle_x"] + half, p["obstacle_y"] + half),
            kinds={
                "left": PointKind.INFLOW,
                "right": PointKind.OUTFLOW,
                "bottom": PointKind.WALL,
                "top": PointKind.WALL,
            },
        )

    @staticmethod
    def boundary_velocity(v_in: float):
        def field(x: np.ndarray, kind: np.ndarray, t: float) -> np.ndarray:
            v = np.zeros_like(x)
            v[kind == PointKind.INFLOW, 0] = v_in
            return v

        return field

    def initialize(self, cloud, config):
        v_in = config.params["v_in"]
        cloud.v = np.zeros_like(cloud.x)
        moving = np.isin(cloud.kind, (PointKind.INTERIOR, PointKind.INFLOW, PointKind.OUTFLOW))
        cloud.v[moving, 0] = v_in
        cloud.v_prev = cloud.v.copy()
        cloud.p = np.zeros(len(cloud))

    def make_state(self, cloud, domain, config):
        state = super().make_state(cloud, domain, config)
        state.boundary_velocity = self.boundary_velocity(config.params["v_in"])
        return state

    def step(self, state, dt):
        return nse_projection_step(state, dt)

    def final_metrics(self, state):
        history = state.history
        reduced = [r.div_after <= r.div_before for r in history.records]
        return {
            "eps_mass": mass_error(history),
            "mean_eps_ddt": history.mean("eps_ddt"),
            "div_reduced_fraction": float(np.mean(reduced)) if reduced else 1.0,
        }


class StitchSphere(Scenario):
    """Static unit-sphere cloud for the cell stitching experiment."""

    name = SCENARIO_STITCH_SPHERE
    error_metric = "eps_mesh"
    time_dependent = False

    def domain(self, config):
        return Sphere(radius=config.params["radius"])


SCENARIO_REGISTRY: dict[str, Scenario] = {
    scenario.name: scenario
    for scenario in (RotatingBlob(), DecayingShear(), SquareCylinder(), StitchSphere())
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIO_REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}") from None
