"""Closed-loop lane-keeping simulation and the lane-departure metric.

The vehicle follows a kinematic bicycle model stepped at a fixed rate.
At every step the simulator synthesizes an observation from exact road
geometry, queries the controller under test for a steering command, logs
the ground-truth command of the reference controller at the same state,
and advances the vehicle.  Safety is scored by the maximum distance from
the lane center over the run, capped at 1.5 m and normalized to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, TYPE_CHECKING

import numpy as np

from ._seeds import STREAM_OBS_NOISE, BlockNoise
from .domain import Scenario
from .road import RoadGeometry, build_road, wrap_angle

if TYPE_CHECKING:
    from .controllers import Controller

T_DELTA = 0.05  # s per step (20 frames per second)
DEFAULT_DURATION = 60.0  # s
WHEELBASE = 2.9  # m
STEER_MAX_RAD = math.radians(25.0)  # steering command +-1 maps to +-25 degrees
MDCL_CAP = 1.5  # m; at or beyond this the vehicle has left its lane
TAU_ONLINE = 0.7  # normalized MDCL acceptability threshold
OFFSET_SATURATION = 10.0  # m; observations saturate beyond this offset
NOISE_CHANNELS = 4
NOISE_BASE_SIGMA = 0.01

# Observation noise scale is a documented function of scenario
# attributes: sigma = NOISE_BASE_SIGMA * product of applicable factors.
NOISE_FACTORS = {
    "Weather.type": {"Sunny": 1.0, "Rainy": 2.0, "Snowy": 2.5},
    "Weather.condition": {"None": 1.0, "Light": 1.2, "Moderate": 1.5, "Heavy": 2.0},
    "Environment.buildings": {"True": 1.25, "False": 1.0},
    "Environment.underlay": {"Pavement": 1.0, "Grass": 1.2, "Sand": 1.4},
}


class SimulationError(RuntimeError):
    pass


class ControllerFailure(SimulationError):
    """A controller raised during a run; carries the failing step."""

    def __init__(self, step: int, cause: BaseException):
        super().__init__(f"controller failed at step {step}: {cause}")
        self.step = step
        self.cause = cause


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    heading: float  # CCW-positive, normalized to (-pi, pi]
    step_index: int


@dataclass(frozen=True, eq=False)
class Observation:
    lateral_offset: float  # m, left-positive, saturated to +-OFFSET_SATURATION
    heading_error: float  # rad, left-positive
    curvature_ahead: float  # 1/m, right-positive, mean over the next step's travel
    noise: np.ndarray  # NOISE_CHANNELS attribute-scaled channels
    off_road: bool = False


@dataclass(frozen=True, eq=False)
class TraceStep:
    step: int
    observation: Observation
    theta: float  # ground-truth steering at this state
    theta_hat: float  # controller-under-test steering
    state: VehicleState
    deviation: float  # m, unsigned distance from lane center


@dataclass(frozen=True, eq=False)
class Trace:
    steps: tuple[TraceStep, ...]
    t_delta: float
    scenario_id: str
    speed_mps: float
    ended_early: bool = False

    def deviations(self) -> list[float]:
        return [s.deviation for s in self.steps]

    def travel_to_deviation(self, threshold: float) -> Optional[float]:
        """Distance traveled when the deviation first reaches threshold."""
        for step in self.steps:
            if step.deviation >= threshold:
                return step.step * self.speed_mps * self.t_delta
        return None


@dataclass(frozen=True)
class OnlineResult:
    mdcl_raw: float  # m, max distance from lane center, uncapped
    mdcl: float  # capped at MDCL_CAP and normalized to [0, 1]
    acceptable_online: bool
    scenario_id: Optional[str] = None


def mdcl_from_deviations(deviations: list[float]) -> tuple[float, float]:
    """(raw, normalized) maximum distance from center of lane."""
    if not deviations:
        raise SimulationError("cannot score an empty run")
    raw = max(deviations)
    return raw, min(raw, MDCL_CAP) / MDCL_CAP


def clamp_steering(value: float) -> float:
    return -1.0 if value < -1.0 else (1.0 if value > 1.0 else value)


def step_vehicle(
    state: VehicleState, steering_cmd: float, speed_mps: float, t_delta: float = T_DELTA
) -> VehicleState:
    """Advance the kinematic bicycle one step.

    A positive command steers right (clockwise).  The position advances
    by exactly speed*t_delta along the mean of the old and new headings,
    so per-step displacement is exact.
    """
    if speed_mps <= 0.0:
        raise ValueError("speed must be positive")
    if t_delta <= 0.0:
        raise ValueError("t_delta must be positive")
    cmd = clamp_steering(steering_cmd)
    delta = cmd * STEER_MAX_RAD
    dpsi = -(speed_mps / WHEELBASE) * math.tan(delta) * t_delta
    mean_heading = state.heading + 0.5 * dpsi
    return VehicleState(
        x=state.x + speed_mps * t_delta * math.cos(mean_heading),
        y=state.y + speed_mps * t_delta * math.sin(mean_heading),
        heading=wrap_angle(state.heading + dpsi),
        step_index=state.step_index + 1,
    )


def noise_sigma(scenario: Scenario) -> float:
    sigma = NOISE_BASE_SIGMA
    for attr, factors in NOISE_FACTORS.items():
        value = scenario.values.get(attr)
        if value is not None:
            sigma *= factors.get(str(value), 1.0)
    return sigma


class ObservationSynthesizer:
    """Derives observations from exact geometry plus seeded noise.

    Noise draws are a pure function of (scenario seed, step index), so
    repeated runs and replays see identical channels.
    """

    def __init__(self, road: RoadGeometry, scenario: Scenario, t_delta: float = T_DELTA):
        self.road = road
        self.scenario = scenario
        self.sigma = noise_sigma(scenario)
        # curvature is reported as the exact mean over the stretch of
        # road the vehicle covers during the next step
        self.lookahead = speed_mps(scenario) * t_delta
        self._noise = BlockNoise(STREAM_OBS_NOISE, scenario.seed)
        self._hint: Optional[float] = None

    def observe(self, state: VehicleState) -> tuple[Observation, float, float]:
        """(observation, arc position of the projection, true offset)."""
        s, offset, tangent = self.road.project(state.x, state.y, hint=self._hint)
        self._hint = s
        heading_error = wrap_angle(state.heading - tangent)
        curvature = self.road.mean_curvature(s, s + self.lookahead)
        off_road = abs(offset) > OFFSET_SATURATION
        seen_offset = offset
        if off_road:
            seen_offset = math.copysign(OFFSET_SATURATION, offset)
        channels = self._noise.row(state.step_index, NOISE_CHANNELS) * self.sigma
        obs = Observation(
            lateral_offset=seen_offset,
            heading_error=heading_error,
            curvature_ahead=curvature,
            noise=channels,
            off_road=off_road,
        )
        return obs, s, offset


def speed_mps(scenario: Scenario) -> float:
    return float(scenario.values["Vehicle.speed"]) / 3.6


def num_steps(duration: float, t_delta: float) -> int:
    # guard the floor against float rounding of e.g. 60 / 0.05
    return int(math.floor(duration / t_delta + 1e-9))


def run_online(
    scenario: Scenario,
    controller: "Controller",
    duration: float = DEFAULT_DURATION,
    t_delta: float = T_DELTA,
    oracle: Optional["Controller"] = None,
    tau_online: Optional[float] = None,
) -> tuple[Trace, OnlineResult]:
    """Closed-loop run of ``controller`` on the scenario's road.

    The trace records, per step: the observation, the ground-truth
    steering of the reference controller at the same state, the
    controller's command, the vehicle state, and the unsigned lane-center
    deviation.  The run spans floor(duration/t_delta) steps unless the
    vehicle reaches the road end first.
    """
    from .controllers import OracleController  # cycle-free at call time

    m = num_steps(duration, t_delta)
    if m < 2:
        raise ValueError("duration must yield at least two steps")
    road = build_road(scenario)
    v = speed_mps(scenario)
    synth = ObservationSynthesizer(road, scenario, t_delta=t_delta)
    reference = oracle if oracle is not None else OracleController()
    session = controller.start()
    oracle_session = reference.start()

    state = VehicleState(0.0, 0.0, 0.0, 0)
    steps: list[TraceStep] = []
    ended_early = False
    for j in range(m):
        obs, s, true_offset = synth.observe(state)
        try:
            theta_hat = clamp_steering(session.steer(obs))
        except Exception as exc:  # propagate with the failing step index
            raise ControllerFailure(j, exc) from exc
        theta = clamp_steering(oracle_session.steer(obs))
        steps.append(TraceStep(j, obs, theta, theta_hat, state, abs(true_offset)))
        if s >= road.total_length - 1e-9:
            ended_early = True
            break
        state = step_vehicle(state, theta_hat, v, t_delta)

    trace = Trace(
        steps=tuple(steps),
        t_delta=t_delta,
        scenario_id=scenario.id,
        speed_mps=v,
        ended_early=ended_early,
    )
    raw, norm = mdcl_from_deviations(trace.deviations())
    result = OnlineResult(
        mdcl_raw=raw,
        mdcl=norm,
        acceptable_online=norm < TAU_ONLINE,
        scenario_id=scenario.id,
    )
    return trace, result
