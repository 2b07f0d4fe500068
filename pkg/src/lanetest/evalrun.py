"""Shared per-scenario evaluation: offline replay plus closed-loop run."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ._parallel import WorkerPool
from .controllers import ControllerSpec, make_controller, run_reference
from .domain import Scenario
from .offline import classify, replay
from .sim import DEFAULT_DURATION, T_DELTA, run_online


@dataclass(frozen=True)
class EvaluationRecord:
    """One scenario's full offline-plus-online evaluation."""

    phase: str  # "s1", "s2", "confirm-<i>", or an experiment tag
    scenario: Scenario
    mae: float
    rmse: float
    mdcl_raw: float
    mdcl: float
    acceptable_offline: bool
    acceptable_online: bool
    label: str


def evaluate_scenario(
    scenario: Scenario,
    spec: ControllerSpec,
    duration: float = DEFAULT_DURATION,
    t_delta: float = T_DELTA,
    phase: str = "",
    tau_offline: float | None = None,
    tau_online: float | None = None,
) -> EvaluationRecord:
    """Replay the controller on the scenario's reference dataset and run
    it closed-loop, then label the agreement of the two verdicts."""
    reference = run_reference(scenario, duration=duration, t_delta=t_delta)
    controller = make_controller(spec, scenario)
    offline_result = replay(controller, reference, tau_offline=tau_offline)
    _, online_result = run_online(
        scenario, controller, duration=duration, t_delta=t_delta, tau_online=tau_online
    )
    record = classify(offline_result, online_result)
    return EvaluationRecord(
        phase=phase,
        scenario=scenario,
        mae=offline_result.mae,
        rmse=offline_result.rmse,
        mdcl_raw=online_result.mdcl_raw,
        mdcl=online_result.mdcl,
        acceptable_offline=offline_result.acceptable_offline,
        acceptable_online=online_result.acceptable_online,
        label=record.label,
    )


def _evaluate_item(item) -> EvaluationRecord:
    scenario, spec, duration, t_delta, phase, tau_off, tau_on = item
    return evaluate_scenario(
        scenario, spec, duration=duration, t_delta=t_delta, phase=phase,
        tau_offline=tau_off, tau_online=tau_on,
    )


def evaluate_batch(
    pool: WorkerPool,
    scenarios: Sequence[Scenario],
    spec: ControllerSpec,
    duration: float = DEFAULT_DURATION,
    t_delta: float = T_DELTA,
    phase: str = "",
    tau_offline: float | None = None,
    tau_online: float | None = None,
) -> list[EvaluationRecord]:
    items = [
        (s, spec, duration, t_delta, phase, tau_offline, tau_online) for s in scenarios
    ]
    return pool.map(_evaluate_item, items)
