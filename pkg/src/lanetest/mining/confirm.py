"""Statistical confirmation of mined rules by active sampling.

A rule's accuracy estimate from the training vectors rests on few
samples.  Confirmation repeatedly generates fresh scenarios satisfying
the rule's antecedent, labels each with the full offline-plus-online
evaluation, and recomputes the Wilson score interval of the accuracy
until the interval is narrower than a target width or a sampling budget
runs out.  Budget exhaustion is flagged on the result, never silent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .._seeds import STREAM_CONFIRM, make_generator, spawn_seed
from ..domain import DomainModel, Scenario, UnsatisfiableError, complete_partial
from .encode import DatasetEncoder
from .ripper import Rule

Z_95 = 1.959964  # two-sided 95% normal quantile
DEFAULT_BUDGET = 200
_SAMPLE_RETRIES = 50


class ConfirmationError(RuntimeError):
    pass


def wilson_ci(successes: int, trials: int, z: float = Z_95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    The k=0 lower bound and k=n upper bound are exactly 0 and 1.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 <= successes <= trials:
        raise ValueError("successes must be within 0..trials")
    n = float(trials)
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n))
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == trials else min(1.0, center + half)
    return (low, high)


def wilson_width(successes: int, trials: int, z: float = Z_95) -> float:
    low, high = wilson_ci(successes, trials, z)
    return high - low


@dataclass(frozen=True)
class ConfirmedRule:
    rule: Rule
    successes: int
    trials: int
    accuracy: float
    ci: tuple[float, float]
    converged: bool  # False when the budget ran out first
    sample_ids: tuple[str, ...]  # scenario ids, in evaluation order
    sample_labels: tuple[str, ...]  # oracle labels, aligned with sample_ids

    @property
    def half_width_note(self) -> str:
        half = (self.ci[1] - self.ci[0]) / 2.0
        return f"{self.accuracy:.2f} +- {half:.2f}"


def sample_matching_scenario(
    rule: Rule,
    dm: DomainModel,
    encoder: DatasetEncoder,
    seed: int,
    exclude: Sequence[Rule] = (),
) -> Scenario:
    """A valid scenario whose encoding satisfies the rule's antecedent.

    Antecedent conditions pin attribute values (a concrete value is
    drawn uniformly from the code's bin for discretized attributes); the
    remaining attributes are completed at random.  For a default rule,
    ``exclude`` holds the preceding rules whose antecedents the sample
    must NOT satisfy, mirroring its "none of the above" semantics.
    """
    rng = make_generator(STREAM_CONFIRM, seed)
    names = encoder.attribute_names
    for attempt in range(_SAMPLE_RETRIES):
        fixed = {}
        for cond in rule.conditions:
            name = names[cond.feature]
            code = cond.codes[int(rng.integers(len(cond.codes)))]
            choices = encoder.concrete_values(name, code)
            if not choices:
                raise ConfirmationError(
                    f"antecedent references empty bin {encoder.code_display(name, code)!r}"
                )
            fixed[name] = choices[int(rng.integers(len(choices)))]
        try:
            scenario = complete_partial(dm, fixed, spawn_seed(STREAM_CONFIRM, seed, attempt))
        except UnsatisfiableError as exc:
            if not rule.conditions:
                raise
            continue_outer = attempt < _SAMPLE_RETRIES - 1
            if continue_outer:
                continue
            raise ConfirmationError(
                f"rule antecedent is unsatisfiable in the domain model: {exc}"
            ) from exc
        if exclude:
            row = encoder.encode_scenario(scenario)
            if any(
                all(c.matches_row(row) for c in other.conditions)
                for other in exclude
                if not other.is_default
            ):
                continue
        return scenario
    raise ConfirmationError(
        "could not sample a scenario matching the rule antecedent "
        f"within {_SAMPLE_RETRIES} attempts"
    )


def confirm_rule(
    rule: Rule,
    dm: DomainModel,
    label_oracle: Callable[[Scenario], str],
    encoder: DatasetEncoder,
    rule_label: str,
    ci_width: float = 0.2,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    exclude: Sequence[Rule] = (),
    batch_runner: Optional[Callable[[list[Scenario]], list[str]]] = None,
    batch_size: int = 1,
) -> ConfirmedRule:
    """Sample until the Wilson interval of the rule accuracy is narrow.

    ``label_oracle`` maps a scenario to its agreement label.  Samples are
    seeded by index, so results do not depend on batch size; a
    ``batch_runner`` may evaluate a batch of scenarios in parallel, and
    any samples past the stopping point are discarded unchanged.
    """
    if not 0.0 < ci_width <= 1.0:
        raise ValueError("ci_width must be in (0, 1]")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    successes = 0
    trials = 0
    ids: list[str] = []
    labels: list[str] = []
    converged = False
    while trials < budget and not converged:
        count = min(batch_size, budget - trials) if batch_size > 1 else 1
        scenarios = [
            sample_matching_scenario(
                rule, dm, encoder, spawn_seed(STREAM_CONFIRM, seed, trials + i), exclude
            )
            for i in range(count)
        ]
        if batch_runner is not None:
            batch_labels = batch_runner(scenarios)
        else:
            batch_labels = [label_oracle(s) for s in scenarios]
        for scenario, label in zip(scenarios, batch_labels):
            trials += 1
            successes += int(label == rule_label)
            ids.append(scenario.id)
            labels.append(label)
            if wilson_width(successes, trials) < ci_width:
                converged = True
                break
    low, high = wilson_ci(successes, trials)
    return ConfirmedRule(
        rule=rule,
        successes=successes,
        trials=trials,
        accuracy=successes / trials,
        ci=(low, high),
        converged=converged,
        sample_ids=tuple(ids),
        sample_labels=tuple(labels),
    )
