"""Constraint-aware n-way covering arrays over a domain model.

Every combination of values of every n attributes that can occur in some
valid scenario must appear in at least one generated row.  Construction
is greedy, one row at a time: a not-yet-covered target tuple seeds a
batch of candidate completions, and the candidate covering the most
uncovered targets wins (ties go to the lowest candidate index, keeping
results independent of any parallel scoring).

Tuple feasibility is decided by bounded completion search.  Tuples whose
search runs out of budget are kept as targets; generation fails loudly
if such a tuple later turns out to be uncoverable.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product
from typing import Optional, Sequence

from ._seeds import STREAM_COVER, spawn_seed
from .domain import (
    BudgetExceededError,
    DomainModel,
    Scenario,
    UnsatisfiableError,
    complete_partial,
    find_completion,
    validate,
)

CANDIDATE_FANOUT = 50
TUPLE_SEARCH_BUDGET = 50_000


class CoverageError(RuntimeError):
    """Generation could not cover every feasible target tuple."""


@dataclass(frozen=True)
class CoveringArray:
    strength: int
    scenarios: tuple[Scenario, ...]
    covered: int
    feasible_total: int
    attributes: tuple[str, ...]  # attributes the coverage target ranged over
    seed: int


@dataclass(frozen=True)
class CoverageReport:
    covered: int
    feasible_total: int
    missing: tuple[tuple[tuple[str, object], ...], ...]  # ((attr, value), ...) per tuple

    @property
    def complete(self) -> bool:
        return self.covered == self.feasible_total


def _target_tuples(
    dm: DomainModel, strength: int, attribute_names: Sequence[str]
) -> tuple[list[tuple[str, ...]], dict[tuple[str, ...], set[tuple]], int]:
    """Feasible value tuples per attribute subset.

    Returns (subset list, subset -> set of value tuples, undecided count).
    Subsets and tuples are enumerated in declaration order so the target
    structure is deterministic.
    """
    defs = [dm.attribute(name) for name in attribute_names]
    subsets = list(combinations(range(len(defs)), strength))
    targets: dict[tuple[str, ...], set[tuple]] = {}
    undecided = 0
    for subset in subsets:
        names = tuple(defs[i].name for i in subset)
        feasible: set[tuple] = set()
        for values in product(*(defs[i].domain_values() for i in subset)):
            fixed = dict(zip(names, values))
            found, exhausted = find_completion(dm, fixed, budget=TUPLE_SEARCH_BUDGET)
            if found is not None:
                feasible.add(values)
            elif exhausted:
                feasible.add(values)  # conservatively kept as a target
                undecided += 1
        targets[names] = feasible
    return [tuple(defs[i].name for i in subset) for subset in subsets], targets, undecided


def generate_covering_array(
    dm: DomainModel,
    strength: int,
    seed: int,
    attributes: Optional[Sequence[str]] = None,
    candidates: int = CANDIDATE_FANOUT,
) -> CoveringArray:
    """Greedy constraint-aware covering array of the given strength.

    ``attributes`` restricts the coverage target to a subset of the
    model's attributes (rows still assign every attribute; the remaining
    ones vary freely).  Deterministic for a given (model, strength, seed).
    """
    names = tuple(attributes) if attributes is not None else dm.attribute_names
    for name in names:
        dm.attribute(name)  # raises on unknown names
    if strength < 1 or strength > len(names):
        raise ValueError(f"strength must be in 1..{len(names)}, got {strength}")

    subset_names, targets, _ = _target_tuples(dm, strength, names)
    feasible_total = sum(len(v) for v in targets.values())
    # deterministic work queue of (subset, values)
    queue = [
        (subset, values)
        for subset in subset_names
        for values in sorted(targets[subset], key=repr)
    ]
    uncovered = {subset: set(values) for subset, values in targets.items()}
    remaining = feasible_total

    rows: list[Scenario] = []
    pointer = 0
    while remaining > 0:
        # next still-uncovered seed tuple
        while pointer < len(queue):
            subset, values = queue[pointer]
            if values in uncovered[subset]:
                break
            pointer += 1
        else:
            break
        fixed = dict(zip(subset, values))

        best_row: Optional[Scenario] = None
        best_score = -1
        for c in range(candidates):
            row_seed = spawn_seed(STREAM_COVER, seed, len(rows), c)
            try:
                candidate = complete_partial(dm, fixed, row_seed)
            except UnsatisfiableError:
                # the undecided seed tuple is infeasible after all
                uncovered[subset].discard(values)
                remaining -= 1
                feasible_total -= 1
                best_row = None
                break
            except BudgetExceededError as exc:
                raise CoverageError(
                    f"cannot decide coverability of tuple {fixed!r}: {exc}"
                ) from exc
            score = _score(candidate, uncovered)
            if score > best_score:
                best_row, best_score = candidate, score
        if best_row is None:
            continue
        rows.append(
            Scenario(
                id=f"ca{strength}-{len(rows):04d}",
                values=best_row.values,
                seed=best_row.seed,
            )
        )
        remaining -= _mark_covered(rows[-1], uncovered)

    if remaining > 0:
        leftovers = [
            dict(zip(subset, values))
            for subset, values_set in uncovered.items()
            for values in sorted(values_set, key=repr)
        ]
        raise CoverageError(f"{remaining} feasible tuples could not be covered: {leftovers[:5]}")
    return CoveringArray(
        strength=strength,
        scenarios=tuple(rows),
        covered=feasible_total,
        feasible_total=feasible_total,
        attributes=names,
        seed=seed,
    )


def _score(candidate: Scenario, uncovered: dict[tuple[str, ...], set[tuple]]) -> int:
    score = 0
    values = candidate.values
    for subset, remaining in uncovered.items():
        if remaining and tuple(values[name] for name in subset) in remaining:
            score += 1
    return score


def _mark_covered(row: Scenario, uncovered: dict[tuple[str, ...], set[tuple]]) -> int:
    removed = 0
    values = row.values
    for subset, remaining in uncovered.items():
        if not remaining:
            continue
        combo = tuple(values[name] for name in subset)
        if combo in remaining:
            remaining.discard(combo)
            removed += 1
    return removed


def coverage_report(
    dm: DomainModel,
    scenarios: Sequence[Scenario],
    strength: int,
    attributes: Optional[Sequence[str]] = None,
) -> CoverageReport:
    """Audit n-way coverage of a scenario list by exact enumeration."""
    names = tuple(attributes) if attributes is not None else dm.attribute_names
    if strength < 1 or strength > len(names):
        raise ValueError(f"strength must be in 1..{len(names)}, got {strength}")
    for scenario in scenarios:
        violated = validate(dm, scenario.values)
        if violated:
            raise ValueError(
                f"scenario {scenario.id} violates constraints: "
                + "; ".join(str(c) for c in violated)
            )
    subset_names, targets, _ = _target_tuples(dm, strength, names)
    seen: dict[tuple[str, ...], set[tuple]] = {subset: set() for subset in subset_names}
    for scenario in scenarios:
        for subset in subset_names:
            seen[subset].add(tuple(scenario.values[name] for name in subset))
    covered = 0
    missing: list[tuple[tuple[str, object], ...]] = []
    for subset in subset_names:
        for values in sorted(targets[subset], key=repr):
            if values in seen[subset]:
                covered += 1
            else:
                missing.append(tuple(zip(subset, values)))
    feasible_total = sum(len(v) for v in targets.values())
    return CoverageReport(covered=covered, feasible_total=feasible_total, missing=tuple(missing))
