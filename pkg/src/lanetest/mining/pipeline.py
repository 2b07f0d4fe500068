"""Three-step agreement-rule mining over a scenario domain.

Step 1 labels a pairwise covering array of scenarios with the agreement
between their offline and online verdicts, trains a random forest on the
labeled vectors, and selects important attributes from out-of-bag
permutation importance.  Step 2 densifies coverage of the selected
attributes (3-way, or all combinations when two or fewer are selected),
leaving the other attributes random, and induces ordered rules with
RIPPER over the union of both batches.  Step 3 confirms every rule by
actively sampling scenarios that satisfy its antecedent until the 95%
Wilson interval of its accuracy is narrower than the target width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .._parallel import WorkerPool
from .._seeds import spawn_seed
from ..controllers import ControllerSpec, make_controller, run_reference
from ..covergen import generate_covering_array
from ..domain import DomainModel, Scenario
from ..offline import classify, replay
from ..sim import DEFAULT_DURATION, T_DELTA, run_online
from .confirm import ConfirmedRule, confirm_rule
from .encode import DatasetEncoder
from .forest import (
    ImportanceResult,
    SelectionResult,
    permutation_importance,
    select_attributes,
    train_forest,
)
from .ripper import Condition, Rule, RuleSet, _annotate, ripper

LABELS = ("agree", "disagree")  # encoded as 0 / 1


@dataclass(frozen=True)
class EvaluationRecord:
    """One scenario's full offline-plus-online evaluation."""

    phase: str  # "s1", "s2", or "confirm-<i>"
    scenario: Scenario
    mae: float
    rmse: float
    mdcl_raw: float
    mdcl: float
    acceptable_offline: bool
    acceptable_online: bool
    label: str


@dataclass(frozen=True)
class MiningReport:
    controller: str
    seed: int
    ci_width: float
    budget: int
    degenerate: bool
    importance: Optional[ImportanceResult]
    selected: SelectionResult
    ruleset: RuleSet
    confirmed: tuple[ConfirmedRule, ...]
    evaluations: tuple[EvaluationRecord, ...]
    encoder: DatasetEncoder

    def rule_text(self, rule: Rule) -> str:
        if rule.is_default:
            return "Otherwise"
        names = self.encoder.attribute_names
        parts = []
        for cond in rule.conditions:
            name = names[cond.feature]
            if cond.op == "=" and len(cond.codes) == 1:
                parts.append(f"{name} = {self.encoder.code_display(name, cond.codes[0])}")
            else:
                shown = ", ".join(self.encoder.code_display(name, c) for c in cond.codes)
                parts.append(f"{name} in {{{shown}}}")
        return "If " + " and ".join(parts)

    def label_text(self, rule: Rule) -> str:
        return LABELS[rule.label]


def evaluate_scenario(
    scenario: Scenario,
    spec: ControllerSpec,
    duration: float = DEFAULT_DURATION,
    t_delta: float = T_DELTA,
    phase: str = "",
) -> EvaluationRecord:
    """Offline replay on the reference dataset plus a closed-loop run."""
    reference = run_reference(scenario, duration=duration, t_delta=t_delta)
    controller = make_controller(spec, scenario)
    offline_result = replay(controller, reference)
    _, online_result = run_online(scenario, controller, duration=duration, t_delta=t_delta)
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
    scenario, spec, duration, t_delta, phase = item
    return evaluate_scenario(scenario, spec, duration=duration, t_delta=t_delta, phase=phase)


def _reid(scenarios: Sequence[Scenario], prefix: str) -> list[Scenario]:
    return [
        Scenario(id=f"{prefix}-{i:04d}", values=s.values, seed=s.seed)
        for i, s in enumerate(scenarios)
    ]


def mine_pipeline(
    dm: DomainModel,
    spec: ControllerSpec,
    seed: int,
    ci_width: float = 0.2,
    budget: int = 200,
    duration: float = DEFAULT_DURATION,
    t_delta: float = T_DELTA,
    jobs: int = 1,
    n_trees: int = 200,
    importance_reps: int = 20,
) -> MiningReport:
    """Run the full three-step mining workflow. Deterministic per seed."""
    evaluations: list[EvaluationRecord] = []
    with WorkerPool(jobs) as pool:

        def evaluate_batch(scenarios: Sequence[Scenario], phase: str) -> list[EvaluationRecord]:
            items = [(s, spec, duration, t_delta, phase) for s in scenarios]
            return pool.map(_evaluate_item, items)

        # Step 1: pairwise covering array, labeled
        step1 = _reid(
            generate_covering_array(dm, 2, spawn_seed(seed, 1)).scenarios, "s1"
        )
        records1 = evaluate_batch(step1, "s1")
        evaluations.extend(records1)
        encoder = DatasetEncoder(dm, step1)
        X1 = encoder.encode_matrix(step1)
        y1 = np.array([LABELS.index(r.label) for r in records1], dtype=np.int64)
        kinds = [encoder.feature_kind(n) for n in encoder.attribute_names]
        n_codes = [encoder.n_codes(n) for n in encoder.attribute_names]

        if np.unique(y1).size < 2:
            ruleset = ripper(X1, y1, n_codes, seed=spawn_seed(seed, 4), allow_single_label=True)
            selected = SelectionResult(names=(), low_confidence=True)
            importance = None
        else:
            forest = train_forest(
                X1, y1, kinds, n_codes, n_trees=n_trees, seed=spawn_seed(seed, 2)
            )
            importance = permutation_importance(
                forest, encoder.attribute_names, repetitions=importance_reps,
                seed=spawn_seed(seed, 3),
            )
            selected = select_attributes(importance)

            # Step 2: dense coverage of the selected attributes; the rest random
            sel_names = [n for n in encoder.attribute_names if n in selected.names]
            strength = 3 if len(sel_names) >= 3 else len(sel_names)
            step2 = _reid(
                generate_covering_array(
                    dm, strength, spawn_seed(seed, 5), attributes=sel_names
                ).scenarios,
                "s2",
            )
            records2 = evaluate_batch(step2, "s2")
            evaluations.extend(records2)

            union = step1 + step2
            X = encoder.encode_matrix(union)
            y = np.array(
                [LABELS.index(r.label) for r in records1 + records2], dtype=np.int64
            )
            sel_pos = [encoder.attribute_names.index(n) for n in sel_names]
            ruleset_local = ripper(
                X[:, sel_pos],
                y,
                [n_codes[p] for p in sel_pos],
                seed=spawn_seed(seed, 4),
                allow_single_label=True,
            )
            # re-annotate support/accuracy against the full-width matrix
            ruleset = _annotate(_remap_features(ruleset_local, sel_pos), X, y)

        # Step 3: confirm every rule
        confirmed: list[ConfirmedRule] = []
        by_id: dict[str, EvaluationRecord] = {}

        for i, rule in enumerate(ruleset.rules):
            phase = f"confirm-{i}"

            def batch_runner(scenarios: list[Scenario]) -> list[str]:
                records = evaluate_batch(scenarios, phase)
                for record in records:
                    by_id[record.scenario.id] = record
                return [r.label for r in records]

            result = confirm_rule(
                rule,
                dm,
                label_oracle=lambda s: batch_runner([s])[0],
                encoder=encoder,
                rule_label=LABELS[rule.label],
                ci_width=ci_width,
                budget=budget,
                seed=spawn_seed(seed, 6, i),
                exclude=ruleset.rules[:i] if rule.is_default else (),
                batch_runner=batch_runner,
                batch_size=max(1, jobs),
            )
            confirmed.append(result)
            # persist only the consumed samples so output does not depend
            # on worker count
            evaluations.extend(by_id[sid] for sid in result.sample_ids)
            by_id.clear()

    return MiningReport(
        controller=spec.name or spec.kind,
        seed=seed,
        ci_width=ci_width,
        budget=budget,
        degenerate=ruleset.degenerate,
        importance=importance,
        selected=selected,
        ruleset=ruleset,
        confirmed=tuple(confirmed),
        evaluations=tuple(evaluations),
        encoder=encoder,
    )


def _remap_features(ruleset: RuleSet, positions: Sequence[int]) -> RuleSet:
    rules = []
    for rule in ruleset.rules:
        conditions = tuple(
            Condition(feature=positions[c.feature], op=c.op, codes=c.codes)
            for c in rule.conditions
        )
        rules.append(
            Rule(
                conditions=conditions,
                label=rule.label,
                is_default=rule.is_default,
                support=rule.support,
                accuracy=rule.accuracy,
                ci=rule.ci,
            )
        )
    return RuleSet(
        rules=tuple(rules),
        positive_label=ruleset.positive_label,
        degenerate=ruleset.degenerate,
    )


def report_to_json_dict(report: MiningReport) -> dict:
    importances = []
    if report.importance is not None:
        importances = [
            {"attribute": name, "mean_drop": mean, "std": std}
            for name, mean, std in report.importance.ranking()
        ]
    rules = []
    for rule, confirmed in zip(report.ruleset.rules, report.confirmed):
        rules.append(
            {
                "rule": report.rule_text(rule),
                "label": report.label_text(rule),
                "support": rule.support,
                "train_accuracy": rule.accuracy,
                "confirmed_accuracy": confirmed.accuracy,
                "ci_low": confirmed.ci[0],
                "ci_high": confirmed.ci[1],
                "n_confirm": confirmed.trials,
                "converged": confirmed.converged,
            }
        )
    return {
        "controller": report.controller,
        "seed": report.seed,
        "ci_width": report.ci_width,
        "budget": report.budget,
        "degenerate": report.degenerate,
        "selected_attributes": list(report.selected.names),
        "selection_low_confidence": report.selected.low_confidence,
        "importances": importances,
        "rules": rules,
        "evaluations": len(report.evaluations),
    }


def report_to_markdown(report: MiningReport) -> str:
    lines = [
        f"# Rule mining report: {report.controller}",
        "",
        f"- seed: {report.seed}",
        f"- target CI width: {report.ci_width}",
        f"- confirmation budget: {report.budget} samples/rule",
    ]
    if report.degenerate:
        lines.append("- **degenerate**: training labels were single-class")
    lines.append("")
    if report.importance is not None:
        lines += ["## Selected attributes", ""]
        if report.selected.low_confidence:
            lines.append("(low confidence: no attribute cleared two standard errors)")
            lines.append("")
        lines += ["| Attribute | Mean OOB drop | Std | Selected |", "|---|---|---|---|"]
        for name, mean, std in report.importance.ranking():
            mark = "yes" if name in report.selected.names else ""
            lines.append(f"| {name} | {mean:.4f} | {std:.4f} | {mark} |")
        lines.append("")
    lines += ["## Rules", "", "| ID | Rule | Label | Accuracy |", "|---|---|---|---|"]
    for i, (rule, confirmed) in enumerate(zip(report.ruleset.rules, report.confirmed), start=1):
        half = (confirmed.ci[1] - confirmed.ci[0]) / 2.0
        flag = "" if confirmed.converged else " (budget exhausted)"
        lines.append(
            f"| R{i} | {report.rule_text(rule)} | {report.label_text(rule)} "
            f"| {confirmed.accuracy:.2f} +- {half:.2f} (n={confirmed.trials}){flag} |"
        )
    lines.append("")
    return "\n".join(lines)
