"""Ordered conjunctive-rule induction (IREP* core of RIPPER).

Rules for the minority class are grown one at a time on a 2/3 split of
the remaining data (conditions chosen by FOIL information gain until no
negatives are covered), pruned on the held-out 1/3 by maximizing
(p - n) / (p + n) over antecedent prefixes, and accepted until the
ruleset's description length exceeds the best seen by more than a fixed
bit budget, a rule covers no positives, or a rule is worse than random
on its prune split.  A default rule labeled with the majority of the
uncovered data closes the set; prediction is first-match.

The global optimization phase of full RIPPER (rule re-growing) is
deliberately omitted; at the data sizes this pipeline produces it does
not change the learned rules enough to matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .._seeds import STREAM_LABEL_NOISE, make_generator

MDL_SLACK_BITS = 64.0


@dataclass(frozen=True)
class Condition:
    """Equality or membership test on one encoded attribute."""

    feature: int  # column index into the encoded matrix
    op: str  # "=" or "in"
    codes: tuple[int, ...]  # single code for "=", several for "in"

    def matches(self, X: np.ndarray) -> np.ndarray:
        col = X[:, self.feature]
        if self.op == "=":
            return col == self.codes[0]
        return np.isin(col, self.codes)

    def matches_row(self, row: Sequence[int]) -> bool:
        return row[self.feature] in self.codes


@dataclass(frozen=True)
class Rule:
    conditions: tuple[Condition, ...]
    label: int  # encoded class this rule predicts
    is_default: bool = False
    support: int = 0  # training vectors matching the antecedent
    accuracy: float = 0.0  # correct / matching, on training data
    ci: tuple[float, float] = (0.0, 1.0)  # 95% interval on the accuracy

    def matches(self, X: np.ndarray) -> np.ndarray:
        mask = np.ones(X.shape[0], dtype=bool)
        for cond in self.conditions:
            mask &= cond.matches(X)
        return mask


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...]  # ordered; last rule is the default
    positive_label: int
    degenerate: bool = False  # single-label training data

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64)
        out = np.full(X.shape[0], self.rules[-1].label, dtype=np.int64)
        assigned = np.zeros(X.shape[0], dtype=bool)
        for rule in self.rules:
            mask = rule.matches(X) & ~assigned
            out[mask] = rule.label
            assigned |= mask
        return out

    def first_match_index(self, row: Sequence[int]) -> int:
        for i, rule in enumerate(self.rules):
            if rule.is_default or all(c.matches_row(row) for c in rule.conditions):
                return i
        raise AssertionError("default rule must match everything")


def _foil_gain(p: float, n: float, p0: float, n0: float) -> float:
    if p == 0:
        return -math.inf
    return p * (math.log2(p / (p + n)) - math.log2(p0 / (p0 + n0)))


def _log2_comb(n: int, k: int) -> float:
    if k < 0 or k > n:
        return 0.0
    return (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)) / math.log(2.0)


def _grow_rule(Xg, yg, n_codes) -> list[Condition]:
    """Greedy FOIL-gain growth until the rule covers no grow negatives."""
    conditions: list[Condition] = []
    covered = np.ones(Xg.shape[0], dtype=bool)
    used: set[int] = set()
    while True:
        p0 = float((yg[covered] == 1).sum())
        n0 = float((yg[covered] == 0).sum())
        if n0 == 0 or p0 == 0:
            break
        best: Optional[tuple[float, int, int]] = None  # (gain, feature, code)
        for feat in range(Xg.shape[1]):
            if feat in used:
                continue
            col = Xg[:, feat]
            for code in range(n_codes[feat]):
                mask = covered & (col == code)
                p = float((yg[mask] == 1).sum())
                n = float((yg[mask] == 0).sum())
                gain = _foil_gain(p, n, p0, n0)
                if gain > 0 and (best is None or gain > best[0]):
                    best = (gain, feat, code)
        if best is None:
            break
        _, feat, code = best
        conditions.append(Condition(feature=feat, op="=", codes=(code,)))
        used.add(feat)
        covered &= Xg[:, feat] == code
    return conditions


def _prune_rule(conditions: list[Condition], Xp, yp) -> list[Condition]:
    """Keep the antecedent prefix maximizing (p - n)/(p + n) on the prune split."""
    if not conditions or Xp.shape[0] == 0:
        return conditions
    best_len = len(conditions)
    best_value = -math.inf
    mask = np.ones(Xp.shape[0], dtype=bool)
    values: list[float] = []
    for cond in conditions:
        mask &= cond.matches(Xp)
        p = float((yp[mask] == 1).sum())
        n = float((yp[mask] == 0).sum())
        values.append((p - n) / (p + n) if p + n > 0 else -math.inf)
    for length in range(1, len(conditions) + 1):
        value = values[length - 1]
        # ties keep the longer antecedent: a silent prune split should
        # not undo grow-split evidence
        if value >= best_value - 1e-12:
            best_value = max(best_value, value)
            best_len = length
    return conditions[:best_len]


def _description_length(
    rules: list[list[Condition]], X, y, n_possible_conditions: int
) -> float:
    """Total bits: antecedent encoding plus classification exceptions."""
    theory = 0.0
    covered = np.zeros(X.shape[0], dtype=bool)
    for conditions in rules:
        k = len(conditions)
        theory += math.log2(k + 1) + _log2_comb(n_possible_conditions, k)
        mask = np.ones(X.shape[0], dtype=bool)
        for cond in conditions:
            mask &= cond.matches(X)
        covered |= mask
    cov = int(covered.sum())
    uncov = int((~covered).sum())
    fp = int((y[covered] == 0).sum())  # covered but negative
    fn = int((y[~covered] == 1).sum())  # uncovered positives
    data = (
        math.log2(cov + 1)
        + _log2_comb(cov, fp)
        + math.log2(uncov + 1)
        + _log2_comb(uncov, fn)
    )
    return theory + data


class RipperClassifier:
    """Scikit-style wrapper around the rule induction procedure."""

    def __init__(
        self,
        prune_fraction: float = 1.0 / 3.0,
        mdl_slack_bits: float = MDL_SLACK_BITS,
        random_state: int = 0,
    ):
        self.prune_fraction = prune_fraction
        self.mdl_slack_bits = mdl_slack_bits
        self.random_state = random_state

    def get_params(self) -> dict:
        return {
            "prune_fraction": self.prune_fraction,
            "mdl_slack_bits": self.mdl_slack_bits,
            "random_state": self.random_state,
        }

    def fit(
        self,
        X: np.ndarray,
        y: np.ndarray,
        n_codes: Sequence[int],
        allow_single_label: bool = False,
    ) -> "RipperClassifier":
        X = np.asarray(X, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        n = X.shape[0]
        labels, counts = np.unique(y, return_counts=True)
        if labels.size < 2:
            if not allow_single_label:
                raise ValueError("training data contains a single label")
            default = Rule(
                conditions=(),
                label=int(labels[0]),
                is_default=True,
                support=n,
                accuracy=1.0,
            )
            self.ruleset_ = RuleSet(rules=(default,), positive_label=int(labels[0]),
                                    degenerate=True)
            return self
        if n < 10:
            raise ValueError(f"need at least 10 training vectors, got {n}")

        # minority class is the positive (rule-target) class; ties take
        # the higher encoded label so "disagree" wins when balanced
        if counts[0] == counts[1]:
            positive = int(labels[1])
        else:
            positive = int(labels[int(np.argmin(counts))])
        y_bin = (y == positive).astype(np.int64)
        n_possible = int(sum(n_codes))

        rng = make_generator(STREAM_LABEL_NOISE, self.random_state)
        remaining = np.arange(n)
        accepted: list[list[Condition]] = []
        best_dl = math.inf
        while (y_bin[remaining] == 1).any():
            order = remaining[rng.permutation(remaining.size)]
            cut = max(1, int(round(order.size * (1.0 - self.prune_fraction))))
            grow_idx, prune_idx = order[:cut], order[cut:]
            conditions = _grow_rule(X[grow_idx], y_bin[grow_idx], n_codes)
            if not conditions:
                break
            conditions = _prune_rule(conditions, X[prune_idx], y_bin[prune_idx])
            mask = np.ones(remaining.size, dtype=bool)
            for cond in conditions:
                mask &= cond.matches(X[remaining])
            p = int((y_bin[remaining][mask] == 1).sum())
            q = int((y_bin[remaining][mask] == 0).sum())
            if p == 0 or q > p:
                break  # covers no positives, or worse than random
            candidate = accepted + [conditions]
            dl = _description_length(candidate, X, y_bin, n_possible)
            if dl > best_dl + self.mdl_slack_bits:
                break
            best_dl = min(best_dl, dl)
            accepted.append(conditions)
            remaining = remaining[~mask]

        default_pool = y[remaining] if remaining.size else y
        values, vcounts = np.unique(default_pool, return_counts=True)
        default_label = int(values[int(np.argmax(vcounts))])

        rules = [
            Rule(conditions=tuple(conds), label=positive) for conds in accepted
        ]
        rules.append(Rule(conditions=(), label=default_label, is_default=True))
        ruleset = RuleSet(rules=tuple(rules), positive_label=positive)
        self.ruleset_ = _annotate(ruleset, X, y)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        if not hasattr(self, "ruleset_"):
            raise RuntimeError("fit the classifier before predicting")
        return self.ruleset_.predict(X)


def _annotate(ruleset: RuleSet, X: np.ndarray, y: np.ndarray) -> RuleSet:
    """Fill support and accuracy per rule on the full training data.

    Non-default rules count raw antecedent matches; the default rule
    counts the vectors no earlier rule matches.
    """
    taken = np.zeros(X.shape[0], dtype=bool)
    annotated = []
    for rule in ruleset.rules:
        if rule.is_default:
            mask = ~taken
        else:
            mask = rule.matches(X)
        support = int(mask.sum())
        correct = int((y[mask] == rule.label).sum())
        accuracy = correct / support if support else 0.0
        annotated.append(replace(rule, support=support, accuracy=accuracy))
        taken |= mask
    return RuleSet(
        rules=tuple(annotated),
        positive_label=ruleset.positive_label,
        degenerate=ruleset.degenerate,
    )


def ripper(
    X: np.ndarray,
    y: np.ndarray,
    n_codes: Sequence[int],
    seed: int = 0,
    allow_single_label: bool = False,
) -> RuleSet:
    clf = RipperClassifier(random_state=seed)
    clf.fit(X, y, n_codes, allow_single_label=allow_single_label)
    return clf.ruleset_
