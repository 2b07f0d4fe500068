"""Scenario domain model: typed attributes, constraints, sampling.

A domain model declares the attribute space that scenarios range over
(road, vehicle, weather and environment properties) plus boolean
constraints restricting valid combinations.  A scenario is one complete,
constraint-satisfying assignment of values to the attributes, tagged
with a 64-bit seed so that every downstream computation (road layout,
noise, controller degradation) is reproducible.

Domain models are loaded from YAML with two sections::

    attributes:
      - name: Road.type
        group: Road
        kind: enum
        values: [Straight, Curved, SteepCurved]
      - name: Vehicle.speed
        group: Vehicle
        kind: int
        min: 10
        max: 40
        unit: km/h
    constraints:
      - "Road.type = SteepCurved implies Vehicle.speed <= 20"

The constraint expression grammar is documented in
:mod:`lanetest.constraints`.  ``load_domain`` / ``dump_domain``
round-trip losslessly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Optional, Sequence

import yaml

from . import constraints as cexpr
from ._seeds import STREAM_SCENARIO, make_generator

Value = cexpr.Value
Assignment = dict[str, Value]

GROUPS = ("Road", "Vehicle", "Weather", "Environment")

# Rejection sampling gives up after this many draws; a pathological
# model then surfaces as an explicit error instead of a hang.
SAMPLING_CAP = 10_000
# Node budget for the systematic completion search (one node = one
# value tried for one attribute).
SEARCH_BUDGET = 200_000


class DomainError(ValueError):
    """Malformed domain model: bad syntax or semantic violation."""


class UnsatisfiableError(DomainError):
    """No assignment satisfies the constraints (proven by search)."""


class BudgetExceededError(RuntimeError):
    """A bounded search or sampling loop ran out of budget."""


@dataclass(frozen=True)
class AttributeDef:
    """One declared attribute: either an enumeration or a bounded integer."""

    name: str
    group: str
    kind: str  # "enum" or "int"
    values: tuple[str, ...] = ()
    min: int = 0
    max: int = 0
    unit: str = ""

    def __post_init__(self):
        if self.group not in GROUPS:
            raise DomainError(f"{self.name}: unknown group {self.group!r}")
        if self.kind == "enum":
            if not self.values:
                raise DomainError(f"{self.name}: enumeration must be non-empty")
            if len(set(self.values)) != len(self.values):
                raise DomainError(f"{self.name}: duplicate enumeration values")
        elif self.kind == "int":
            if self.min > self.max:
                raise DomainError(f"{self.name}: min {self.min} > max {self.max}")
        else:
            raise DomainError(f"{self.name}: kind must be 'enum' or 'int', got {self.kind!r}")

    @property
    def cardinality(self) -> int:
        if self.kind == "enum":
            return len(self.values)
        return self.max - self.min + 1

    def domain_values(self) -> tuple[Value, ...]:
        """All admissible values, in declaration (or numeric) order."""
        if self.kind == "enum":
            return self.values
        return tuple(range(self.min, self.max + 1))

    def admits(self, value: Value) -> bool:
        if self.kind == "enum":
            return isinstance(value, str) and value in self.values
        return isinstance(value, int) and not isinstance(value, bool) and self.min <= value <= self.max


@dataclass(frozen=True)
class Constraint:
    """A parsed constraint with its source text preserved for reporting."""

    text: str
    expression: cexpr.Expr

    def evaluate(self, assignment: Mapping[str, Value]) -> bool:
        return self.expression.evaluate(assignment)

    def references(self) -> frozenset[str]:
        return self.expression.references()

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class Scenario:
    """A complete, valid assignment plus its reproducibility seed."""

    id: str
    values: Assignment
    seed: int

    def __getitem__(self, name: str) -> Value:
        return self.values[name]


class DomainModel:
    """Immutable attribute space with constraints.

    Construction validates attribute definitions, binds constraint
    expressions to the declared attributes, and proves by bounded search
    that at least one full assignment satisfies every constraint.
    """

    def __init__(self, attributes: Sequence[AttributeDef], constraints: Sequence[Constraint]):
        names = [a.name for a in attributes]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DomainError(f"duplicate attribute names: {dupes}")
        self.attributes: tuple[AttributeDef, ...] = tuple(attributes)
        self.constraints: tuple[Constraint, ...] = tuple(constraints)
        self._by_name = {a.name: a for a in self.attributes}
        for constraint in self.constraints:
            self._check_expression(constraint.expression, constraint.text)
        witness, exhausted = find_completion(self, {})
        if witness is None and not exhausted:
            raise UnsatisfiableError("no full assignment satisfies the constraint set")

    def _check_expression(self, expr: cexpr.Expr, source: str) -> None:
        for name in sorted(expr.references()):
            if name not in self._by_name:
                raise DomainError(f"constraint {source!r} references unknown attribute {name!r}")
        for node in _walk(expr):
            if isinstance(node, cexpr.Comparison):
                attr = self._by_name[node.attribute]
                if attr.kind == "enum":
                    if node.op not in ("=", "!="):
                        raise DomainError(
                            f"constraint {source!r}: ordering comparison on enumeration {attr.name!r}"
                        )
                    if node.value not in attr.values:
                        raise DomainError(
                            f"constraint {source!r}: {node.value!r} is not a value of {attr.name!r}"
                        )
                else:
                    if not isinstance(node.value, int):
                        raise DomainError(
                            f"constraint {source!r}: integer attribute {attr.name!r} compared to {node.value!r}"
                        )
            elif isinstance(node, cexpr.Membership):
                attr = self._by_name[node.attribute]
                for value in node.values:
                    if not attr.admits(value) and not (
                        attr.kind == "int" and isinstance(value, int)
                    ):
                        raise DomainError(
                            f"constraint {source!r}: {value!r} is not a value of {attr.name!r}"
                        )

    def attribute(self, name: str) -> AttributeDef:
        try:
            return self._by_name[name]
        except KeyError:
            raise DomainError(f"unknown attribute {name!r}") from None

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __len__(self) -> int:
        return len(self.attributes)

    def parse_expression(self, text: str) -> cexpr.Expr:
        """Parse and bind an expression against this model's attributes."""
        expr = cexpr.parse_expression(text)
        self._check_expression(expr, text)
        return expr

    def check_partial(self, fixed: Mapping[str, Value]) -> None:
        """Reject fixed values that name unknown attributes or bad values."""
        for name, value in fixed.items():
            attr = self.attribute(name)
            if not attr.admits(value):
                raise DomainError(f"{value!r} is not an admissible value of {name!r}")


def _walk(expr: cexpr.Expr):
    yield expr
    if isinstance(expr, cexpr.Not):
        yield from _walk(expr.operand)
    elif isinstance(expr, (cexpr.And, cexpr.Or)):
        for op in expr.operands:
            yield from _walk(op)
    elif isinstance(expr, cexpr.Implies):
        yield from _walk(expr.antecedent)
        yield from _walk(expr.consequent)


# ---------------------------------------------------------------------------
# Validation and search
# ---------------------------------------------------------------------------

def validate(dm: DomainModel, assignment: Mapping[str, Value]) -> list[Constraint]:
    """Constraints violated by ``assignment`` (empty list means valid).

    The assignment must be total over the model's attributes.
    """
    for attr in dm.attributes:
        if attr.name not in assignment:
            raise DomainError(f"assignment is missing attribute {attr.name!r}")
    return [c for c in dm.constraints if not c.evaluate(assignment)]


def find_completion(
    dm: DomainModel,
    fixed: Mapping[str, Value],
    rng: Optional[object] = None,
    budget: int = SEARCH_BUDGET,
) -> tuple[Optional[Assignment], bool]:
    """Systematic DFS for a valid completion of ``fixed``.

    Returns (assignment, exhausted). assignment is None when no
    completion was found; exhausted tells whether the search ran out of
    budget (True) or proved unsatisfiability (False).  When ``rng`` is
    given, value orderings are shuffled so the found completion is a
    random one; the search remains complete either way.
    """
    dm.check_partial(fixed)
    free = [a for a in dm.attributes if a.name not in fixed]
    order = [a.name for a in free]

    # Constraints become checkable once all referenced attributes are
    # assigned. Index them by the last free attribute they wait on.
    check_at: list[list[Constraint]] = [[] for _ in range(len(order) + 1)]
    position = {name: i for i, name in enumerate(order)}
    for constraint in dm.constraints:
        refs = constraint.references()
        last = -1
        for name in refs:
            if name in position:
                last = max(last, position[name])
        check_at[last + 1].append(constraint)

    assignment: Assignment = dict(fixed)
    for constraint in check_at[0]:
        if not constraint.evaluate(assignment):
            return None, False

    value_orders: list[list[Value]] = []
    for attr in free:
        values = list(attr.domain_values())
        if rng is not None:
            rng.shuffle(values)
        value_orders.append(values)

    nodes = 0

    def descend(depth: int) -> Optional[Assignment]:
        nonlocal nodes
        if depth == len(free):
            return dict(assignment)
        attr = free[depth]
        for value in value_orders[depth]:
            nodes += 1
            if nodes > budget:
                raise BudgetExceededError("completion search budget exceeded")
            assignment[attr.name] = value
            ok = all(c.evaluate(assignment) for c in check_at[depth + 1])
            if ok:
                found = descend(depth + 1)
                if found is not None:
                    return found
            del assignment[attr.name]
        return None

    try:
        found = descend(0)
    except BudgetExceededError:
        return None, True
    return found, False


def complete_partial(dm: DomainModel, fixed: Mapping[str, Value], seed: int) -> Scenario:
    """A valid scenario agreeing with ``fixed``, free attributes random.

    Free attributes are drawn uniformly and the draw is retried until the
    constraints hold (cap SAMPLING_CAP).  If rejection sampling fails,
    a systematic search decides whether any completion exists at all.
    Deterministic: the same (model, fixed, seed) yields the same scenario.
    """
    dm.check_partial(fixed)
    rng = make_generator(STREAM_SCENARIO, seed)
    free = [a for a in dm.attributes if a.name not in fixed]
    for _ in range(SAMPLING_CAP):
        assignment: Assignment = dict(fixed)
        for attr in free:
            if attr.kind == "enum":
                assignment[attr.name] = attr.values[int(rng.integers(len(attr.values)))]
            else:
                assignment[attr.name] = int(rng.integers(attr.min, attr.max + 1))
        if all(c.evaluate(assignment) for c in dm.constraints):
            ordered = {a.name: assignment[a.name] for a in dm.attributes}
            return Scenario(id=f"sc-{seed:016x}", values=ordered, seed=seed)
    found, exhausted = find_completion(dm, fixed, rng=rng)
    if found is not None:
        ordered = {a.name: found[a.name] for a in dm.attributes}
        return Scenario(id=f"sc-{seed:016x}", values=ordered, seed=seed)
    if exhausted:
        raise BudgetExceededError(
            "no valid completion found within budget; model is near-unsatisfiable"
        )
    raise UnsatisfiableError(f"no valid completion exists for fixed values {dict(fixed)!r}")


def sample_scenario(dm: DomainModel, seed: int) -> Scenario:
    """A uniform-ish random valid scenario; pure function of (dm, seed)."""
    return complete_partial(dm, {}, seed)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def load_domain(source: str) -> DomainModel:
    """Parse a YAML domain-model document. See the module docstring."""
    try:
        doc = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        raise DomainError(f"domain model is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict) or "attributes" not in doc:
        raise DomainError("domain model must be a mapping with an 'attributes' section")

    attributes = []
    for entry in doc["attributes"]:
        if not isinstance(entry, dict) or "name" not in entry:
            raise DomainError(f"malformed attribute entry: {entry!r}")
        kind = entry.get("kind", "enum")
        if kind == "enum":
            values = entry.get("values")
            if not isinstance(values, list):
                raise DomainError(f"{entry['name']}: enum attribute needs a 'values' list")
            attributes.append(
                AttributeDef(
                    name=str(entry["name"]),
                    group=str(entry.get("group", entry["name"].split(".")[0])),
                    kind="enum",
                    values=tuple(str(v) for v in values),
                )
            )
        elif kind == "int":
            if "min" not in entry or "max" not in entry:
                raise DomainError(f"{entry['name']}: int attribute needs 'min' and 'max'")
            attributes.append(
                AttributeDef(
                    name=str(entry["name"]),
                    group=str(entry.get("group", entry["name"].split(".")[0])),
                    kind="int",
                    min=int(entry["min"]),
                    max=int(entry["max"]),
                    unit=str(entry.get("unit", "")),
                )
            )
        else:
            raise DomainError(f"{entry['name']}: unknown kind {kind!r}")

    names = {a.name for a in attributes}
    parsed: list[Constraint] = []
    for text in doc.get("constraints") or []:
        expr = cexpr.parse_expression(str(text))
        for ref in sorted(expr.references()):
            if ref not in names:
                raise DomainError(f"constraint {text!r} references unknown attribute {ref!r}")
        parsed.append(Constraint(text=str(text), expression=expr))

    return DomainModel(attributes, parsed)


def dump_domain(dm: DomainModel) -> str:
    """Serialize back to the YAML format accepted by load_domain."""
    attrs = []
    for a in dm.attributes:
        if a.kind == "enum":
            entry = {"name": a.name, "group": a.group, "kind": "enum", "values": list(a.values)}
        else:
            entry = {"name": a.name, "group": a.group, "kind": "int", "min": a.min, "max": a.max}
            if a.unit:
                entry["unit"] = a.unit
        attrs.append(entry)
    doc = {"attributes": attrs, "constraints": [c.text for c in dm.constraints]}
    return yaml.safe_dump(doc, sort_keys=False)


def load_domain_file(path: str) -> DomainModel:
    with open(path, "r", encoding="utf-8") as fh:
        return load_domain(fh.read())


def default_domain() -> DomainModel:
    """The shipped 12-attribute model."""
    text = resources.files("lanetest.data").joinpath("default_domain.yaml").read_text()
    return load_domain(text)


def restricted_domain() -> DomainModel:
    """The shipped sunny-only subset used for real-vs-simulated studies."""
    text = resources.files("lanetest.data").joinpath("restricted_domain.yaml").read_text()
    return load_domain(text)


def scenario_from_values(
    dm: DomainModel, values: Mapping[str, Value], seed: int, id: Optional[str] = None
) -> Scenario:
    """Wrap an explicit full assignment as a Scenario, validating it."""
    ordered: Assignment = {}
    for attr in dm.attributes:
        if attr.name not in values:
            raise DomainError(f"assignment is missing attribute {attr.name!r}")
        value = values[attr.name]
        if attr.kind == "int":
            value = int(value)
        if not attr.admits(value):
            raise DomainError(f"{value!r} is not an admissible value of {attr.name!r}")
        ordered[attr.name] = value
    violated = validate(dm, ordered)
    if violated:
        raise DomainError(
            "assignment violates constraints: " + "; ".join(str(c) for c in violated)
        )
    return Scenario(id=id or f"sc-{seed:016x}", values=ordered, seed=seed)
