"""Boolean constraint expressions over scenario attributes.

A small expression language replaces full OCL: it supports equality and
ordering comparisons against literals, set membership, and the usual
boolean connectives including implication.  Grammar (lowest precedence
first)::

    expr       := or_expr ("implies" expr)?          # right-associative
    or_expr    := and_expr ("or" and_expr)*
    and_expr   := unary ("and" unary)*
    unary      := "not" unary | atom
    atom       := "(" expr ")" | comparison
    comparison := ref op literal | ref "in" "{" literal ("," literal)* "}"
    op         := "=" | "==" | "!=" | "<" | "<=" | ">" | ">="
    ref        := IDENT ("." IDENT)?
    literal    := INTEGER | IDENT ("." IDENT)?

Attribute references must name declared attributes; bare identifiers on
the right-hand side are enumeration symbols.  Ordering comparisons are
only meaningful for integer attributes and are rejected for enumerations
when an expression is bound to a domain model.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Mapping, Union

Value = Union[int, str]


class ExpressionError(ValueError):
    """Raised for syntax or semantic errors in a constraint expression."""


# Expression AST. Nodes are immutable and evaluate against a plain
# attribute->value mapping.

@dataclass(frozen=True)
class Comparison:
    attribute: str
    op: str  # one of = != < <= > >=
    value: Value

    def evaluate(self, assignment: Mapping[str, Value]) -> bool:
        actual = assignment[self.attribute]
        if self.op == "=":
            return actual == self.value
        if self.op == "!=":
            return actual != self.value
        if self.op == "<":
            return actual < self.value
        if self.op == "<=":
            return actual <= self.value
        if self.op == ">":
            return actual > self.value
        if self.op == ">=":
            return actual >= self.value
        raise ExpressionError(f"unknown operator {self.op!r}")

    def references(self) -> frozenset[str]:
        return frozenset((self.attribute,))

    def __str__(self) -> str:
        return f"{self.attribute} {self.op} {self.value}"


@dataclass(frozen=True)
class Membership:
    attribute: str
    values: tuple[Value, ...]

    def evaluate(self, assignment: Mapping[str, Value]) -> bool:
        return assignment[self.attribute] in self.values

    def references(self) -> frozenset[str]:
        return frozenset((self.attribute,))

    def __str__(self) -> str:
        inner = ", ".join(str(v) for v in self.values)
        return f"{self.attribute} in {{{inner}}}"


@dataclass(frozen=True)
class Not:
    operand: "Expr"

    def evaluate(self, assignment: Mapping[str, Value]) -> bool:
        return not self.operand.evaluate(assignment)

    def references(self) -> frozenset[str]:
        return self.operand.references()

    def __str__(self) -> str:
        return f"not ({self.operand})"


@dataclass(frozen=True)
class And:
    operands: tuple["Expr", ...]

    def evaluate(self, assignment: Mapping[str, Value]) -> bool:
        return all(op.evaluate(assignment) for op in self.operands)

    def references(self) -> frozenset[str]:
        return frozenset().union(*(op.references() for op in self.operands))

    def __str__(self) -> str:
        return " and ".join(f"({op})" for op in self.operands)


@dataclass(frozen=True)
class Or:
    operands: tuple["Expr", ...]

    def evaluate(self, assignment: Mapping[str, Value]) -> bool:
        return any(op.evaluate(assignment) for op in self.operands)

    def references(self) -> frozenset[str]:
        return frozenset().union(*(op.references() for op in self.operands))

    def __str__(self) -> str:
        return " or ".join(f"({op})" for op in self.operands)


@dataclass(frozen=True)
class Implies:
    antecedent: "Expr"
    consequent: "Expr"

    def evaluate(self, assignment: Mapping[str, Value]) -> bool:
        return (not self.antecedent.evaluate(assignment)) or self.consequent.evaluate(assignment)

    def references(self) -> frozenset[str]:
        return self.antecedent.references() | self.consequent.references()

    def __str__(self) -> str:
        return f"({self.antecedent}) implies ({self.consequent})"


Expr = Union[Comparison, Membership, Not, And, Or, Implies]


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<op><=|>=|!=|==|=|<|>)
  | (?P<lbrace>\{)
  | (?P<rbrace>\})
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<comma>,)
  | (?P<int>-?\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)?)
    """,
    re.VERBOSE,
)

_KEYWORDS = {"and", "or", "not", "implies", "in"}


def _tokenize(text: str) -> Iterator[tuple[str, str]]:
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ExpressionError(f"unexpected character {text[pos]!r} at position {pos}")
        pos = match.end()
        kind = match.lastgroup
        if kind == "ws":
            continue
        value = match.group()
        if kind == "ident" and value in _KEYWORDS:
            yield (value, value)
        else:
            yield (kind, value)
    yield ("eof", "")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = list(_tokenize(text))
        self.index = 0

    def peek(self) -> tuple[str, str]:
        return self.tokens[self.index]

    def advance(self) -> tuple[str, str]:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, kind: str) -> str:
        actual_kind, value = self.peek()
        if actual_kind != kind:
            raise ExpressionError(
                f"expected {kind}, found {value!r} in expression {self.text!r}"
            )
        self.advance()
        return value

    def parse(self) -> Expr:
        expr = self.parse_implies()
        kind, value = self.peek()
        if kind != "eof":
            raise ExpressionError(f"trailing input {value!r} in expression {self.text!r}")
        return expr

    def parse_implies(self) -> Expr:
        left = self.parse_or()
        if self.peek()[0] == "implies":
            self.advance()
            right = self.parse_implies()
            return Implies(left, right)
        return left

    def parse_or(self) -> Expr:
        operands = [self.parse_and()]
        while self.peek()[0] == "or":
            self.advance()
            operands.append(self.parse_and())
        if len(operands) == 1:
            return operands[0]
        return Or(tuple(operands))

    def parse_and(self) -> Expr:
        operands = [self.parse_unary()]
        while self.peek()[0] == "and":
            self.advance()
            operands.append(self.parse_unary())
        if len(operands) == 1:
            return operands[0]
        return And(tuple(operands))

    def parse_unary(self) -> Expr:
        if self.peek()[0] == "not":
            self.advance()
            return Not(self.parse_unary())
        return self.parse_atom()

    def parse_atom(self) -> Expr:
        kind, value = self.peek()
        if kind == "lparen":
            self.advance()
            inner = self.parse_implies()
            self.expect("rparen")
            return inner
        if kind == "ident":
            return self.parse_comparison()
        raise ExpressionError(f"expected attribute reference, found {value!r}")

    def parse_comparison(self) -> Expr:
        attribute = self.expect("ident")
        kind, value = self.peek()
        if kind == "in":
            self.advance()
            self.expect("lbrace")
            values = [self.parse_literal()]
            while self.peek()[0] == "comma":
                self.advance()
                values.append(self.parse_literal())
            self.expect("rbrace")
            return Membership(attribute, tuple(values))
        if kind == "op":
            op = self.advance()[1]
            if op == "==":
                op = "="
            literal = self.parse_literal()
            return Comparison(attribute, op, literal)
        raise ExpressionError(f"expected comparison operator after {attribute!r}, found {value!r}")

    def parse_literal(self) -> Value:
        kind, value = self.advance()
        if kind == "int":
            return int(value)
        if kind == "ident":
            return value
        raise ExpressionError(f"expected literal value, found {value!r}")


def parse_expression(text: str) -> Expr:
    """Parse ``text`` into an expression AST.

    Raises ExpressionError on malformed input.  The result is not yet
    checked against any attribute declarations; see
    ``domain.DomainModel`` for the bound form.
    """
    if not text or not text.strip():
        raise ExpressionError("empty expression")
    return _Parser(text).parse()
