"""Scenario encoding for the learners.

Enumerations map to integer codes in declaration order.  Bounded-integer
attributes are discretized into quartile bins (edges from the training
scenarios), because mined rule conditions are equality predicates over
symbolic values.  The encoder also inverts bin codes back to concrete
integer ranges so confirmation sampling can draw scenarios satisfying a
rule's antecedent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..domain import DomainModel, Scenario


@dataclass(frozen=True)
class LabeledVector:
    scenario_id: str
    codes: tuple[int, ...]  # one code per domain attribute, in model order
    label: str  # "agree" or "disagree"


class DatasetEncoder:
    """Fixed attribute-code mapping fitted on a set of training scenarios."""

    def __init__(self, dm: DomainModel, training: Sequence[Scenario]):
        if not training:
            raise ValueError("encoder needs at least one training scenario")
        self.dm = dm
        self.attribute_names = dm.attribute_names
        self._categories: dict[str, tuple] = {}
        self._bin_values: dict[str, list[list[int]]] = {}  # attr -> per-bin value lists
        for attr in dm.attributes:
            if attr.kind == "enum":
                self._categories[attr.name] = attr.values
            else:
                observed = np.array([s.values[attr.name] for s in training], dtype=np.float64)
                edges = np.quantile(observed, [0.25, 0.5, 0.75])
                bins: list[list[int]] = [[], [], [], []]
                for value in range(attr.min, attr.max + 1):
                    code = int(np.searchsorted(edges, value, side="left"))
                    bins[code].append(value)
                self._bin_values[attr.name] = bins
                self._categories[attr.name] = tuple(
                    self._bin_label(attr.name, b) for b in range(4)
                )

    def _bin_label(self, name: str, code: int) -> str:
        values = self._bin_values[name][code]
        if not values:
            return f"q{code + 1}(empty)"
        return f"q{code + 1}[{values[0]}..{values[-1]}]"

    def n_codes(self, name: str) -> int:
        return len(self._categories[name])

    def feature_kind(self, name: str) -> str:
        """'cat' for enumerations, 'ord' for binned integers."""
        return "ord" if name in self._bin_values else "cat"

    def encode_value(self, name: str, value) -> int:
        if name in self._bin_values:
            for code, values in enumerate(self._bin_values[name]):
                if value in values:
                    return code
            raise ValueError(f"{value!r} outside the declared range of {name!r}")
        try:
            return self._categories[name].index(value)
        except ValueError:
            raise ValueError(f"{value!r} is not a value of {name!r}") from None

    def encode_scenario(self, scenario: Scenario) -> tuple[int, ...]:
        return tuple(
            self.encode_value(name, scenario.values[name]) for name in self.attribute_names
        )

    def encode_matrix(self, scenarios: Sequence[Scenario]) -> np.ndarray:
        return np.array([self.encode_scenario(s) for s in scenarios], dtype=np.int64)

    def code_display(self, name: str, code: int) -> str:
        return str(self._categories[name][code])

    def concrete_values(self, name: str, code: int) -> list:
        """Concrete attribute values a code stands for (for sampling)."""
        if name in self._bin_values:
            return list(self._bin_values[name][code])
        return [self._categories[name][code]]
