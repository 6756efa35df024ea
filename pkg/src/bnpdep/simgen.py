"""Generators for the six simulation designs used in the power study.

Every generator draws from the design on its natural scale and then
standardizes each column, so all outputs have mean 0 and unit variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from .core_stats import Dataset, RngStream, as_stream, standardize
from .errors import ContractViolation

SCENARIOS = ("Null", "BVN", "HS", "Cone", "W", "Circle")

_PARAMS = {
    "Null": {},
    "BVN": {"rho": 0.2},
    "HS": {"rho": 0.2},
    "Cone": {"rho": 0.1, "offset": 0.1},
    "W": {"width": 1.0 / 3.0},
    "Circle": {"var1": 1.0 / 9.0, "var2": 1.0 / 64.0},
}


@dataclass(frozen=True)
class Scenario:
    """A named simulation design with its fixed constants."""

    name: str

    def __post_init__(self):
        if self.name not in _PARAMS:
            raise ContractViolation(
                f"unknown scenario {self.name!r}; expected one of {SCENARIOS}")

    @property
    def parameters(self):
        return MappingProxyType(_PARAMS[self.name])


def _offsets(n: int) -> np.ndarray:
    # a_1 = -1, a_i = a_{i-1} + 2/n
    return -1.0 + 2.0 * np.arange(n) / n


def sample_raw(scenario: Scenario | str, n: int, rng) -> np.ndarray:
    """Draw ``n`` points from the design before standardization (``n x 2``)."""
    s = scenario if isinstance(scenario, Scenario) else Scenario(scenario)
    if n < 10:
        raise ContractViolation(f"n must be at least 10, got {n}")
    g = as_stream(rng).generator
    p = s.parameters
    if s.name == "Null":
        x1 = g.standard_normal(n)
        x2 = g.standard_normal(n)
    elif s.name == "BVN":
        rho = p["rho"]
        x1 = g.standard_normal(n)
        x2 = rho * x1 + math.sqrt(1.0 - rho * rho) * g.standard_normal(n)
    elif s.name == "HS":
        x1 = g.standard_normal(n)
        x2 = p["rho"] * x1 ** 2 + g.standard_normal(n)
    elif s.name == "Cone":
        x1 = g.uniform(0.0, 1.0, n)
        x2 = g.normal(0.0, p["rho"] * x1 ** 2 + p["offset"])
    elif s.name == "W":
        a = _offsets(n)[g.integers(0, n, n)]
        x1 = a + p["width"] * g.uniform(0.0, 1.0, n)
        # bounds as printed: U[3(x^2 - 1/2)^2, 3(1 + x^2 - 1/2)]
        lo = 3.0 * (x1 ** 2 - 0.5) ** 2
        hi = 3.0 * (1.0 + x1 ** 2 - 0.5)
        x2 = lo + (hi - lo) * g.uniform(0.0, 1.0, n)
    else:
        a = _offsets(n)[g.integers(0, n, n)]
        x1 = np.sin(a * math.pi) + math.sqrt(p["var1"]) * g.standard_normal(n)
        x2 = np.cos(a * math.pi) + math.sqrt(p["var2"]) * g.standard_normal(n)
    return np.column_stack([x1, x2])


def generate(scenario: Scenario | str, n: int, rng) -> Dataset:
    """Draw a standardized ``Dataset`` of ``n`` points from a design.

    Parameters
    ----------
    scenario : Scenario or str
        One of ``Null, BVN, HS, Cone, W, Circle``.
    n : int
        Sample size, at least 10.
    rng : RngStream or int
        Random stream; the output is a pure function of its address.
    """
    return standardize(Dataset(sample_raw(scenario, n, rng)))
