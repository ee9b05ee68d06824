"""Quadrature rules on the reference simplex."""

from fractions import Fraction
from functools import lru_cache
from itertools import permutations
from math import ceil, factorial, sqrt

import numpy as np
from pydantic import BaseModel, ConfigDict

from .exceptions import FemtetDegreeTooHighError, FemtetElementError
from .ref_element import CellKind


GM_MAX_ORDER = 10


class QuadratureRule(BaseModel):
    """Barycentric points and weights normalized to sum 1.

    The reference measure (1/6 volume, 1/2 area) is applied by the caller.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    cell_kind: CellKind
    points: np.ndarray
    weights: np.ndarray
    exactness: int

    @property
    def reference_measure(self) -> float:
        return 1.0 / 6.0 if self.cell_kind == "tetrahedron" else 0.5


def _orbit(*lam: float) -> list[tuple[float, ...]]:
    return sorted(set(permutations(lam)), reverse=True)


def _symmetric_rule(cell_kind: CellKind, exactness: int, orbits: list[tuple[tuple[float, ...], float]]) -> QuadratureRule:
    points, weights = [], []

    for generator, weight in orbits:
        for point in _orbit(*generator):
            points.append(point)
            weights.append(weight)

    return QuadratureRule(cell_kind=cell_kind, points=np.array(points), weights=np.array(weights), exactness=exactness)


@lru_cache(maxsize=1)
def _tabulated_rules() -> dict[CellKind, dict[int, QuadratureRule]]:
    a = (5.0 + 3.0 * sqrt(5.0)) / 20.0
    b = (5.0 - sqrt(5.0)) / 20.0
    d1, w1 = 0.44594849091596488632, 0.22338158967801146570
    d2, w2 = 0.09157621350977074346, 0.10995174365532186764

    return {
        "tetrahedron": {
            1: _symmetric_rule("tetrahedron", 1, [((0.25, 0.25, 0.25, 0.25), 1.0)]),
            2: _symmetric_rule("tetrahedron", 2, [((a, b, b, b), 0.25)]),
        },
        "triangle": {
            1: _symmetric_rule("triangle", 1, [((1 / 3, 1 / 3, 1 / 3), 1.0)]),
            2: _symmetric_rule("triangle", 2, [((2 / 3, 1 / 6, 1 / 6), 1 / 3)]),
            4: _symmetric_rule("triangle", 4, [((1 - 2 * d1, d1, d1), w1), ((1 - 2 * d2, d2, d2), w2)]),
        },
    }


def _compositions(total: int, parts: int) -> list[tuple[int, ...]]:
    if parts == 1:
        return [(total,)]

    return [(head, *tail) for head in range(total, -1, -1) for tail in _compositions(total - head, parts - 1)]


def grundmann_moller(s: int, cell_kind: CellKind) -> QuadratureRule:
    """
    Grundmann-Moller rule of exactness 2s+1.

    Weights are computed as exact fractions and may be negative.

    Raises:
        FemtetDegreeTooHighError: If s exceeds the implemented range
    """

    if not 0 <= s <= GM_MAX_ORDER:
        raise FemtetDegreeTooHighError(f"Grundmann-Moller order {s} outside 0..{GM_MAX_ORDER}")

    n = 3 if cell_kind == "tetrahedron" else 2
    d = 2 * s + 1
    points, weights = [], []

    for i in range(s + 1):
        denominator = d + n - 2 * i
        weight = Fraction((-1) ** i * denominator**d * factorial(n), 4**s * factorial(i) * factorial(d + n - i))

        for beta in _compositions(s - i, n + 1):
            points.append([(2 * b + 1) / denominator for b in beta])
            weights.append(float(weight))

    return QuadratureRule(cell_kind=cell_kind, points=np.array(points), weights=np.array(weights), exactness=d)


@lru_cache(maxsize=None)
def simplex_rule(cell_kind: CellKind, required_degree: int) -> QuadratureRule:
    """
    Deterministic rule exact for polynomials of total degree <= required_degree.

    Low degrees use positive symmetric rules, the rest Grundmann-Moller.

    Raises:
        FemtetDegreeTooHighError: If required_degree is beyond 2 * GM_MAX_ORDER + 1
    """

    if required_degree < 0:
        raise FemtetElementError(f"quadrature degree must be non-negative, got {required_degree}")

    for exactness, rule in sorted(_tabulated_rules()[cell_kind].items()):
        if exactness >= required_degree:
            return rule

    s = max(0, ceil((required_degree - 1) / 2))

    if s > GM_MAX_ORDER:
        raise FemtetDegreeTooHighError(
            f"no rule of exactness {required_degree} on the {cell_kind} (maximum {2 * GM_MAX_ORDER + 1})"
        )

    return grundmann_moller(s, cell_kind)


def monomial_integral(exponents: tuple[int, ...], cell_kind: CellKind) -> Fraction:
    """
    Exact integral of x^a y^b (z^c) over the reference simplex.

    Tetrahedron: a! b! c! / (a+b+c+3)!, triangle: a! b! / (a+b+2)!.
    """

    n = 3 if cell_kind == "tetrahedron" else 2

    if len(exponents) != n or any(e < 0 for e in exponents):
        raise FemtetElementError(f"expected {n} non-negative exponents, got {exponents}")

    numerator = 1

    for e in exponents:
        numerator *= factorial(e)

    return Fraction(numerator, factorial(sum(exponents) + n))
