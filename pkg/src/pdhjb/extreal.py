"""Extended real numbers with an explicit +infinity flag.

Constraint-type costs take the value +infinity.  Carrying the flag
explicitly (instead of a float sentinel) keeps infinite values out of
finite arithmetic paths: adding anything to an infinite value stays
infinite, and no overflow or NaN can leak into a minimization.
Only +infinity occurs in this codebase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import total_ordering


@total_ordering
@dataclass(frozen=True)
class ExtendedReal:
    value: float = 0.0
    is_infinite: bool = False

    def __post_init__(self):
        if self.is_infinite:
            object.__setattr__(self, "value", math.inf)
        elif not math.isfinite(self.value):
            raise ValueError("finite ExtendedReal constructed from non-finite float")

    @staticmethod
    def finite(x: float) -> "ExtendedReal":
        return ExtendedReal(float(x))

    @staticmethod
    def infinity() -> "ExtendedReal":
        return ExtendedReal(is_infinite=True)

    @staticmethod
    def of(x: "float | ExtendedReal") -> "ExtendedReal":
        if isinstance(x, ExtendedReal):
            return x
        if math.isinf(x):
            return ExtendedReal.infinity()
        return ExtendedReal.finite(x)

    @property
    def is_finite(self) -> bool:
        return not self.is_infinite

    def __float__(self) -> float:
        return math.inf if self.is_infinite else self.value

    def __add__(self, other: "float | ExtendedReal") -> "ExtendedReal":
        other = ExtendedReal.of(other)
        if self.is_infinite or other.is_infinite:
            return ExtendedReal.infinity()
        return ExtendedReal.finite(self.value + other.value)

    __radd__ = __add__

    def __mul__(self, c: float) -> "ExtendedReal":
        # Scaling by a positive finite constant; 0 * inf is not needed.
        if c < 0:
            raise ValueError("ExtendedReal supports scaling by non-negative constants only")
        if self.is_infinite:
            if c == 0:
                return ExtendedReal.finite(0.0)
            return ExtendedReal.infinity()
        return ExtendedReal.finite(self.value * c)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        other = ExtendedReal.of(other)
        if self.is_infinite or other.is_infinite:
            return self.is_infinite and other.is_infinite
        return self.value == other.value

    def __lt__(self, other) -> bool:
        other = ExtendedReal.of(other)
        if self.is_infinite:
            return False
        if other.is_infinite:
            return True
        return self.value < other.value

    def __hash__(self):
        return hash((self.is_infinite, None if self.is_infinite else self.value))

    def __repr__(self):
        return "ExtendedReal(+inf)" if self.is_infinite else f"ExtendedReal({self.value!r})"
