"""Truth values on [0, 1]: t-norms, their residua and negations.

Every degree handled by the engine lives in [0, 1].  The three supported
t-norms are left-continuous, so each has a residual implication ``I`` with
``conj(a, b) <= g  <=>  a <= residuum(b, g)``.  The residua are computed as
the supremum over *floating point* values, which keeps the adjointness exact
on the machine carrier rather than only up to rounding.
"""

from __future__ import annotations

import enum
import math

import numpy as np


class TruthDegree(float):
    """A float constrained to [0, 1]."""

    def __new__(cls, value):
        value = float(value)
        if not (0.0 <= value <= 1.0):
            raise ValueError(f"truth degree out of [0, 1]: {value!r}")
        return super().__new__(cls, value)


class TNorm(enum.Enum):
    MINIMUM = "minimum"
    PRODUCT = "product"
    LUKASIEWICZ = "lukasiewicz"

    @classmethod
    def parse(cls, name: "str | TNorm") -> "TNorm":
        if isinstance(name, TNorm):
            return name
        key = str(name).strip().lower()
        aliases = {"min": "minimum", "godel": "minimum", "goedel": "minimum",
                   "prod": "product", "luk": "lukasiewicz"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(
                f"unknown t-norm {name!r}; expected one of "
                f"{', '.join(t.value for t in cls)}") from None

    def apply(self, a, b):
        """Elementwise C(a, b); accepts scalars or numpy arrays."""
        if self is TNorm.MINIMUM:
            return np.minimum(a, b)
        if self is TNorm.PRODUCT:
            return np.multiply(a, b)
        out = np.maximum(0.0, np.subtract(np.add(a, b), 1.0))
        # (a + b) - 1 rounds away from the unit law; restore it exactly.
        out = np.where(np.equal(a, 1.0), b, out)
        return np.where(np.equal(b, 1.0), a, out)


DEFAULT_TNORM = TNorm.LUKASIEWICZ


def conj(a: float, b: float, t: TNorm = DEFAULT_TNORM) -> TruthDegree:
    """Strong conjunction C(a, b)."""
    a, b = TruthDegree(a), TruthDegree(b)
    t = TNorm.parse(t)
    if t is TNorm.MINIMUM:
        return TruthDegree(min(a, b))
    if t is TNorm.PRODUCT:
        return TruthDegree(a * b)
    if a == 1.0 or b == 1.0:
        return TruthDegree(min(a, b))
    return TruthDegree(max(0.0, (a + b) - 1.0))


def _float_bits(x: float) -> int:
    return int(np.float64(x).view(np.int64))


def _bits_float(n: int) -> float:
    return float(np.int64(n).view(np.float64))


def _float_sup(candidate: float, b: float, g: float, t: TNorm) -> float:
    # Largest float alpha in [0, 1] with C(alpha, b) <= g.  C is monotone in
    # alpha even after rounding, and non-negative floats order like their bit
    # patterns, so gallop out from the closed-form candidate to a bracket and
    # bisect on the bits.  ok(0) always holds.
    ok = lambda n: conj(_bits_float(n), b, t) <= g  # noqa: E731
    one = _float_bits(1.0)
    if ok(one):
        return 1.0
    start = _float_bits(min(1.0, max(0.0, candidate)))
    step = 1
    if ok(start):
        lo, hi = start, one
        while lo + step < one:
            if not ok(lo + step):
                hi = lo + step
                break
            lo += step
            step *= 2
    else:
        lo, hi = 0, start
        while hi - step > 0:
            if ok(hi - step):
                lo = hi - step
                break
            hi -= step
            step *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return _bits_float(lo)


def residuum(b: float, g: float, t: TNorm = DEFAULT_TNORM) -> TruthDegree:
    """Residual implication I(b, g) = sup{a | C(a, b) <= g}."""
    b, g = TruthDegree(b), TruthDegree(g)
    t = TNorm.parse(t)
    if b <= g:
        return TruthDegree(1.0)
    if t is TNorm.MINIMUM:
        return TruthDegree(g)
    if t is TNorm.PRODUCT:
        return TruthDegree(_float_sup(g / b, b, g, t))
    return TruthDegree(_float_sup(1.0 - b + g, b, g, t))


def neg_residuated(a: float, t: TNorm = DEFAULT_TNORM) -> TruthDegree:
    """Negation derived from the implication: a -> 0."""
    return residuum(a, 0.0, t)


def neg_involutive(a: float) -> TruthDegree:
    """Standard negation 1 - a."""
    return TruthDegree(1.0 - TruthDegree(a))


def meet(a: float, b: float) -> TruthDegree:
    return TruthDegree(min(TruthDegree(a), TruthDegree(b)))


def join(a: float, b: float) -> TruthDegree:
    return TruthDegree(max(TruthDegree(a), TruthDegree(b)))
