"""Matrix exponential and structured approximants.

``scaling_squaring`` is the reference exponential (scipy's Higham scheme).
The diagonal Pade approximants ``N(Z) / N(-Z)`` satisfy ``r(Z)^T r(Z) = I``
for antisymmetric ``Z``, so they map ``so(n)`` into ``SO(n)`` up to
roundoff; Cayley is the (1,1) member of the family.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
import scipy.linalg

from .lie_core import Family, group_membership


class CayleySingularityError(ArithmeticError):
    """``I - Z/2`` is (numerically) singular; retry with a smaller step."""


class RetractionError(ValueError):
    """Matrix is too far from the group to be projected back safely."""


@dataclass(frozen=True)
class ExpMethod:
    kind: str = "scaling_squaring"
    order: int = 1

    def __post_init__(self):
        if self.kind not in ("scaling_squaring", "cayley", "pade"):
            raise ValueError(f"unknown exponential method {self.kind!r}")
        if self.kind == "pade" and self.order < 1:
            raise ValueError("Pade order must be >= 1")


SCALING_SQUARING = ExpMethod("scaling_squaring")
CAYLEY = ExpMethod("cayley")


def pade_diagonal(order):
    return ExpMethod("pade", order)


def _pade_coefficients(m):
    return [factorial(2 * m - j) * factorial(m) /
            (factorial(2 * m) * factorial(j) * factorial(m - j)) for j in range(m + 1)]


def _solve_checked(D, N):
    # cond ~ 1/eps means I - Z/2 (or its Pade analogue) has hit an eigenvalue 0
    if np.linalg.cond(D) > 1e12:
        raise CayleySingularityError("denominator of the Pade approximant is singular")
    return np.linalg.solve(D, N)


def cayley(Z):
    """``(I - Z/2)^{-1} (I + Z/2)``."""
    Z = np.asarray(Z, dtype=float)
    eye = np.eye(Z.shape[0])
    return _solve_checked(eye - 0.5 * Z, eye + 0.5 * Z)


def pade(Z, order):
    """Unscaled diagonal ``(order, order)`` Pade approximant of ``e^Z``."""
    Z = np.asarray(Z, dtype=float)
    c = _pade_coefficients(order)
    even = np.zeros_like(Z)
    odd = np.zeros_like(Z)
    power = np.eye(Z.shape[0])
    for j, cj in enumerate(c):
        if j % 2:
            odd += cj * power
        else:
            even += cj * power
        power = power @ Z
    return _solve_checked(even - odd, even + odd)


def mexp(Z, method=SCALING_SQUARING):
    if method.kind == "scaling_squaring":
        return scipy.linalg.expm(Z)
    if method.kind == "cayley":
        return cayley(Z)
    return pade(Z, method.order)


def retract(spec, q, max_defect=1e-3):
    """Project a near-group matrix back onto the group.

    ``SO(n)``: polar factor (closest orthogonal matrix). ``SL(n)``: divide
    by ``det(q)^(1/n)``. ``GLplus(n)`` is open, so ``q`` is returned as is.
    """
    q = np.asarray(q, dtype=float)
    _, defect = group_membership(spec, q)
    if not defect <= max_defect:
        raise RetractionError(f"group defect {defect:.3g} exceeds {max_defect:.3g}")
    if spec.family is Family.SO:
        u, _, vt = np.linalg.svd(q)
        return u @ vt
    if spec.family is Family.SL:
        return q / np.linalg.det(q) ** (1.0 / spec.n)
    return q.copy()
