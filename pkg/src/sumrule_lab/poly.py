"""Monomial-basis polynomials and the V <-> A correspondence on [-2, 2].

For a potential V whose equilibrium measure lives on [-2, 2], the density is
A(x) * sqrt(4 - x^2) / (2 pi) with A a polynomial of degree deg V - 2.  The
maps below go back and forth between V' and A using the divided difference
(V'(x) - V'(t)) / (x - t) expanded term by term, so no quadrature is involved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError


def _trim(coeffs: Iterable[float]) -> tuple:
    c = [float(v) for v in coeffs]
    for v in c:
        if not math.isfinite(v):
            raise ValidationError("polynomial coefficients must be finite")
    while c and c[-1] == 0.0:
        c.pop()
    return tuple(c)


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial, coeffs[k] multiplies x**k (trailing zeros stripped)."""

    coeffs: tuple

    def __init__(self, coeffs: Sequence[float] = ()):
        object.__setattr__(self, "coeffs", _trim(coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def leading(self) -> float:
        return self.coeffs[-1] if self.coeffs else 0.0

    def __call__(self, x):
        return poly_eval(self, x)

    def __len__(self):
        return len(self.coeffs)

    def __getitem__(self, k):
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else 0.0

    def array(self, length: int | None = None) -> np.ndarray:
        n = len(self.coeffs) if length is None else length
        out = np.zeros(max(n, 0))
        m = min(n, len(self.coeffs))
        out[:m] = self.coeffs[:m]
        return out

    def derivative(self) -> "Polynomial":
        return poly_derivative(self)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        n = max(len(self), len(other))
        return Polynomial(self.array(n) + other.array(n))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        n = max(len(self), len(other))
        return Polynomial(self.array(n) - other.array(n))

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            if not self.coeffs or not other.coeffs:
                return Polynomial()
            return Polynomial(np.convolve(self.array(), other.array()))
        return Polynomial(self.array() * float(other))

    __rmul__ = __mul__

    def compose_affine(self, c: float, h: float) -> "Polynomial":
        """Return t -> p(c + h t)."""
        out = np.zeros(1)
        lin = np.array([c, h], dtype=float)
        for a in reversed(self.coeffs):
            out = np.convolve(out, lin)
            out[0] += a
        return Polynomial(out)

    def to_json(self) -> list:
        return list(self.coeffs)

    @classmethod
    def from_json(cls, data) -> "Polynomial":
        if not isinstance(data, list) or not all(isinstance(v, (int, float)) for v in data):
            raise ValidationError("polynomial JSON must be an array of numbers")
        return cls(data)

    def __repr__(self):
        return f"Polynomial({list(self.coeffs)})"


def poly_eval(p: Polynomial, x):
    """Horner evaluation; works elementwise on arrays."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for a in reversed(p.coeffs):
        out = out * x + a
    return float(out) if out.ndim == 0 else out


def poly_derivative(p: Polynomial) -> Polynomial:
    return Polynomial([k * p.coeffs[k] for k in range(1, len(p.coeffs))])


@lru_cache(maxsize=None)
def arcsine_moment(k: int) -> float:
    """k-th moment of the arcsine law on [-2, 2]: central binomial for even k."""
    if k < 0:
        raise ValidationError("moment order must be nonnegative")
    return float(math.comb(k, k // 2)) if k % 2 == 0 else 0.0


@lru_cache(maxsize=None)
def sc_moment(k: int) -> float:
    """k-th moment of the semicircle law on [-2, 2]: Catalan numbers."""
    if k < 0:
        raise ValidationError("moment order must be nonnegative")
    if k % 2:
        return 0.0
    m = k // 2
    return float(math.comb(2 * m, m) // (m + 1))


def _divided_difference_contract(c: Sequence[float], moment) -> np.ndarray:
    # sum_j c_j sum_{i<j} x^i * moment(j-1-i)
    n = len(c)
    out = np.zeros(max(n - 1, 0))
    for j in range(1, n):
        if c[j] == 0.0:
            continue
        for i in range(j):
            out[i] += c[j] * moment(j - 1 - i)
    return out


def v_to_a(V: Polynomial) -> Polynomial:
    """Density polynomial A for a potential already living on [-2, 2].

    A(x) = int (V'(x) - V'(t)) / (x - t) d nu(t), nu the arcsine law.
    """
    dv = poly_derivative(V)
    return Polynomial(_divided_difference_contract(dv.coeffs, arcsine_moment))


def a_to_v_prime(A: Polynomial) -> Polynomial:
    """Inverse map: V'(x) = x A(x) - 2 int (A(x) - A(t)) / (x - t) dSC(t)."""
    xa = Polynomial((0.0,) + A.coeffs) if A.coeffs else Polynomial()
    corr = Polynomial(_divided_difference_contract(A.coeffs, sc_moment))
    return xa - 2.0 * corr


@dataclass(frozen=True)
class PotentialReport:
    degree: int
    d: int
    leading: float
    confining: bool = True


def validate_potential(V: Polynomial) -> PotentialReport:
    """Check V is an admissible confining potential (even degree >= 2, positive lead)."""
    if V.degree <= 0:
        raise ValidationError("potential must have degree at least 2")
    if V.degree % 2:
        raise ValidationError("potential must have even degree")
    if V.leading <= 0:
        raise ValidationError("potential must have positive leading coefficient")
    return PotentialReport(degree=V.degree, d=V.degree // 2, leading=V.leading)
