"""Exponential polynomials ``sum coeff * x**a * exp(-b x)``."""
from __future__ import annotations

import math
from fractions import Fraction

import mpmath

from .errors import TermBlowup


class ExpPoly:
    """Finite sum of ``coeff * x**a * exp(-b * x)`` keyed by ``(a, b)``.

    Coefficients and decay rates may be fractions (exact algebra) or floats.
    Zero coefficients are dropped; with ``prune`` set, so are coefficients whose
    magnitude falls below it.
    """

    __slots__ = ("terms",)

    def __init__(self, terms=None, prune=None):
        clean = {}
        for key, c in (terms or {}).items():
            if c == 0 or (prune is not None and abs(c) < prune):
                continue
            clean[key] = c
        self.terms = clean

    @classmethod
    def constant(cls, c) -> "ExpPoly":
        return cls({(0, Fraction(0) if isinstance(c, (int, Fraction)) else 0.0): c})

    @classmethod
    def zero(cls) -> "ExpPoly":
        return cls()

    def __bool__(self):
        return bool(self.terms)

    def __len__(self):
        return len(self.terms)

    def __eq__(self, other):
        if not isinstance(other, ExpPoly):
            return NotImplemented
        return self.terms == other.terms

    def __repr__(self):
        parts = [f"{c}*x^{a}*e^(-{b}x)" for (a, b), c in sorted(self.terms.items(), key=lambda kv: (kv[0][1], kv[0][0]))]
        return "ExpPoly(" + " + ".join(parts) + ")" if parts else "ExpPoly(0)"

    def __add__(self, other: "ExpPoly") -> "ExpPoly":
        out = dict(self.terms)
        for key, c in other.terms.items():
            out[key] = out.get(key, 0) + c
        return ExpPoly(out)

    def __neg__(self) -> "ExpPoly":
        return ExpPoly({k: -c for k, c in self.terms.items()})

    def __sub__(self, other: "ExpPoly") -> "ExpPoly":
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, ExpPoly):
            return ExpPoly({k: c * other for k, c in self.terms.items()})
        out: dict = {}
        for (a1, b1), c1 in self.terms.items():
            for (a2, b2), c2 in other.terms.items():
                key = (a1 + a2, b1 + b2)
                out[key] = out.get(key, 0) + c1 * c2
        return ExpPoly(out)

    __rmul__ = __mul__

    def scale(self, p) -> "ExpPoly":
        """The function ``x -> self(p * x)``."""
        out: dict = {}
        for (a, b), c in self.terms.items():
            key = (a, b * p)
            out[key] = out.get(key, 0) + c * p**a
        return ExpPoly(out)

    def pruned(self, threshold, cap=None) -> "ExpPoly":
        out = ExpPoly(self.terms, prune=threshold)
        if cap is not None and len(out) > cap:
            raise TermBlowup(f"{len(out)} terms exceed the cap of {cap}")
        return out

    def __call__(self, x):
        """Evaluate with mpmath at the current working precision."""
        x = mpmath.mpmathify(x)
        total = mpmath.mpf(0)
        for (a, b), c in self.terms.items():
            cb = mpmath.mpf(b.numerator) / b.denominator if isinstance(b, Fraction) else mpmath.mpf(b)
            cc = mpmath.mpf(c.numerator) / c.denominator if isinstance(c, Fraction) else mpmath.mpf(c)
            total += cc * x**a * mpmath.exp(-cb * x)
        return total

    def poisson_coefficients(self, rate=1) -> dict[int, object]:
        """Coefficients ``P_n`` with ``self(x) = sum_n P_n exp(-rate x) x**n / n!``.

        Requires every term to decay at exactly ``rate``.
        """
        out = {}
        for (a, b), c in self.terms.items():
            if b != rate:
                raise ValueError(f"term x^{a} e^(-{b} x) does not decay at rate {rate}")
            out[a] = c * math.factorial(a)
        return out
