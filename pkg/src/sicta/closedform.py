"""Alternating binomial-sum formulas for the mean slot counts.

The sums ``sum_i C(n, i) (-1)^i ...`` cancel catastrophically: terms reach
about ``2**n`` while the result is O(n). Rational distributions are therefore
evaluated in exact arithmetic for moderate n, and everything else in mpmath
floats whose precision is scaled to n and re-checked at a higher precision.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import mpmath

from .errors import PrecisionExhausted, TruncationTooTight
from .splitmodel import SplitDistribution

OBSERVABLES = ("L", "C", "S", "I")
OBSERVABLE_NAMES = {"L": "length", "C": "collisions", "S": "successes", "I": "idle"}

EXACT_N_LIMIT = 64
TARGET_BITS = 64
MAX_PRECISION = 1 << 20


@dataclass(frozen=True)
class ClosedFormValue:
    value: object
    n: int
    observable: str
    arithmetic_mode: str  # "rational" or "high-precision"
    precision_bits: int | None = None

    def __float__(self) -> float:
        return float(self.value)


# Term functions get (i, p1, pp, tp, qprev): first powers of p, the i-th powers
# of p and of the length tails F(0..d-2), and the (i-1)-th powers of
# F(0..d-1). They return the summand without its C(n, i) (-1)^i factor.


def _term_length(i, p1, pp, tp, qprev):
    return (i - 1) * sum(tp) / (1 - sum(pp))


def _term_collisions(i, p1, pp, tp, qprev):
    return (i - 1) * (1 - pp[-1]) / (1 - sum(pp))


def _term_successes(i, p1, pp, tp, qprev):
    # the (-1)^{i-1} of the successes sum is folded into the leading minus
    s = sum(a * b for a, b in zip(p1, qprev))
    return -i * (1 - s) / (1 - sum(pp))


def _term_idle_printed(i, p1, pp, tp, qprev):
    inner = sum(tp[1:]) + pp[-1]
    s = sum(a * b for a, b in zip(p1, qprev))
    return ((i - 1) * inner + i * s) / (1 - sum(pp))


_TERMS = {
    "L": (_term_length, 1),
    "C": (_term_collisions, 0),
    "S": (_term_successes, None),  # constant is n, or 1 when paper_literal
    "I_printed": (_term_idle_printed, 0),
}


def _evaluate(dist: SplitDistribution, n: int, key: str, one, const):
    """``const + sum_{i=2}^n C(n, i) (-1)^i term_i`` in the scalar type of ``one``."""
    term = _TERMS[key][0]
    p1 = [one * x for x in dist.p]
    t1 = [one * x for x in dist.tail[: dist.d - 1]]
    q1 = [one * x for x in dist.tail]
    pp, tp, qp = list(p1), list(t1), list(q1)
    total = one * const
    binom = n
    for i in range(2, n + 1):
        binom = binom * (n - i + 1) // i
        qprev = qp
        pp = [a * b for a, b in zip(pp, p1)]
        tp = [a * b for a, b in zip(tp, t1)]
        qp = [a * b for a, b in zip(qp, q1)]
        t = term(i, p1, pp, tp, qprev)
        if i % 2:
            total -= binom * t
        else:
            total += binom * t
    return total


def _constant(key: str, n: int, paper_literal: bool):
    if key == "S":
        if n == 0:
            return 0
        return 1 if paper_literal else n
    return _TERMS[key][1]


def _working_precision(dist: SplitDistribution, n: int) -> int:
    return n + 2 * max(n, 1).bit_length() + TARGET_BITS + 32


def _high_precision(dist, n, key, const, prec=None):
    prec = prec or _working_precision(dist, n)
    while True:
        if prec > MAX_PRECISION:
            raise PrecisionExhausted(f"n={n} needs more than {MAX_PRECISION} bits")
        with mpmath.workprec(prec):
            one = mpmath.mpf(1)
            v1 = _evaluate(dist, n, key, one, const)
        with mpmath.workprec(prec + TARGET_BITS):
            one = mpmath.mpf(1)
            v2 = _evaluate(dist, n, key, one, const)
            scale = max(abs(v2), mpmath.mpf(1))
            if abs(v1 - v2) <= scale * mpmath.ldexp(1, -TARGET_BITS):
                return v2, prec + TARGET_BITS
        prec *= 2


def _closed(dist, n, key, observable, paper_literal=False, mode=None):
    if n < 0:
        raise ValueError("n must be nonnegative")
    const = _constant(key, n, paper_literal)
    if mode is None:
        mode = "rational" if dist.exact and n <= EXACT_N_LIMIT else "high-precision"
    if mode == "rational":
        if not dist.exact:
            raise ValueError("rational mode needs an exact distribution")
        value = _evaluate(dist, n, key, Fraction(1), const)
        return ClosedFormValue(value, n, observable, "rational")
    value, bits = _high_precision(dist, n, key, const)
    return ClosedFormValue(value, n, observable, "high-precision", bits)


def mean_cri_length(dist: SplitDistribution, n: int, mode: str | None = None) -> ClosedFormValue:
    """Mean CRI length ``L_n``.

    ``mode`` forces ``"rational"`` or ``"high-precision"``; by default exact
    distributions use rationals up to n = 64.
    """
    return _closed(dist, n, "L", "length", mode=mode)


def mean_collisions(dist: SplitDistribution, n: int, mode: str | None = None) -> ClosedFormValue:
    return _closed(dist, n, "C", "collisions", mode=mode)


def mean_successes(
    dist: SplitDistribution, n: int, mode: str | None = None, paper_literal: bool = False
) -> ClosedFormValue:
    """Mean number of success slots ``S_n``.

    The constant in front of the sum is ``n``: the i = 1 term of the Poisson
    transform contributes ``S_1 - S_0 = 1`` per packet. ``paper_literal=True``
    uses a constant of 1 instead, which is kept only to show that it disagrees
    with exact enumeration from n = 2 on.
    """
    return _closed(dist, n, "S", "successes", paper_literal=paper_literal, mode=mode)


def mean_idle(
    dist: SplitDistribution, n: int, mode: str | None = None, paper_literal: bool = False
) -> ClosedFormValue:
    """Mean number of idle slots, computed as ``L_n - C_n - S_n``.

    ``paper_literal=True`` evaluates the alternative printed binomial sum for
    comparison; it does not match ``l - c - s``.
    """
    if paper_literal:
        return _closed(dist, n, "I_printed", "idle", mode=mode)
    L = mean_cri_length(dist, n, mode=mode)
    C = mean_collisions(dist, n, mode=L.arithmetic_mode)
    S = mean_successes(dist, n, mode=L.arithmetic_mode)
    if L.arithmetic_mode == "rational":
        return ClosedFormValue(L.value - C.value - S.value, n, "idle", "rational")
    bits = min(L.precision_bits, C.precision_bits, S.precision_bits)
    with mpmath.workprec(bits):
        value = L.value - C.value - S.value
    return ClosedFormValue(value, n, "idle", L.arithmetic_mode, bits)


CLOSED_FORMS = {
    "L": mean_cri_length,
    "C": mean_collisions,
    "S": mean_successes,
    "I": mean_idle,
}


def closed_form(dist, observable: str, n: int, mode=None, paper_literal=False) -> ClosedFormValue:
    fn = CLOSED_FORMS[observable]
    if observable in ("S", "I"):
        return fn(dist, n, mode=mode, paper_literal=paper_literal)
    return fn(dist, n, mode=mode)


@dataclass(frozen=True)
class FunctionalResidual:
    residual: float
    truncation_bound: float


def pgf_functional_residual(dist: SplitDistribution, x, z, j_max: int, max_truncation=None) -> FunctionalResidual:
    """Check the splitting functional equation on truncated series.

    With ``Q(x, z) = sum_j z^j q_j(x)`` built from the first ``j_max`` CRI-length
    coefficient functions, returns ``|Q(x,z) - prod_i Q(p_i x, z)
    - sum_{k<=d-2} (z - z^2) f_k(x) prod_{i<=k} Q(p_i x, z)|`` together with a
    bound on what truncating the series can contribute.
    """
    from .delay import cri_length_pgf_coefficients

    qs = cri_length_pgf_coefficients(dist, j_max)
    x = mpmath.mpf(x)
    z = mpmath.mpmathify(z)
    p = [mpmath.mpf(float(v)) if not dist.exact else mpmath.mpf(v.numerator) / v.denominator for v in dist.p]
    tail = [mpmath.mpf(v.numerator) / v.denominator if dist.exact else mpmath.mpf(v) for v in dist.tail]

    def series(arg):
        vals = [q(arg) for q in qs]
        total = mpmath.fsum(z**j * v for j, v in enumerate(vals))
        deficit = 1 - mpmath.fsum(vals)
        return total, abs(deficit)

    lhs, lhs_def = series(x)
    factors = [series(pi * x) for pi in p]
    rhs = mpmath.mpf(1)
    prod_bound = 0
    for val, dfc in factors:
        rhs *= val
        prod_bound += dfc
    bound = lhs_def + prod_bound
    for k in range(dist.d - 1):
        fk = (1 + tail[k] * x) * mpmath.exp(-tail[k] * x)
        partial = mpmath.mpf(1)
        part_bound = 0
        for val, dfc in factors[:k]:
            partial *= val
            part_bound += dfc
        rhs += (z - z**2) * fk * partial
        bound += abs(z - z**2) * fk * part_bound
    resid = float(abs(lhs - rhs))
    if max_truncation is not None and bound > max_truncation:
        raise TruncationTooTight(f"series truncation bound {float(bound):.3e} at j_max={j_max}")
    return FunctionalResidual(resid, float(bound))
