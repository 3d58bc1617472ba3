"""Leading per-packet constants and the oscillating corrections.

The mean counts are harmonic sums over the splitting tree. Their Mellin
transforms have a simple pole at ``s = -1`` (the leading constant) and, when
every ``p_j`` is an integer power of a common base ``c``, a whole row of poles
``s = -1 + i m 2 pi / |log c|`` whose residues add a small periodic wobble in
``log n``. The residue sums are evaluated with :func:`complex_gamma`.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from math import gcd

from .errors import DegenerateDistribution, TailBoundTooLarge
from .special import complex_gamma
from .splitmodel import SplitDistribution

DEFAULT_M_MAX = 16
MAX_M_MAX = 256
TAIL_TARGET = 1e-10


@dataclass(frozen=True)
class LatticeStructure:
    base: float
    exponents: tuple[int, ...]

    @property
    def y_step(self) -> float:
        return 2 * math.pi / abs(math.log(self.base))


@dataclass(frozen=True)
class AsymptoticResult:
    observable: str
    leading: float
    oscillation: float
    n: int
    m_max: int
    tail_bound: float


def _entropy(dist: SplitDistribution) -> float:
    h = dist.entropy()
    if not h > 0:
        raise DegenerateDistribution("zero entropy: the split never separates packets")
    return h


def leading_term(dist: SplitDistribution, observable: str, paper_literal: bool = False) -> float:
    """Limit of (mean count)/n without the oscillating part, for L, C, S or I.

    For successes the limit is ``1 + sum_{k>=2} p_k log F(k-1) / H`` with ``H``
    the entropy: the harmonic part of ``S_n - n`` is negative. The printed
    variant ``-sum p_k log F(k-1) / H`` (``paper_literal=True``) only agrees with
    it where both equal 1/2, e.g. at the ``pbi`` splits.
    """
    p = dist.floats()
    tail = [float(t) for t in dist.tail]
    d = dist.d
    h = _entropy(dist)
    # sum_{k=2}^d p_k log F(k-1); F(k-1) >= p_k > 0 whenever the term is kept
    succ = sum(p[k] * math.log(tail[k]) for k in range(1, d) if p[k] > 0)
    if observable == "L":
        return sum(tail[: d - 1]) / h
    if observable == "C":
        return (1 - p[-1]) / h
    if observable == "S":
        return -succ / h if paper_literal else 1 + succ / h
    if observable == "I":
        if paper_literal:
            return (sum(tail[1 : d - 1]) + p[-1] + succ) / h
        return (sum(tail[1 : d - 1]) + p[-1] - succ) / h - 1
    raise ValueError(f"unknown observable {observable!r}")


def mst(dist: SplitDistribution) -> float:
    """Maximum stable throughput of gated access, in packets per slot."""
    return 1.0 / leading_term(dist, "L")


def detect_lattice(dist: SplitDistribution, tol: float = 1e-12, k_cap: int = 64) -> LatticeStructure | None:
    """Find ``c`` and coprime integers ``k_j`` with ``p_j = c**k_j`` for all ``p_j > 0``.

    Each ratio ``log p_j / log p_1`` is matched to its best rational
    approximation with denominator at most ``k_cap``; ``None`` if any ratio has
    no such approximation within ``tol``.
    """
    logs = [math.log(x) for x in dist.floats() if x > 0]
    ref = logs[0]
    ratios = []
    for lg in logs:
        r = lg / ref
        frac = Fraction(r).limit_denominator(k_cap)
        if abs(float(frac) - r) > tol * max(1.0, abs(r)):
            return None
        ratios.append(frac)
    denom = 1
    for fr in ratios:
        denom = denom * fr.denominator // gcd(denom, fr.denominator)
    ks = [int(fr * denom) for fr in ratios]
    g = 0
    for k in ks:
        g = gcd(g, k)
    ks = [k // g for k in ks]
    if max(ks) > k_cap:
        return None
    base = math.exp(ref / ks[0])
    if any(abs(math.log(x) - k * math.log(base)) > tol * max(1.0, abs(math.log(x))) for x, k in zip(
            [x for x in dist.floats() if x > 0], ks)):
        return None
    return LatticeStructure(base, tuple(ks))


def _mellin_factor(dist: SplitDistribution, observable: str, s: complex) -> complex:
    """Mellin transform of the per-leaf function (summed over its scale factors) at ``s``."""
    p = dist.floats()
    tail = [float(t) for t in dist.tail]
    d = dist.d
    if observable in ("L", "C"):
        # f(x) = 1 - e^{-x}(1 + x) has transform -(s+1) Gamma(s); scaling by alpha
        # multiplies it by alpha^{-s}
        core = -(s + 1) * complex_gamma(s)
        if observable == "C":
            # the collision summand 1 - p_d^i spans the scales 1 and p_d
            return core * (1 - (p[-1] ** (-s) if p[-1] > 0 else 0))
        return core * sum(a ** (-s) for a in tail[: d - 1] if a > 0)
    if observable == "S":
        g = complex_gamma(s + 1)
        return g * sum(p[k] * (1 - tail[k] ** (-1 - s)) for k in range(1, d) if p[k] > 0)
    raise ValueError(observable)


def _term_bound(dist: SplitDistribution, observable: str, y: float) -> float:
    """Upper bound on |Mellin factor| at ``-1 + iy`` from |Gamma(iy)|^2 = pi/(y sinh(pi y))."""
    p = dist.floats()
    tail = [float(t) for t in dist.tail]
    d = dist.d
    if math.pi * y > 700:
        return 0.0
    gamma_iy = math.sqrt(math.pi / (y * math.sinh(math.pi * y)))
    if observable == "L":
        weight = sum(tail[: d - 1])
    elif observable == "C":
        weight = 1 + p[-1]
    else:
        weight = 2 * sum(p[1:])
    return weight * gamma_iy


def oscillation(
    dist: SplitDistribution,
    observable: str,
    n: int,
    m_max: int | None = None,
    tol: float | None = None,
) -> AsymptoticResult:
    """Periodic correction to (mean count)/n at ``n`` from the lattice poles.

    Exactly zero when the ``p_j`` are not commensurable. Otherwise the
    conjugate pole pairs ``m = 1..m_max`` are summed; with ``m_max=None`` the
    order starts at 16 and grows until the tail bound drops below 1e-10 (or
    256 is reached). ``tol`` raises :class:`TailBoundTooLarge` when the final
    tail bound exceeds it.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    leading = leading_term(dist, observable)
    lattice = detect_lattice(dist)
    if lattice is None:
        return AsymptoticResult(observable, leading, 0.0, n, 0, 0.0)
    if observable == "I":
        parts = [oscillation(dist, o, n, m_max, None) for o in ("L", "C", "S")]
        value = parts[0].oscillation - parts[1].oscillation - parts[2].oscillation
        bound = sum(r.tail_bound for r in parts)
        result = AsymptoticResult("I", leading, value, n, max(r.m_max for r in parts), bound)
        _check_tail(result, tol)
        return result
    h = _entropy(dist)
    step = lattice.y_step
    ratio = math.exp(-math.pi * step / 2)

    def tail_after(m):
        # terms decay at least geometrically with ratio e^{-pi y_step / 2}
        return 2 * _term_bound(dist, observable, (m + 1) * step) / (1 - ratio) / h

    if m_max is None:
        m_max = DEFAULT_M_MAX
        while tail_after(m_max) > TAIL_TARGET and m_max < MAX_M_MAX:
            m_max *= 2
    log_n = math.log(n)
    total = 0.0
    for m in range(1, m_max + 1):
        y = m * step
        s = complex(-1, y)
        term = cmath.exp(-1j * y * log_n) * _mellin_factor(dist, observable, s)
        conj = cmath.exp(1j * y * log_n) * _mellin_factor(dist, observable, s.conjugate())
        pair = term + conj
        total += pair.real
    result = AsymptoticResult(observable, leading, total / h, n, m_max, tail_after(m_max))
    _check_tail(result, tol)
    return result


def _check_tail(result: AsymptoticResult, tol) -> None:
    if tol is not None and result.tail_bound > tol:
        raise TailBoundTooLarge(f"tail bound {result.tail_bound:.3e} > {tol:.3e} at m_max={result.m_max}")


def pole_pair_imbalance(dist: SplitDistribution, observable: str, n: int, m_max: int = DEFAULT_M_MAX) -> float:
    """Largest |Im| of a conjugate pole pair; zero up to rounding."""
    lattice = detect_lattice(dist)
    if lattice is None:
        return 0.0
    worst = 0.0
    log_n = math.log(n)
    for m in range(1, m_max + 1):
        y = m * lattice.y_step
        s = complex(-1, y)
        pair = cmath.exp(-1j * y * log_n) * _mellin_factor(dist, observable, s) + cmath.exp(
            1j * y * log_n
        ) * _mellin_factor(dist, observable, s.conjugate())
        worst = max(worst, abs(pair.imag))
    return worst
