"""Exact small-n ground truth by enumerating multinomial split outcomes.

Everything here is computed in the scalar type of the distribution (exact
fractions for rational ``p``), straight from the recursive definitions of the
four slot counts. It is deliberately slow and simple: the closed forms and the
generating-function machinery are checked against it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator

from .errors import TruncationTooTight
from .splitmodel import SplitDistribution, last_counted_slot

# (l, c, s, i) for n = 0 and n = 1
BASE = {
    "L": (1, 1),
    "C": (0, 0),
    "S": (0, 1),
    "I": (1, 0),
}
# observables that pay for the extra slot 1{M < d}
_PAYS_EXTRA = {"L": 1, "C": 1, "S": 0, "I": 0}


@dataclass(frozen=True)
class ExpectationTable:
    dist: SplitDistribution
    n_max: int
    L: tuple
    C: tuple
    S: tuple
    I: tuple

    def row(self, n: int) -> tuple:
        return self.L[n], self.C[n], self.S[n], self.I[n]

    def column(self, observable: str) -> tuple:
        return getattr(self, observable)


@dataclass(frozen=True)
class CriLengthDistribution:
    """``probs[j]`` is P(l_n = j) for j = 0..j_max; ``residual`` is the mass above j_max."""

    n: int
    j_max: int
    probs: tuple
    residual: object

    def mean_lower_bound(self):
        return sum(j * q for j, q in enumerate(self.probs))


@lru_cache(maxsize=None)
def compositions(n: int, d: int) -> tuple[tuple[int, ...], ...]:
    """All weak compositions of ``n`` into ``d`` ordered parts."""
    if d == 1:
        return ((n,),)
    out = []
    for first in range(n + 1):
        for rest in compositions(n - first, d - 1):
            out.append((first,) + rest)
    return tuple(out)


def split_outcomes(dist: SplitDistribution, n: int) -> Iterator[tuple[tuple[int, ...], object]]:
    """Yield ``(mu, P(mu))`` over the multinomial support of ``n`` packets."""
    one = Fraction(1) if dist.exact else 1.0
    fact_n = math.factorial(n)
    for mu in compositions(n, dist.d):
        weight = one * fact_n
        for m, pj in zip(mu, dist.p):
            weight = weight / math.factorial(m) * (pj**m if m else one)
        if weight:
            yield mu, weight


def exact_expectations(dist: SplitDistribution, n_max: int) -> ExpectationTable:
    """E[l_n], E[c_n], E[s_n], E[i_n] for n = 0..n_max by full enumeration."""
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    zero = Fraction(0) if dist.exact else 0.0
    d = dist.d
    tables = {obs: [zero + BASE[obs][0], zero + BASE[obs][1]] for obs in BASE}
    for n in range(2, n_max + 1):
        b = {obs: zero for obs in BASE}
        a = zero  # mass of outcomes whose counted prefix contains the whole collision again
        for mu, w in split_outcomes(dist, n):
            M = last_counted_slot(mu, n)
            extra = 1 if M < d else 0
            self_ref = any(mu[j] == n for j in range(M))
            if self_ref:
                a += w
            for obs, col in tables.items():
                acc = _PAYS_EXTRA[obs] * extra
                for j in range(M):
                    if mu[j] != n:
                        acc = acc + col[mu[j]]
                b[obs] += w * acc
        for obs, col in tables.items():
            col.append(b[obs] / (1 - a))
    return ExpectationTable(
        dist,
        n_max,
        *(tuple(tables[obs][: n_max + 1]) for obs in ("L", "C", "S", "I")),
    )


def _length_tables(dist: SplitDistribution, n: int, j_max: int) -> list[list]:
    """P(l_m = j) for all m <= n and j <= j_max, by (packet count, length) DP."""
    zero = Fraction(0) if dist.exact else 0.0
    one = zero + 1
    d = dist.d
    base = [zero] * (j_max + 1)
    if j_max >= 1:
        base[1] = one
    tables = [list(base), list(base)]
    for m in range(2, n + 1):
        rhs = [zero] * (j_max + 1)
        # self-referencing outcomes shift l_m by a fixed amount with weight p_k^m
        shifts: dict[int, object] = {}
        for mu, w in split_outcomes(dist, m):
            M = last_counted_slot(mu, m)
            shift = 1 if M < d else 0
            parts = []
            self_ref = False
            for j in range(M):
                if mu[j] == m:
                    self_ref = True
                elif mu[j] <= 1:
                    shift += 1
                else:
                    parts.append(tables[mu[j]])
            if self_ref:
                shifts[shift] = shifts.get(shift, zero) + w
                continue
            conv = [zero] * (j_max + 1)
            if shift <= j_max:
                conv[shift] = one
            for part in parts:
                conv = _convolve(conv, part, j_max, zero)
            for j, v in enumerate(conv):
                if v:
                    rhs[j] += w * v
        row = [zero] * (j_max + 1)
        for j in range(j_max + 1):
            v = rhs[j]
            for shift, w in shifts.items():
                if j - shift >= 0:
                    v += w * row[j - shift]
            row[j] = v
        tables.append(row)
    return tables


def _convolve(a, b, j_max, zero):
    out = [zero] * (j_max + 1)
    for i, x in enumerate(a):
        if not x:
            continue
        for k, y in enumerate(b[: j_max + 1 - i]):
            if y:
                out[i + k] += x * y
    return out


def exact_cri_distribution(
    dist: SplitDistribution, n: int, j_max: int, max_residual=None
) -> CriLengthDistribution:
    """Exact law of the CRI length ``l_n`` truncated at ``j_max``.

    Lengths above ``j_max`` are not renormalized away; their total mass is
    returned as ``residual``. Raises :class:`TruncationTooTight` when a bound
    is given and the residual exceeds it.
    """
    if n < 0 or j_max < 0:
        raise ValueError("n and j_max must be nonnegative")
    probs = _length_tables(dist, n, j_max)[n]
    residual = 1 - sum(probs)
    if max_residual is not None and residual > max_residual:
        raise TruncationTooTight(f"residual mass {float(residual):.3e} above j_max={j_max}")
    return CriLengthDistribution(n, j_max, tuple(probs), residual)


def exact_cri_distributions(dist: SplitDistribution, n_max: int, j_max: int) -> list[CriLengthDistribution]:
    """Same as :func:`exact_cri_distribution` for every n <= n_max at once."""
    tables = _length_tables(dist, n_max, j_max)
    return [CriLengthDistribution(m, j_max, tuple(row), 1 - sum(row)) for m, row in enumerate(tables)]


def exact_tagged_resolution(dist: SplitDistribution, m_max: int) -> list:
    """``E[t_{2,m}]`` for m = 0..m_max: slots until a tagged packet with ``m`` rivals resolves.

    The tagged packet picks slot ``g``; it waits for slot ``g`` itself when
    ``g < d``, for the full resolution of every earlier subtree, and then for
    its own subgroup. The outcome with all rivals in slot ``g`` refers back to
    ``m`` and is solved for.
    """
    one = Fraction(1) if dist.exact else 1.0
    d = dist.d
    L = exact_expectations(dist, m_max).L
    T = [one]
    for m in range(1, m_max + 1):
        b = one * 0
        a = one * 0
        for g in range(d):
            pg = dist.p[g]
            if not pg:
                continue
            acc = one * (1 if g < d - 1 else 0)
            for j in range(g):
                acc += sum(_binom_pmf(m, r, dist.p[j], one) * L[r] for r in range(m + 1))
            acc += sum(_binom_pmf(m, r, pg, one) * T[r] for r in range(m))
            b += pg * acc
            a += pg * pg**m
        T.append(b / (1 - a))
    return T


def _binom_pmf(m, r, p, one):
    return one * math.comb(m, r) * p**r * (1 - p) ** (m - r)
