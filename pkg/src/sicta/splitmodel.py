"""Splitting distributions, CRI outcomes and the last-counted-slot rule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

from .errors import InvalidOccupancy, RejectedDistribution

FLOAT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class SplitDistribution:
    """Probability vector ``p`` over the ``d`` child slots of a collision.

    ``p`` holds :class:`fractions.Fraction` entries when ``exact`` is true and
    Python floats otherwise. ``tail[k]`` is the mass strictly to the right of
    slot ``k``, i.e. ``sum(p[k:])`` with 0-based slicing, for k = 0..d-1.
    """

    p: tuple
    exact: bool
    tail: tuple = field(init=False, repr=False)

    def __post_init__(self):
        tail = []
        acc = Fraction(0) if self.exact else 0.0
        for x in reversed(self.p):
            acc = acc + x
            tail.append(acc)
        tail.reverse()
        tail[0] = Fraction(1) if self.exact else 1.0
        object.__setattr__(self, "tail", tuple(tail[: self.d]))

    @property
    def d(self) -> int:
        return len(self.p)

    def floats(self) -> tuple[float, ...]:
        return tuple(float(x) for x in self.p)

    def entropy(self) -> float:
        """Shannon entropy in nats, ``-sum p log p`` with ``0 log 0 = 0``."""
        return -sum(x * math.log(x) for x in self.floats() if x > 0)

    def label(self) -> str:
        return ",".join(str(x) for x in self.p)


@dataclass(frozen=True)
class CriOutcome:
    """Counted slots of one realized CRI split by kind."""

    l: int
    c: int
    s: int
    i: int

    def __post_init__(self):
        if self.l != self.c + self.s + self.i:
            raise ValueError(f"slot kinds do not add up: {self}")


def _coerce(x):
    if isinstance(x, (Fraction, int)) or isinstance(x, Rational):
        return Fraction(x), True
    if isinstance(x, str):
        return Fraction(x.strip()), True
    return float(x), False


def make_split_distribution(p: Sequence) -> SplitDistribution:
    """Validate ``p`` and build a :class:`SplitDistribution`.

    Integers, fractions and decimal/fraction strings are kept as exact
    rationals; anything else (floats, numpy scalars) switches the whole vector
    to float mode, where the sum is checked to within ``FLOAT_SUM_TOL``.
    """
    if len(p) < 2:
        raise RejectedDistribution(f"need d >= 2 entries, got {len(p)}")
    coerced = [_coerce(x) for x in p]
    exact = all(flag for _, flag in coerced)
    if exact:
        values = tuple(v for v, _ in coerced)
        total = sum(values)
        if total != 1:
            raise RejectedDistribution(f"probabilities sum to {total}, not 1")
    else:
        values = tuple(float(v) for v, _ in coerced)
        total = math.fsum(values)
        if not math.isfinite(total) or abs(total - 1.0) > FLOAT_SUM_TOL:
            raise RejectedDistribution(f"probabilities sum to {total!r}, not 1")
    if any(v < 0 for v in values):
        raise RejectedDistribution(f"negative probability in {values}")
    if max(values) >= 1:
        raise RejectedDistribution("a probability of 1 makes the CRI non-terminating")
    return SplitDistribution(values, exact)


def pbi(d: int) -> SplitDistribution:
    """The biased split ``p_i = 2**-min(i, d-1)``, as exact rationals."""
    if d < 2:
        raise RejectedDistribution(f"need d >= 2, got {d}")
    return make_split_distribution([Fraction(1, 2 ** min(i, d - 1)) for i in range(1, d + 1)])


def fair(d: int) -> SplitDistribution:
    if d < 2:
        raise RejectedDistribution(f"need d >= 2, got {d}")
    return make_split_distribution([Fraction(1, d)] * d)


def parse_distribution(text: str) -> SplitDistribution:
    """Parse ``"1/2,1/4,1/4"``, ``"0.3,0.7"``, ``"pbi:<d>"`` or ``"fair:<d>"``."""
    text = text.strip()
    if ":" in text:
        kind, _, arg = text.partition(":")
        kind = kind.strip().lower()
        try:
            d = int(arg)
        except ValueError:
            raise RejectedDistribution(f"bad branching factor in {text!r}") from None
        if kind == "pbi":
            return pbi(d)
        if kind == "fair":
            return fair(d)
        raise RejectedDistribution(f"unknown distribution shorthand {kind!r}")
    try:
        parts = [Fraction(tok.strip()) for tok in text.split(",") if tok.strip()]
    except (ValueError, ZeroDivisionError):
        raise RejectedDistribution(f"cannot parse distribution {text!r}") from None
    return make_split_distribution(parts)


def last_counted_slot(counts: Sequence[int], n: int) -> int:
    """1-based index ``M`` of the last slot that is actually transmitted.

    ``M`` is the smallest ``k`` whose prefix occupancy reaches ``n - 1``; every
    slot to its right holds at most one packet in total and is recovered by
    interference cancellation instead.
    """
    if sum(counts) != n:
        raise InvalidOccupancy(f"occupancies {tuple(counts)} do not sum to n={n}")
    if n < 2:
        raise InvalidOccupancy("M is only defined for collisions, n >= 2")
    acc = 0
    for k, c in enumerate(counts, start=1):
        acc += c
        if acc >= n - 1:
            return k
    raise AssertionError("unreachable: prefix sums end at n")
