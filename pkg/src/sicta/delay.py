"""Steady-state CRI lengths and packet delay under gated access.

``q_j(x) = sum_n P(l_n = j) e^{-x} x^n / n!`` is the Poisson transform of the
CRI-length law. Splitting the first collision gives a recursion in ``j``:

    q_j = Q(d, j) + sum_{k=0}^{d-2} f_k * (Q(k, j-1) - Q(k, j-2))

where ``Q(k, j)`` sums ``prod_i q_{mu_i}(p_i x)`` over compositions of ``j``
into ``k`` positive parts and ``f_k(x) = (1 + Fbar(k) x) e^{-Fbar(k) x}``.
Two implementations are provided: exact :class:`ExpPoly` algebra (fine up to
j of a few dozen) and a numeric one on Poisson-coefficient arrays that scales
to the truncations needed for the Markov chain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np
from scipy import stats

from .asymptotics import mst
from .errors import (
    NonConvergent,
    NotStationary,
    SeriesNotConverged,
    TermBlowup,
    TruncationTooTight,
)
from .expoly import ExpPoly
from .splitmodel import SplitDistribution

DEFAULT_TRUNCATION = 200
MAX_TRUNCATION = 800
DEFICIT_TARGET = 1e-9
DEFAULT_TERM_CAP = 200_000
SERIES_EPS = 1e-12
SERIES_RUN = 5


def _f_poly(rate) -> ExpPoly:
    return ExpPoly({(0, rate): Fraction(1), (1, rate): rate})


# ---------------------------------------------------------------------------
# exact coefficient functions


def cri_length_pgf_coefficients(
    dist: SplitDistribution, j_max: int, term_cap: int | None = DEFAULT_TERM_CAP
) -> list[ExpPoly]:
    """Exact ``q_0 .. q_{j_max}`` as exponential polynomials.

    Coefficients are rational (float inputs are converted exactly). Raises
    :class:`TermBlowup` when a single ``q_j`` or ``Q(k, j)`` needs more than
    ``term_cap`` terms. Results are cached per distribution.
    """
    if j_max < 1:
        raise ValueError("j_max must be at least 1")
    return list(_coefficients(_key(dist), j_max, term_cap))


@lru_cache(maxsize=32)
def _coefficients(key: tuple, j_max: int, term_cap) -> tuple:
    d = len(key)
    p = list(key)
    cum = [Fraction(0)]
    for v in p:
        cum.append(cum[-1] + v)
    fk = [_f_poly(1 - cum[k]) for k in range(d - 1)]
    one = ExpPoly({(0, Fraction(0)): Fraction(1)})
    q = [ExpPoly(), _f_poly(Fraction(1))]
    scaled = [[None, q[1].scale(p[i])] for i in range(d)]  # scaled[i][t] = q_t(p_i x)
    # Q[k][j]; Q[0][j] = 1{j = 0}
    Q = [[one] + [None] * j_max] + [[ExpPoly()] + [None] * j_max for _ in range(d)]

    def fill(k: int, j: int) -> None:
        if Q[k][j] is not None:
            return
        if k == 0:
            Q[0][j] = ExpPoly()
            return
        acc = ExpPoly()
        for t in range(1, j + 1):
            prev = Q[k - 1][j - t]
            if prev is None:
                fill(k - 1, j - t)
                prev = Q[k - 1][j - t]
            if prev:
                acc = acc + prev * scaled[k - 1][t]
        if term_cap is not None and len(acc) > term_cap:
            raise TermBlowup(f"Q({k}, {j}) has {len(acc)} terms (cap {term_cap})")
        Q[k][j] = acc

    for j in range(2, j_max + 1):
        for k in range(d):
            fill(k, j - 1)
        fill(d, j)
        total = Q[d][j]
        for k in range(d - 1):
            diff = Q[k][j - 1] - Q[k][j - 2]
            if diff:
                total = total + fk[k] * diff
        if term_cap is not None and len(total) > term_cap:
            raise TermBlowup(f"q_{j} has {len(total)} terms (cap {term_cap})")
        q.append(total)
        for i in range(d):
            scaled[i].append(total.scale(p[i]))
    return tuple(q)


def poisson_coefficients(q: ExpPoly) -> dict[int, Fraction]:
    """``{n: P(l_n = j)}`` read off an exact ``q_j``."""
    return q.poisson_coefficients(1)


# ---------------------------------------------------------------------------
# numeric coefficient table


def _pad_add(A: np.ndarray, B: np.ndarray, sign: float = 1.0) -> np.ndarray:
    if len(A) < len(B):
        A, B, flip = B, A, True
    else:
        flip = False
    out = A.copy() if not flip else sign * A
    out[: len(B)] += B if flip else sign * B
    return out


def cri_length_table(dist: SplitDistribution, n_max: int, j_max: int) -> np.ndarray:
    """``table[j, n] = P(l_n = j)`` for j <= j_max and n <= n_max, in floats.

    Same recursion as :func:`cri_length_pgf_coefficients`. A transform
    ``e^{-r x} sum_n A_n (r x)^n / n!`` is stored as the polynomial
    ``e^{r x} f(x)`` in the variable ``x / s`` with ``s = n_max / e``, i.e. as
    ``h_n = A_n (r s)^n / n!``; products become convolutions, ``x -> p x``
    multiplies ``h_n`` by ``p^n``, and the rescaling keeps every ``h_n`` inside
    double range. Coefficient ``n`` only depends on coefficients ``<= n``, so
    truncating at ``n_max`` is exact for what is kept.
    """
    if j_max < 1:
        raise ValueError("j_max must be at least 1")
    d = dist.d
    p = dist.floats()
    cum = np.concatenate([[0.0], np.cumsum(p)])
    cum[-1] = 1.0
    size = n_max + 1
    s = max(n_max / math.e, 1.0)
    idx = np.arange(size)
    powers = [np.power(pk, idx) if pk > 0 else (idx == 0).astype(float) for pk in p]

    def conv(a, b):
        out = np.convolve(a, b)
        return out[:size]

    def scaled(h, k):
        return h * powers[k][: len(h)]

    q1 = np.array([1.0, s])[:size]  # (1 + x) e^{-x}
    q = [np.zeros(1), q1]
    qs = [[None, scaled(q1, i)] for i in range(d)]
    zero = np.zeros(1)
    Q = [[np.ones(1)] + [zero] * j_max] + [[zero] + [None] * j_max for _ in range(d)]

    def fill(k, j):
        if Q[k][j] is not None:
            return
        acc = zero
        for t in range(1, j + 1):
            if Q[k - 1][j - t] is None:
                fill(k - 1, j - t)
            prev = Q[k - 1][j - t]
            if prev.any():
                acc = _pad_add(acc, conv(prev, qs[k - 1][t]))
        Q[k][j] = acc

    f_arr = [np.array([1.0, (1 - cum[k]) * s])[:size] for k in range(d - 1)]
    for j in range(2, j_max + 1):
        for k in range(1, d):
            fill(k, j - 1)
        fill(d, j)
        total = Q[d][j]
        for k in range(d - 1):
            diff = _pad_add(Q[k][j - 1], Q[k][j - 2], -1.0)
            if diff.any():
                total = _pad_add(total, conv(diff, f_arr[k]))
        q.append(total)
        for i in range(d):
            qs[i].append(scaled(total, i))
    # back from h_n to A_n = h_n n! / s^n at rate 1
    log_back = np.array([math.lgamma(n + 1) - n * math.log(s) for n in idx])
    back = np.exp(log_back)
    table = np.zeros((j_max + 1, size))
    for j, arr in enumerate(q):
        m = min(len(arr), size)
        table[j, :m] = arr[:m] * back[:m]
    return np.clip(table, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Markov chain over CRI lengths


@dataclass(frozen=True)
class TruncationReport:
    size: int
    max_row_deficit: float
    weighted_deficit: float  # sum_i pi_i * deficit_i: mass lost per chain step
    tail_mass: float  # stationary mass on the top tenth of the state space

    def as_dict(self) -> dict:
        return {
            "size": self.size,
            "max_row_deficit": self.max_row_deficit,
            "weighted_deficit": self.weighted_deficit,
            "tail_mass": self.tail_mass,
        }


@dataclass(frozen=True)
class DelayModel:
    """Truncated CRI-length chain at arrival rate ``lam``.

    ``P[i, j]`` is the probability that a CRI of length ``i`` is followed by
    one of length ``j``; index 0 is the unreachable length 0 and stays zero.
    """

    dist: SplitDistribution
    lam: float
    i_max: int
    j_max: int
    P: np.ndarray
    deficit: np.ndarray
    pi: np.ndarray | None = None
    pi_tagged: np.ndarray | None = None
    t: tuple = field(default=())

    @property
    def stationary_mean(self) -> float:
        if self.pi is None:
            raise ValueError("stationary distribution not solved")
        return float(np.dot(np.arange(len(self.pi)), self.pi))


def transition_matrix(
    dist: SplitDistribution,
    lam: float,
    i_max: int = DEFAULT_TRUNCATION,
    j_max: int = DEFAULT_TRUNCATION,
    max_deficit: float | None = None,
    exact_j_max: int = 0,
) -> DelayModel:
    """``P[i, j] = q_j(lam * i)`` for 1 <= i <= i_max, 0 <= j <= j_max.

    Columns up to ``exact_j_max`` are evaluated from the exact exponential
    polynomials; the rest from the numeric coefficient table. Raises
    :class:`TruncationTooTight` if ``max_deficit`` is given and some row loses
    more than that.
    """
    if not lam > 0:
        raise ValueError("arrival rate must be positive")
    if i_max < 1 or j_max < 1:
        raise ValueError("i_max and j_max must be positive")
    x_max = lam * i_max
    n_max = int(math.ceil(x_max + 12 * math.sqrt(x_max) + 40))
    table = cri_length_table(dist, n_max, j_max)
    rates = lam * np.arange(1, i_max + 1)
    pois = stats.poisson.pmf(np.arange(n_max + 1)[None, :], rates[:, None])
    P = np.zeros((i_max + 1, j_max + 1))
    P[1:, :] = pois @ table.T
    if exact_j_max:
        qs = cri_length_pgf_coefficients(dist, min(exact_j_max, j_max))
        for i in range(1, i_max + 1):
            for j, qj in enumerate(qs):
                P[i, j] = float(qj(lam * i))
    deficit = np.zeros(i_max + 1)
    deficit[1:] = np.clip(1.0 - P[1:].sum(axis=1), 0.0, None)
    if max_deficit is not None and deficit.max() > max_deficit:
        worst = int(deficit.argmax())
        raise TruncationTooTight(f"row {worst} loses {deficit[worst]:.3e} beyond j_max={j_max}")
    return DelayModel(dist, lam, i_max, j_max, P, deficit)


def tagged_distribution(pi: np.ndarray) -> np.ndarray:
    """Length-biased ``n pi_n / sum_j j pi_j``."""
    pi = np.asarray(pi, dtype=float)
    w = np.arange(len(pi)) * pi
    return w / w.sum()


def stationary_distribution(
    model: DelayModel, tol: float = 1e-12, max_iter: int = 200_000
) -> DelayModel:
    """Power iteration ``pi <- pi P`` (renormalized) on the truncated chain."""
    if model.lam >= mst(model.dist):
        raise NotStationary(f"lambda={model.lam} is not below the MST {mst(model.dist):.6f}")
    size = min(model.i_max, model.j_max)
    P = model.P[1 : size + 1, 1 : size + 1]
    pi = np.zeros(size)
    pi[0] = 1.0
    for _ in range(max_iter):
        nxt = pi @ P
        total = nxt.sum()
        if not total > 0:
            raise NonConvergent("all mass left the truncated state space")
        nxt /= total
        if np.abs(nxt - pi).sum() < tol:
            pi = nxt
            break
        pi = nxt
    else:
        raise NonConvergent(f"power iteration did not reach {tol} in {max_iter} steps")
    full = np.zeros(size + 1)
    full[1:] = pi
    return replace(model, pi=full, pi_tagged=tagged_distribution(full))


def truncation_report(model: DelayModel) -> TruncationReport:
    if model.pi is None:
        raise ValueError("stationary distribution not solved")
    size = len(model.pi) - 1
    top = max(1, size // 10)
    return TruncationReport(
        size=size,
        max_row_deficit=float(model.deficit[1 : size + 1].max()),
        weighted_deficit=float(np.dot(model.pi, model.deficit[: size + 1])),
        tail_mass=float(model.pi[-top:].sum()),
    )


def solve_chain(
    dist: SplitDistribution,
    lam: float,
    size: int | None = None,
    target: float = DEFICIT_TARGET,
    max_size: int = MAX_TRUNCATION,
) -> DelayModel:
    """Stationary chain, doubling the truncation from 200 until the weighted deficit is below ``target``.

    A given ``size`` is used as is.
    """
    if lam >= mst(dist):
        raise NotStationary(f"lambda={lam} is not below the MST {mst(dist):.6f}")
    if size is not None:
        return stationary_distribution(transition_matrix(dist, lam, size, size))
    size = DEFAULT_TRUNCATION
    while True:
        model = stationary_distribution(transition_matrix(dist, lam, size, size))
        if truncation_report(model).weighted_deficit < target or size * 2 > max_size:
            return model
        size *= 2


# ---------------------------------------------------------------------------
# delay series


def _alpha(p, tail, d, n):
    """Coefficient of x^n in e^{-x} L(x), where L is the Poisson transform of the mean length."""
    if n == 0:
        return Fraction(1)
    if n == 1:
        return Fraction(0)
    num = sum(t**n for t in tail[: d - 1])
    den = 1 - sum(v**n for v in p)
    return Fraction((-1) ** n * (n - 1), math.factorial(n)) * num / den


def delay_series_coefficients(dist: SplitDistribution, n_max: int, paper_literal: bool = False) -> list:
    """Power-series coefficients ``t_0 .. t_{n_max}`` of ``T_2(x) = sum_n t_n x^n``.

    ``T_2(x)`` is the mean resolution time of a tagged packet that shares its
    CRI with Poisson(x) others. Exact rationals (float inputs convert exactly).
    ``paper_literal=True`` divides the ``alpha_n`` part by ``n!`` a second time,
    as in the printed formula; the default matches exact enumeration.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    return list(_series(_key(dist), paper_literal, n_max))


def _key(dist):
    return tuple(Fraction(v) for v in dist.p)


_SERIES: dict[tuple, list] = {}


def _series(p: tuple, paper_literal: bool, n_max: int) -> list:
    """Cached coefficient list for ``p``, grown on demand."""
    out = _SERIES.setdefault((p, paper_literal), [Fraction(1)])
    d = len(p)
    tail = [sum(p[k:], Fraction(0)) for k in range(d)]
    for n in range(len(out), n_max + 1):
        alpha = _alpha(p, tail, d, n)
        if paper_literal:
            alpha /= math.factorial(n)
        sign = 1 if n % 2 else -1  # (-1)^{n+1}
        fact = math.factorial(n)
        num = Fraction(0)
        partial = Fraction(0)  # sum_{i<k} p_i^n
        for k in range(1, d + 1):
            pk = p[k - 1]
            lead = Fraction(sign * (k - (1 if k == d else 0)), fact)
            num += pk * (lead + alpha * partial)
            partial += pk**n
        den = 1 - sum(v ** (n + 1) for v in p)
        out.append(num / den)
    return out[: n_max + 1]


def _working_bits(x: float) -> int:
    # terms of the series reach about e^x before cancelling down to O(log x)
    return int(2 * x / math.log(2)) + 128


def _series_terms(x: float) -> int:
    return int(6 * x + 200)


def _evaluate_series(coeffs: list, x: float):
    """Sum ``coeffs[m] x^m`` (mpf coefficients) with the stopping rule; ``None`` if not converged."""
    xm = mpmath.mpf(x)
    total = mpmath.mpf(0)
    power = mpmath.mpf(1)
    small_run = 0
    for m, c in enumerate(coeffs):
        term = c * power
        total += term
        if m > x and abs(term) <= SERIES_EPS * abs(total):
            small_run += 1
            if small_run >= SERIES_RUN:
                return float(total)
        else:
            small_run = 0
        power *= xm
    return None


def resolution_delays(dist: SplitDistribution, xs, max_terms: int | None = None) -> list[float]:
    """``T_2(x)`` for every ``x`` in ``xs``, sharing one high-precision coefficient list."""
    xs = [float(x) for x in xs]
    if any(x < 0 for x in xs):
        raise ValueError("x must be nonnegative")
    top = max(xs, default=0.0)
    cap = max_terms or _series_terms(top)
    coeffs = _series(_key(dist), False, cap)
    out = []
    with mpmath.workprec(_working_bits(top)):
        mp = [mpmath.mpf(c.numerator) / c.denominator for c in coeffs]
        for x in xs:
            if x == 0:
                out.append(1.0)
                continue
            v = _evaluate_series(mp, x)
            if v is None:
                raise SeriesNotConverged(f"T_2({x}) not converged within {cap} terms")
            out.append(v)
    return out


def mean_resolution_delay(model_or_dist, n_or_x, max_terms: int | None = None) -> float:
    """``T_2(x) = sum_m t_m x^m`` evaluated in high precision.

    With a :class:`DelayModel` the second argument is the previous CRI length
    ``n`` and ``x = lambda * n``; with a distribution it is ``x`` itself.
    Summation stops once five consecutive terms past the peak are below 1e-12
    of the partial sum; :class:`SeriesNotConverged` if that does not happen
    within ``max_terms``.
    """
    if isinstance(model_or_dist, DelayModel):
        return resolution_delays(model_or_dist.dist, [model_or_dist.lam * n_or_x], max_terms)[0]
    return resolution_delays(model_or_dist, [n_or_x], max_terms)[0]


def mean_total_delay(model: DelayModel) -> float:
    """``sum_n pi~_n (n/2 + T_2(lambda n))`` over the solved truncated chain."""
    if model.pi_tagged is None:
        raise ValueError("stationary distribution not solved")
    ns = [n for n, w in enumerate(model.pi_tagged) if n > 0 and w > 0]
    t2 = resolution_delays(model.dist, [model.lam * n for n in ns])
    return float(sum(model.pi_tagged[n] * (n / 2 + v) for n, v in zip(ns, t2)))


@dataclass(frozen=True)
class DelayAnalysis:
    mst: float
    stationary_mean_cri: float
    mean_total_delay: float
    truncation_report: TruncationReport
    model: DelayModel

    def as_dict(self) -> dict:
        return {
            "mst": self.mst,
            "stationary_mean_cri": self.stationary_mean_cri,
            "mean_total_delay": self.mean_total_delay,
            "truncation_report": self.truncation_report.as_dict(),
        }


def analyze_delay(dist: SplitDistribution, lam: float, size: int | None = None) -> DelayAnalysis:
    """Stationary chain plus mean total delay with its truncation report."""
    model = solve_chain(dist, lam, size)
    return DelayAnalysis(
        mst=mst(dist),
        stationary_mean_cri=model.stationary_mean,
        mean_total_delay=mean_total_delay(model),
        truncation_report=truncation_report(model),
        model=model,
    )
