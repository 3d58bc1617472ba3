"""Throughput maximization and the collision/throughput tradeoff on the simplex.

Distributions are parameterized by unconstrained logits (``p = softmax(theta)``)
so every iterate is a valid interior point, and BFGS runs on analytic
gradients. The throughput constraint of the tradeoff problem is handled by an
augmented Lagrangian in the Powell-Hestenes-Rockafellar form for inequalities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, root

from .errors import InfeasibleConstraint, NoConvergence
from .splitmodel import SplitDistribution, make_split_distribution, pbi

LN2 = math.log(2)
P_FLOOR = 1e-9
MAX_OUTER = 60


def _softmax(theta: np.ndarray) -> np.ndarray:
    z = np.exp(theta - theta.max())
    p = z / z.sum()
    return np.maximum(p, P_FLOOR) / np.maximum(p, P_FLOOR).sum()


def _pullback(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Gradient in logits from a gradient in ``p`` (softmax Jacobian is diag(p) - p p^T)."""
    return p * (grad_p - np.dot(p, grad_p))


def _entropy(p):
    return float(-np.sum(p * np.log(p)))


def _length_parts(p):
    """``A = sum_{k<=d-2} Fbar(k)`` with dA/dp_j = min(j, d-1) for 1-based j."""
    d = len(p)
    weights = np.minimum(np.arange(1, d + 1), d - 1).astype(float)
    return float(np.dot(weights, p)), weights


def length_rate(p):
    """Leading ``L_n / n`` and its gradient in ``p``."""
    p = np.asarray(p, dtype=float)
    a, da = _length_parts(p)
    h = _entropy(p)
    dh = -np.log(p) - 1
    return float(a / h), (da * h - a * dh) / h**2


def collision_rate(p):
    """Leading ``C_n / n = (1 - p_d) / H`` and its gradient in ``p``."""
    p = np.asarray(p, dtype=float)
    h = _entropy(p)
    dh = -np.log(p) - 1
    num = 1 - p[-1]
    dnum = np.zeros_like(p)
    dnum[-1] = -1.0
    return float(num / h), (dnum * h - num * dh) / h**2


def throughput(p):
    """MST ``H / A`` and its gradient in ``p``."""
    p = np.asarray(p, dtype=float)
    a, da = _length_parts(p)
    h = _entropy(p)
    dh = -np.log(p) - 1
    return float(h / a), (dh * a - h * da) / a**2


def _to_dist(p: np.ndarray) -> SplitDistribution:
    p = np.asarray(p, dtype=float)
    p = p / p.sum()
    return make_split_distribution([float(v) for v in p])


def _polish(fun, theta: np.ndarray, tol: float) -> np.ndarray:
    """Drive the analytic gradient to zero once BFGS stalls on a flat objective.

    Near the optimum the objective changes by less than its rounding error, so
    line searches stop with gradients near sqrt(eps). Solving grad = 0 directly
    (last logit pinned, which removes the softmax shift invariance) gets past
    that. The root is kept only if it lowers the gradient without raising the value.
    """
    value, grad = fun(theta)
    if np.abs(grad).max() <= tol or len(theta) < 2:
        return theta
    base = theta - theta[-1]

    def reduced(t):
        return fun(np.append(t, 0.0))[1][:-1]

    sol = root(reduced, base[:-1], method="hybr", tol=1e-15)
    cand = np.append(sol.x, 0.0)
    cand_value, cand_grad = fun(cand)
    if np.all(np.isfinite(cand_grad)) and np.abs(cand_grad).max() < np.abs(grad).max() and cand_value <= value + 1e-12:
        return cand
    return theta


def maximize_throughput(
    d: int, init: SplitDistribution | None = None, tol: float = 1e-10, max_iter: int = 2000
) -> tuple[SplitDistribution, float]:
    """Minimize the leading ``L_n / n`` over the simplex; returns the argmin and the value.

    The value at the optimum is ``1 / ln 2``. Raises :class:`NoConvergence`
    (carrying the best iterate) if neither BFGS nor the gradient polish meets ``tol``.
    """
    if d < 2:
        raise ValueError("d must be at least 2")
    p0 = np.full(d, 1.0 / d) if init is None else np.array(init.floats())
    if init is not None and init.d != d:
        raise ValueError("init has the wrong number of slots")
    theta0 = np.log(np.maximum(p0, P_FLOOR))

    def fun(theta):
        p = _softmax(theta)
        v, g = length_rate(p)
        return v, _pullback(p, g)

    res = minimize(fun, theta0, jac=True, method="BFGS", options={"gtol": tol, "maxiter": max_iter})
    theta = _polish(fun, res.x, tol)
    p = _softmax(theta)
    value = length_rate(p)[0]
    grad_norm = float(np.abs(_pullback(p, length_rate(p)[1])).max())
    if grad_norm > max(tol, 1e-9) * 10:
        raise NoConvergence(
            f"stationarity residual {grad_norm:.2e} after {res.nit} iterations", best=_to_dist(p), value=value
        )
    return _to_dist(p), value


def verify_lagrange_conditions(dist: SplitDistribution, tol: float = 1e-8) -> bool:
    """First-order conditions of the throughput problem.

    At an interior stationary point the last two entries are equal and each of
    the first ``d - 1`` entries is half the one before it.
    """
    p = dist.floats()
    d = dist.d
    if any(v <= 0 for v in p):
        return False
    if abs(p[-1] - p[-2]) > tol:
        return False
    return all(abs(p[i + 1] / p[i] - 0.5) <= tol for i in range(d - 2))


@dataclass(frozen=True)
class TradeoffPoint:
    reduction: float
    collision_rate: float
    argmin_p: SplitDistribution
    constraint_active: bool
    solver_iterations: int
    constraint_violation: float = 0.0


def _solve_tradeoff(d, x, theta0, tol, max_outer=MAX_OUTER):
    """Augmented-Lagrangian solve of min C(p) s.t. MST(p) >= (1 - x) ln 2 from ``theta0``."""
    target = (1 - x) * LN2
    mu, rho = 0.0, 10.0
    theta = np.array(theta0, dtype=float)
    iterations = 0
    last_violation = math.inf

    def constraint(p):  # g <= 0 is feasible
        t, dt = throughput(p)
        return target - t, -dt

    for _ in range(max_outer):

        def fun(th):
            p = _softmax(th)
            f, df = collision_rate(p)
            g, dg = constraint(p)
            shifted = mu + rho * g
            if shifted > 0:
                val = f + (shifted**2 - mu**2) / (2 * rho)
                grad = df + shifted * dg
            else:
                val = f - mu**2 / (2 * rho)
                grad = df
            return val, _pullback(p, grad)

        res = minimize(fun, theta, jac=True, method="BFGS", options={"gtol": 1e-12, "maxiter": 2000})
        theta = res.x
        iterations += res.nit
        p = _softmax(theta)
        g = constraint(p)[0]
        violation = max(g, 0.0)
        mu = max(0.0, mu + rho * g)
        if violation <= tol and (mu == 0.0 or abs(g) <= tol):
            return p, mu, iterations, violation
        if violation > 0.25 * last_violation:
            rho *= 10
        last_violation = violation
    p = _softmax(theta)
    return p, mu, iterations, max(constraint(p)[0], 0.0)


def tradeoff_curve(
    d: int, reductions, tol: float = 1e-8, starts: int = 8, seed: int = 0
) -> list[TradeoffPoint]:
    """Smallest leading collision rate at throughput at least ``(1 - x) ln 2``, for each ``x``.

    Points are solved in increasing ``x``, each warm-started from the previous
    optimum (the first from ``pbi(d)``) and from ``starts`` random interior
    points; the best feasible result is kept. ``x = 0`` admits only ``pbi(d)``,
    where the constraint gradient vanishes, so it is returned directly.
    """
    if d < 2:
        raise ValueError("d must be at least 2")
    xs = [float(x) for x in reductions]
    if any(x < 0 or x > 0.5 for x in xs):
        raise InfeasibleConstraint("reductions must lie in [0, 0.5]")
    rng = np.random.default_rng(seed)
    random_starts = [np.log(rng.dirichlet(np.ones(d))) for _ in range(starts if d > 2 else 0)]
    base = pbi(d)
    warm = np.log(np.array(base.floats()))
    results = {}
    for x in sorted(set(xs)):
        if x == 0:
            value = collision_rate(np.array(base.floats()))[0]
            results[x] = TradeoffPoint(0.0, value, base, True, 0, 0.0)
            continue
        # leave the degenerate point pbi before the penalty sees a zero gradient
        candidates = [warm + 0.05 * np.arange(d)[::-1] / d] + random_starts
        best = None
        total_iter = 0
        for theta0 in candidates:
            p, mu, its, viol = _solve_tradeoff(d, x, theta0, tol)
            total_iter += its
            val = collision_rate(p)[0]
            if viol <= tol and (best is None or val < best[1] - 1e-12):
                best = (p, val, mu, viol)
        if best is None:
            raise NoConvergence(f"no start met the throughput constraint at x={x}")
        p, val, mu, viol = best
        warm = np.log(p)
        target = (1 - x) * LN2
        active = mu > 0 or abs(throughput(p)[0] - target) <= 10 * tol
        results[x] = TradeoffPoint(x, val, _to_dist(p), bool(active), total_iter, viol)
    return [results[x] for x in xs]
