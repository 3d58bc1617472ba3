"""The ten acceptance criteria at their stated tolerances and time budgets.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""
import json
import math
import time
from fractions import Fraction as F

import numpy as np

from sicta.asymptotics import detect_lattice, leading_term, oscillation
from sicta.cli import main
from sicta.closedform import OBSERVABLES, closed_form, mean_cri_length, pgf_functional_residual
from sicta.delay import (
    analyze_delay,
    cri_length_pgf_coefficients,
    poisson_coefficients,
    solve_chain,
    transition_matrix,
)
from sicta.errors import NotStationary, UnstableSystem
from sicta.expoly import ExpPoly
from sicta.montecarlo import SimulationConfig, monte_carlo_means, simulate_gated_system, simulate_many
from sicta.optimize import maximize_throughput, tradeoff_curve
from sicta.oracle import exact_cri_distributions, exact_expectations
from sicta.splitmodel import fair, make_split_distribution, pbi

LN2 = math.log(2)


def _random_rational(d, rng, den=20):
    w = rng.integers(1, den, size=d)
    return make_split_distribution([F(int(v), int(w.sum())) for v in w])


def test_01_oracle_equivalence(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    checked = 0
    bad = []
    for d in (2, 3, 4):
        dists = [fair(d), pbi(d)] + [_random_rational(d, rng) for _ in range(3)]
        for dist in dists:
            table = exact_expectations(dist, 12)
            for obs in OBSERVABLES:
                for n in range(13):
                    v = closed_form(dist, obs, n, mode="rational")
                    checked += 1
                    if v.arithmetic_mode != "rational" or v.value != table.column(obs)[n]:
                        bad.append((dist.label(), obs, n))
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 60
    acceptance(1, "closed forms equal the oracle exactly", ok, f"{checked} values, {len(bad)} mismatches, {elapsed:.1f}s")
    assert ok, bad[:5]


def test_02_erratum_adjudication(acceptance, capsys):
    half = fair(2)
    printed_s = closed_form(half, "S", 2, paper_literal=True).value
    printed_i = closed_form(half, "I", 2, paper_literal=True).value
    oracle = exact_expectations(half, 2)
    corrected = (closed_form(half, "S", 2).value, closed_form(half, "I", 2).value)
    code = main(["validate", "--dist", "1/2,1/2", "--nmax", "2", "--paper-literal"])
    err = capsys.readouterr().err


    mismatches = json.loads(err)["mismatches"]
    ok = (
        printed_s == 0
        and printed_i == F(7, 2)
        and oracle.S[2] == 1
        and oracle.I[2] == F(1, 2)
        and corrected == (1, F(1, 2))
        and code == 1
        and mismatches == ["S@2", "I@2"]
    )
    acceptance(2, "printed S and I disagree at n=2", ok, f"printed S={printed_s}, I={printed_i}; mismatches {mismatches}")
    assert ok


def test_03_asymptotic_throughput(acceptance):
    start = time.perf_counter()
    worst, worst_g = 0.0, 0.0
    for d in (2, 3, 4):
        for k in (10, 12, 14):
            n = 2**k
            value = float(mean_cri_length(pbi(d), n, mode="high-precision").value) / n
            worst = max(worst, abs(value - 1 / LN2))
            worst_g = max(worst_g, abs(oscillation(pbi(d), "L", n).oscillation))
    elapsed = time.perf_counter() - start
    ok = worst <= 2e-3 and worst_g <= 1e-3 and elapsed < 120
    acceptance(3, "L_n/n approaches 1/ln 2 at pbi(d)", ok, f"max gap {worst:.2e}, max |g_1| {worst_g:.2e}, {elapsed:.1f}s")
    assert ok


def test_04_table_constants(acceptance):
    dist = pbi(2)
    expected = {"L": 1 / LN2, "C": 1 / (2 * LN2), "S": 0.5, "I": (1 - LN2) / (2 * LN2)}
    const_err = max(abs(leading_term(dist, o) - v) for o, v in expected.items())
    rng = np.random.default_rng(7)
    cons_err = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 7))
        p = rng.dirichlet(np.ones(d))
        p[-1] = 1 - p[:-1].sum()
        r = make_split_distribution(list(p))
        total = sum(leading_term(r, o) for o in "CSI")
        cons_err = max(cons_err, abs(total - leading_term(r, "L")))
    ok = const_err <= 1e-12 and cons_err <= 1e-12
    acceptance(4, "leading constants and C+S+I=L", ok, f"constant error {const_err:.1e}, conservation error {cons_err:.1e}")
    assert ok


def test_05_oscillation_dichotomy(acceptance):
    incommensurable = make_split_distribution([0.3, 0.7])
    zeros = all(
        oscillation(incommensurable, o, n).oscillation == 0.0 for o in OBSERVABLES for n in (2, 1000, 2**16)
    )
    peak = max(abs(oscillation(pbi(2), "L", 2**k).oscillation) for k in range(8, 17))
    ok = detect_lattice(incommensurable) is None and zeros and 1e-6 <= peak <= 1e-3
    acceptance(5, "oscillation zero off-lattice, small on it", ok, f"(0.3,0.7) exact zero: {zeros}; pbi(2) max |g_1| {peak:.3e}")
    assert ok


def test_06_monte_carlo(acceptance):
    start = time.perf_counter()
    cfg = SimulationConfig(pbi(3), seed=0, runs=10_000, n=1000)
    rows = simulate_many(cfg)
    additive = bool(np.array_equal(rows[:, 0], rows[:, 1:].sum(axis=1)))
    stats = monte_carlo_means(cfg)
    exact = float(mean_cri_length(pbi(3), 1000, mode="high-precision").value)
    z = abs(stats.mean["L"] - exact) / stats.standard_error["L"]
    elapsed = time.perf_counter() - start
    ok = z <= 4 and additive and elapsed < 60
    acceptance(6, "simulated mean length at pbi(3), n=1000", ok, f"z={z:.2f}, l=c+s+i in all runs: {additive}, {elapsed:.1f}s")
    assert ok


def test_07_optimizer(acceptance):
    rng = np.random.default_rng(11)
    worst_p, worst_v = 0.0, 0.0
    for d in (2, 3, 4):
        target = np.array(pbi(d).floats())
        for _ in range(20):
            init = make_split_distribution(list(rng.dirichlet(np.ones(d))))
            dist, value = maximize_throughput(d, init=init)
            worst_p = max(worst_p, float(np.abs(np.array(dist.floats()) - target).max()))
            worst_v = max(worst_v, abs(value - 1 / LN2))
    ok = worst_p <= 1e-4 and worst_v <= 1e-10
    acceptance(7, "optimizer recovers pbi(d) from 20 starts", ok, f"max |p - pbi| {worst_p:.1e}, max value error {worst_v:.1e}")
    assert ok


def test_08_tradeoff(acceptance):
    start = time.perf_counter()
    xs = [0.0, 0.05, 0.10, 0.15, 0.20]
    two = [pt.collision_rate for pt in tradeoff_curve(2, xs)]
    three = [pt.collision_rate for pt in tradeoff_curve(3, xs)]
    elapsed = time.perf_counter() - start
    nonincreasing = all(b <= a + 1e-12 for a, b in zip(two, two[1:]))
    agree = max(abs(a - b) for a, b in zip(two, three))
    ok = (
        abs(two[0] - 0.72) <= 0.01
        and abs(two[-1] - 0.44) <= 0.02
        and nonincreasing
        and agree <= 1e-3
        and elapsed < 300
    )
    acceptance(8, "collision/throughput tradeoff", ok, f"x=0: {two[0]:.4f}, x=0.2: {two[-1]:.4f}, d=2 vs 3 gap {agree:.1e}, {elapsed:.1f}s")
    assert ok


def test_09_delay_consistency(acceptance):
    start = time.perf_counter()
    analytic = analyze_delay(fair(2), 0.5).mean_total_delay
    sim = simulate_gated_system(SimulationConfig(fair(2), seed=0, lam=0.5, horizon_cri=11_000, warmup_cri=1_000))
    simulated = sim.delay_stats.mean["total"]
    rel = abs(simulated - analytic) / analytic
    # the one-slot column is (1 + x) e^{-x} as an exact exponential polynomial
    q1 = cri_length_pgf_coefficients(fair(2), 1)[1]
    exact_q1 = q1 == ExpPoly({(0, F(1)): F(1), (1, F(1)): F(1)})
    lam = 0.5
    model = transition_matrix(fair(2), lam, 200, 200)
    i = np.arange(1, 201)
    col_err = float(np.max(np.abs(model.P[1:, 1] - (1 + lam * i) * np.exp(-lam * i)) / ((1 + lam * i) * np.exp(-lam * i))))
    try:
        simulate_gated_system(SimulationConfig(fair(2), seed=0, lam=0.75, horizon_cri=11_000, warmup_cri=1_000))
        unstable = False
    except UnstableSystem:
        unstable = True
    try:
        solve_chain(fair(2), 0.75)
        refused = False
    except NotStationary:
        refused = True
    elapsed = time.perf_counter() - start
    ok = rel <= 0.05 and exact_q1 and col_err < 1e-12 and unstable and refused and elapsed < 180
    acceptance(
        9,
        "analytic delay against the gated simulation",
        ok,
        f"analytic {analytic:.4f}, simulated {simulated:.4f} ({100 * rel:.1f}%), P_i1 rel error {col_err:.1e}, "
        f"lambda=0.75 unstable: {unstable}, {elapsed:.1f}s",
    )
    assert ok


def test_10_coefficients_and_functional_equation(acceptance):
    mismatches = 0
    for dist in (fair(2), pbi(3), fair(3)):
        q = cri_length_pgf_coefficients(dist, 12)
        laws = exact_cri_distributions(dist, 8, 12)
        for j in range(13):
            coeffs = poisson_coefficients(q[j])
            mismatches += sum(coeffs.get(n, 0) != laws[n].probs[j] for n in range(9))
    points = [
        (fair(2), 0.5, 0.5),
        (fair(2), 1.0, 0.9),
        (fair(2), 2.0, -0.7),
        (fair(2), 0.1, 1.0),
        (fair(2), 1.5, 0.3j),
        (pbi(3), 0.5, 0.5),
        (pbi(3), 1.0, -1.0),
        (pbi(3), 2.0, 0.9),
        (pbi(3), 1.5, 0.3j),
        (pbi(3), 0.1, 1.0),
    ]
    worst = max(abs(pgf_functional_residual(dist, x, z, 40).residual) for dist, x, z in points)
    ok = mismatches == 0 and worst <= 1e-8
    acceptance(10, "q_j coefficients and functional equation", ok, f"{mismatches} coefficient mismatches, max residual {worst:.1e}")
    assert ok
