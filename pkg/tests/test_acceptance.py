"""The twelve acceptance criteria, one test each, at their stated tolerances.

Each test records a one-line detail in ``conftest.ACCEPTANCE``; the terminal
summary prints one PASS/FAIL line per criterion.
"""
import math
import time

import numpy as np
import pytest
from numpy.polynomial import polynomial as P

from conftest import ACCEPTANCE
from entirelab.entire import (MCondition, check_asymptotics, check_band, check_M_condition,
                              check_symmetry, check_time_monotonicity, construct_entire)
from entirelab.evolve import Boundary, GridField, derivative_bounds, evolve, extend, schauder_constants
from entirelab.experiments import (DivergingPairSpec, constant_convergence, diverging_pair,
                                   l1_inputs, lower_bound_L1, sandwich_stability)
from entirelab.front import (NoFrontError, eigenvalues, fit_tail_constants, lattice_front,
                             minimal_speed, solve_front_bistable, solve_front_monostable)
from entirelab.reaction import compute_constants, make_cubic, make_fisher, make_polynomial
from entirelab.supersub import (Role, SampleGrid, ShiftFunction, ShiftKind, Sign,
                                annihilating_grid, build_envelope_annihilating, build_envelope_C1,
                                build_envelope_C2, build_envelope_monostable, build_sandwich,
                                calibrate, front_pair, p3_offsets, rho_nu_check, solve_rho,
                                trajectory_evaluator, verify_inequality)

SQ2 = math.sqrt(2.0)
DX = 0.05


def record(n, text):
    ACCEPTANCE[n] = text


# -- shared constructions ---------------------------------------------------------

@pytest.fixture(scope="module")
def c1():
    t0 = time.perf_counter()
    f = make_cubic(0.3)
    L = lattice_front(f, solve_front_bistable(f), DX)
    g = SampleGrid.regular(-40, 40, DX, -30, 0, 31)
    m7, _ = calibrate(lambda m: build_envelope_C1(f, L, m), f, g)
    sup, sub = build_envelope_C1(f, L, m7)
    a = construct_entire(f, sub, sup, [10, 20, 30], halfwidth=40.0, dx=DX, strict=False)
    return {"f": f, "L": L, "M7": m7, "sup": sup, "sub": sub, "grid": g, "a": a,
            "seconds": time.perf_counter() - t0}


@pytest.fixture(scope="module")
def c4():
    f = make_cubic(0.7)
    L = lattice_front(f, solve_front_bistable(f), DX)
    B, _ = calibrate(lambda b: build_envelope_annihilating(f, L, b), f, annihilating_grid(L, DX))
    band_sup, sub = build_envelope_annihilating(f, L, B)
    sup = front_pair(L, Role.SUPER, case="C3-C4")
    a = construct_entire(f, sub, sup, [30, 45, 60], halfwidth=40.0, dx=DX, strict=False)
    return {"f": f, "L": L, "B": B, "band_sup": band_sup, "sub": sub, "sup": sup, "a": a}


@pytest.fixture(scope="module")
def fisher_fronts():
    f = make_fisher()
    dx = 0.1
    p1 = lattice_front(f, solve_front_monostable(f, 2.5), dx)
    p2 = lattice_front(f, solve_front_monostable(f, 3.0), dx)
    return f, p1, p2, dx


def monostable_envelopes(f, p1, p2, dx, variant):
    at = p1.left_rate
    g = SampleGrid.regular(-60, 60, dx, -20, -0.01, 21)
    m9, _ = calibrate(lambda m: build_envelope_monostable(f, p1, p2, m, at, variant=variant,
                                                          t_lo=-60), f, g)
    up, lo = build_envelope_monostable(f, p1, p2, m9, at, variant=variant)
    return m9, up, lo, g


# -- 1. front oracle -----------------------------------------------------------------

def test_criterion_01_front_oracle():
    worst, slowest = 0.0, 0.0
    for alpha in (0.2, 0.3, 0.4):
        c_exact = (1 - 2 * alpha) / SQ2
        # independent oracle: the closed form solves phi'' - c phi' + f(phi) = 0
        f = make_cubic(alpha)
        phi = lambda xi: 1.0 / (1.0 + np.exp(-xi / SQ2))  # noqa: E731
        xi, h = np.linspace(-10, 10, 2001), 1e-4
        res = ((phi(xi + h) - 2 * phi(xi) + phi(xi - h)) / h**2
               - c_exact * (phi(xi + h) - phi(xi - h)) / (2 * h) + f.f(phi(xi)))
        assert np.max(np.abs(res)) < 1e-6
        t0 = time.perf_counter()
        c = solve_front_bistable(f).c
        dt = time.perf_counter() - t0
        worst, slowest = max(worst, abs(c - c_exact)), max(slowest, dt)
        assert abs(c - c_exact) < 1e-4
        assert dt < 5.0
    record(1, f"max |c - (1-2a)/sqrt2| = {worst:.2e} (<1e-4), slowest solve {slowest:.2f} s (<5 s)")


# -- 2. sign law ---------------------------------------------------------------------

def random_bistable(rng):
    """u(1-u)(u-a) or u(1-u)(u-a)(1+su); resampled until the integral is resolvable."""
    while True:
        a = rng.uniform(0.1, 0.9)
        base = P.polymul(P.polymul([0, 1], [1, -1]), [-a, 1])
        coeffs = base if rng.random() < 0.5 else P.polymul(base, [1, rng.uniform(-0.6, 2.0)])
        f = make_polynomial(coeffs)
        if f.is_bistable and abs(f.integral) > 1e-3:
            return f


def test_criterion_02_sign_law():
    rng = np.random.default_rng(20240)
    agree = 0
    for _ in range(20):
        f = random_bistable(rng)
        c = solve_front_bistable(f).c
        agree += int(np.sign(c) == np.sign(f.integral))
    c_bal = solve_front_bistable(make_cubic(0.5)).c
    record(2, f"sign(c) = sign(int f) in {agree}/20 random terms; |c(alpha=0.5)| = {abs(c_bal):.1e}")
    assert agree == 20
    assert abs(c_bal) < 1e-6


# -- 3. minimal speed ----------------------------------------------------------------

def test_criterion_03_minimal_speed():
    f = make_fisher()
    cmin = minimal_speed(f)
    assert abs(cmin - 2.0) <= 1e-6
    assert cmin == pytest.approx(2 * math.sqrt(float(f.f_prime(0.0))), abs=1e-12)
    with pytest.raises(NoFrontError, match="c_min"):
        solve_front_monostable(f, 1.0)
    with pytest.raises(NoFrontError):
        solve_front_monostable(f, cmin - 1e-3)
    record(3, f"c_min = {cmin:.17g}; c = 1.0 and c_min - 1e-3 rejected")


# -- 4. Schauder monitor -------------------------------------------------------------

def test_criterion_04_schauder_monitor(lattice03):
    L2_ref = schauder_constants(1.0, 1.0, 1.0)[0]
    assert abs(L2_ref - 3 / math.sqrt(math.pi)) <= 1e-12
    f, L = lattice03
    tr = evolve(GridField.sample(L, 20, 0.1), f, 3.0)
    rep = derivative_bounds(tr, f, r=1.0, t_from=1.0)
    record(4, f"sup|u_x| {rep.observed_sup_ux:.3g} <= L2 {rep.L2:.3g}, sup|u_xx| "
              f"{rep.observed_sup_uxx:.3g} <= L3 {rep.L3:.3g}, sup|u_t| {rep.observed_sup_ut:.3g} "
              f"<= L4 {rep.L4:.3g}; L2(1,1,1) - 3/sqrt(pi) = {L2_ref - 3 / math.sqrt(math.pi):.1e}")
    assert rep.passed


# -- 5. shift ODE closed forms -------------------------------------------------------

def test_criterion_05_shift_closed_forms():
    rng = np.random.default_rng(5)
    t = np.linspace(-50.0, 0.0, 201)
    err, min_deriv, above = 0.0, np.inf, 0
    for _ in range(10):
        c, lam, m = rng.uniform(0.05, 2.0), rng.uniform(0.2, 2.0), rng.uniform(0.1, 5.0)
        cap = min(0.0, math.log(c / m) / lam)
        s = ShiftFunction(ShiftKind.P3, c, lam, m, Sign.MINUS, cap - rng.uniform(0.05, 1.0))
        err = max(err, float(np.max(np.abs(s(t) - s.numeric(t)))))
        min_deriv = min(min_deriv, float(np.min(s.derivative(t))))
        _, x8 = p3_offsets(s)
        above += int(np.all(s(t) > c * t + x8))
    record(5, f"closed form vs numeric {err:.1e} (<1e-8); min p3' = {min_deriv:.3g} (>0); "
              f"p3 > ct + x8 at all samples for {above}/10 sets (reversed inequality, see ledger)")
    assert err <= 1e-8
    assert min_deriv > 0
    assert above == 10, "p3(t) > ct + x8 fails: (p3 - ct)' < 0 and p3 - ct -> x8, so p3 < ct + x8"


# -- 6. envelope certification -------------------------------------------------------

def _certify(label, envs, f, grid, out):
    for e in envs:
        rep = verify_inequality(e, f, grid)
        out.append((f"{label}/{e.role.value}", rep.passed, rep.worst, rep.exact_max_abs, rep.tol))


def test_criterion_06_envelope_certification(c1, c4, fisher_fronts):
    rows = []
    _certify("C1", (c1["sup"], c1["sub"]), c1["f"], c1["grid"], rows)

    # quartic whose front configuration is classified C2
    f2 = make_polynomial(P.polymul(P.polymul([0, 1], [1, -1]), P.polymul([-0.4, 1], [1, -0.5])))
    assert f2.case_tag.value == "C2"
    L2 = lattice_front(f2, solve_front_bistable(f2), DX)
    g2 = SampleGrid.regular(-40, 40, DX, -30, 0, 31)
    m8, _ = calibrate(lambda m: build_envelope_C2(f2, L2, m), f2, g2)
    _certify("C2", build_envelope_C2(f2, L2, m8), f2, g2, rows)

    fa, La = c4["f"], c4["L"]
    _certify("annihilating", (c4["band_sup"], c4["sub"]), fa, annihilating_grid(La, DX)(
        (c4["band_sup"], c4["sub"])), rows)

    f, p1, p2, dx = fisher_fronts
    for variant in ("u3", "u11"):
        m9, up, lo, g = monostable_envelopes(f, p1, p2, dx, variant)
        _certify(f"monostable-{variant}", (up, lo), f, g, rows)

    # sandwich around the C1 entire solution
    a = c1["a"]
    mono = check_time_monotonicity(a)
    sc = compute_constants(c1["f"]).with_measured(b_bar=mono.mid_bound)
    base = extend(a.largest, c1["f"], a.T_end + 30, boundary=Boundary.neumann())
    s_sup, s_sub = build_sandwich(trajectory_evaluator(base), sc, 0.02, "Increasing")
    _certify("sandwich", (s_sup, s_sub), c1["f"], SampleGrid.regular(-39, 39, DX, 0.05, 5, 21), rows)

    bad = [r for r in rows if not r[1] or r[3] > r[4]]
    worst_exact = max(r[3] for r in rows)
    record(6, f"{len(rows) - len(bad)}/{len(rows)} envelopes certified (M7={c1['M7']:.4g}, "
              f"M8={m8:.4g}, B={c4['B']:.4g}, M9={m9:.2g}); max exact-branch |N| = {worst_exact:.1e}"
              + (f"; failing: {[r[0] for r in bad]}" if bad else ""))
    assert not bad, bad


# -- 7. C1 entire solution -----------------------------------------------------------

def test_criterion_07_entire_c1(c1):
    a, L = c1["a"], c1["L"]
    mono = check_time_monotonicity(a)
    mc = check_M_condition(a, L, offset=c1["sub"].params["x6"])
    final = float(np.max(np.abs(a.largest.final.u - 1.0)))
    record(7, f"confinement {a.confinement_worst:.1e}, gaps {['%.1e' % g for g in a.cauchy_gaps]}, "
              f"min u_t {mono.worst:.1e}, {mc.condition.value} {'ok' if mc.passed else 'FAILED'}, "
              f"|u-1| {final:.1e} at T={a.T_end:.3g}, {c1['seconds']:.0f} s")
    assert a.confinement_worst <= 1e-6
    assert a.gaps_decreasing
    assert mono.worst > -1e-6
    assert mc.condition is MCondition.MPLUS and mc.passed
    assert final < 1e-3 and a.T_end <= 60
    assert c1["seconds"] < 300


# -- 8. C4 entire solution -----------------------------------------------------------

def test_criterion_08_entire_c4(c4):
    a, L = c4["a"], c4["L"]
    sym = check_symmetry(a)
    asym = check_asymptotics(a, L)
    band = check_band(a, L, c4["B"])
    final = float(np.max(np.abs(a.largest.final.u)))
    record(8, f"symmetry {sym:.1e}, u2 - min(fronts) {asym.min_bound_violation:.1e}, band worst "
              f"{band.worst:.1e} over {band.times.size} times, |u| {final:.1e} at T={a.T_end:.3g}")
    assert sym <= 1e-10
    assert asym.min_bound_violation <= 1e-6
    assert band.passed and band.times.size > 0
    assert final < 1e-3 and a.T_end <= 60


# -- 9. exponential local stability --------------------------------------------------

def test_criterion_09_sandwich_stability(c1):
    a, L, f = c1["a"], c1["L"], c1["f"]
    mono = check_time_monotonicity(a)
    sc = compute_constants(f).with_measured(b_bar=mono.mid_bound)
    tb = fit_tail_constants(L, eigenvalues(f, L.c))
    r = sandwich_stability(a, sc, 0.02, tb, L, T=60.0)
    e = eigenvalues(f, L.c)
    target = 0.8 * min(abs(sc.v), abs(e.mu2 * L.c))
    d = r.details
    record(9, f"sandwich worst {d['sandwich_worst']:.1e} (tol {d['tol']:.1e}), slope "
              f"{-r.fitted_rate:.3f} <= {-target:.3f}, final bound margin {d['bound_margin']:.1e}")
    assert d["sandwich_worst"] <= d["tol"]
    assert -r.fitted_rate <= -target
    assert r.passed


# -- 10. diverging pair --------------------------------------------------------------

def test_criterion_10_diverging_pair(lattice03):
    f, L = lattice03
    bound = lower_bound_L1(l1_inputs(f, L, 0.1))
    r = diverging_pair(f, L, DivergingPairSpec(beta=0.1, L_bar=30.0), L_bound=bound)
    ctrl = diverging_pair(f, L, DivergingPairSpec(beta=0.1, L_bar=0.5))
    record(10, f"speeds {r.details['v_left']:.5f}/{r.details['v_right']:.5f} vs -+{abs(L.c):.5f} "
               f"(error {r.details['speed_error']:.1e}); L_bar_1 = {bound:.3g} <= 30; "
               f"narrow bump {ctrl.details['outcome']}")
    assert r.passed and r.details["speed_error"] <= 0.02
    assert ctrl.details["outcome"] == "collapsed"
    assert ctrl.details["final_max"] < 1e-3


# -- 11. constant-state convergence --------------------------------------------------

@pytest.mark.parametrize("alpha,pattern", [(0.3, "dip"), (0.3, "above"),
                                           (0.7, "bump"), (0.7, "below")])
def test_criterion_11_constant_convergence(alpha, pattern):
    r = constant_convergence(make_cubic(alpha), pattern, T=60.0)
    d = r.details
    line = (f"{pattern}(a={alpha}) -> {d['limit']:g} at t={d['t_hit']:.3g}, rate "
            f"{r.fitted_rate:.3f} vs {r.predicted_rate:.3f}")
    ACCEPTANCE[11] = (ACCEPTANCE.get(11, "") + "; " + line).lstrip("; ")
    assert d["t_hit"] <= 60
    assert abs(r.fitted_rate - r.predicted_rate) <= 0.3 * r.predicted_rate
    assert r.passed


# -- 12. monostable entire solutions -------------------------------------------------

def test_criterion_12_monostable(fisher_fronts):
    f, p1, p2, dx = fisher_fronts
    conf = {}
    for variant in ("u3", "u11"):
        _, up, lo, _ = monostable_envelopes(f, p1, p2, dx, variant)
        a = construct_entire(f, lo, up, [5, 10, 15], halfwidth=70.0, dx=dx, strict=False)
        conf[variant] = a.confinement_worst
    rho = solve_rho(f, 0.5, -60.0, 0.0)
    t = np.linspace(-30.0, 0.0, 301)
    err = float(np.max(np.abs(rho(t) - 1.0 / (1.0 + np.exp(-t)))))
    lo_gap, m10, ok = rho_nu_check(rho, 0.25, float(f.f_prime(0.0)))
    record(12, f"confinement u3 {conf['u3']:.1e}, u11 {conf['u11']:.1e}; |rho - logistic| "
               f"{err:.1e}; min(rho - nu) {lo_gap:.2e} > 0 with M10 = {m10:.6g}")
    assert conf["u3"] <= 1e-6 and conf["u11"] <= 1e-6
    assert err <= 1e-8
    assert ok and lo_gap > 0
