import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import polynomial as P

from entirelab.front import (Direction, DomainError, NoFrontError, eigenvalues,
                             fit_tail_constants, lattice_front, minimal_speed, read_profile,
                             reflect, solve_front_bistable, solve_front_monostable,
                             write_profile)
from entirelab.reaction import make_cubic, make_fisher, make_polynomial

SQ2 = math.sqrt(2.0)


def exact_front(alpha):
    """Closed-form cubic front: phi = 1/(1 + exp(-xi/sqrt 2)), c = (1 - 2 alpha)/sqrt 2."""
    return (1 - 2 * alpha) / SQ2, lambda xi: 1.0 / (1.0 + np.exp(-xi / SQ2))


@settings(max_examples=8, deadline=None)
@given(st.floats(min_value=0.1, max_value=0.9))
def test_cubic_speed_and_profile_match_closed_form(alpha):
    f = make_cubic(alpha)
    p = solve_front_bistable(f)
    c, phi = exact_front(alpha)
    assert p.c == pytest.approx(c, abs=1e-6)
    xi = np.linspace(-15, 15, 301)
    assert np.max(np.abs(p(xi) - phi(xi))) < 1e-6
    assert p(0.0) == pytest.approx(0.5, abs=1e-12)


def test_closed_form_is_an_exact_front():
    # independent residual oracle: phi'' - c phi' + f(phi) = 0 for the closed form
    alpha = 0.3
    c, phi = exact_front(alpha)
    f = make_cubic(alpha)
    xi = np.linspace(-10, 10, 2001)
    h = 1e-4
    d1 = (phi(xi + h) - phi(xi - h)) / (2 * h)
    d2 = (phi(xi + h) - 2 * phi(xi) + phi(xi - h)) / h**2
    assert np.max(np.abs(d2 - c * d1 + f.f(phi(xi)))) < 1e-6


def test_profile_residual_small(cubic03):
    f, p = cubic03
    assert np.max(np.abs(p.residual(f))) < 1e-6
    assert np.all(np.diff(p.phi) > 0)


@settings(max_examples=10, deadline=None)
@given(st.floats(min_value=0.2, max_value=0.8), st.floats(min_value=-0.6, max_value=2.0))
def test_sign_law_quartic(a, s):
    f = make_polynomial(P.polymul(P.polymul([0, 1], [1, -1]), P.polymul([-a, 1], [1, s])))
    if abs(f.integral) < 1e-4:
        return
    assert np.sign(solve_front_bistable(f).c) == np.sign(f.integral)


def test_balanced_speed_vanishes():
    assert abs(solve_front_bistable(make_cubic(0.5)).c) < 1e-6


def test_fisher_minimal_speed_and_guard():
    f = make_fisher()
    assert minimal_speed(f) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(NoFrontError, match="c_min"):
        solve_front_monostable(f, 1.0)
    p = solve_front_monostable(f, 2.5)
    assert p.c == 2.5 and p(0.0) == pytest.approx(0.5, abs=1e-9)
    assert np.max(np.abs(p.residual(f))) < 1e-6
    with pytest.raises(DomainError):
        minimal_speed(make_cubic(0.3))


@given(st.floats(min_value=0.1, max_value=0.9), st.floats(min_value=-1.0, max_value=1.0))
def test_edge_eigenvalues_solve_their_quadratics(alpha, c):
    f = make_cubic(alpha)
    e = eigenvalues(f, c)
    for lam, fp in ((e.lambda1, f.f_prime(0.0)), (e.lambda2, f.f_prime(0.0)),
                    (e.mu1, f.f_prime(1.0)), (e.mu2, f.f_prime(1.0))):
        assert lam * lam - c * lam + fp == pytest.approx(0.0, abs=1e-10)
    assert e.lambda1 > 0 > e.lambda2 and e.mu1 > 0 > e.mu2


def test_lattice_front_solves_semidiscrete_equation(cubic03):
    f, p = cubic03
    dx = 0.1
    L = lattice_front(f, p, dx)
    assert abs(L.c - p.c) < 5 * dx**2
    x = np.linspace(-10, 10, 201)
    lap = (L(x + dx) - 2 * L(x) + L(x - dx)) / dx**2
    assert np.max(np.abs(lap - L.c * L.derivative(x) + f.f(L(x)))) < 1e-6


def test_tail_constants_closed_form(cubic03):
    f, p = cubic03
    tb = fit_tail_constants(p, eigenvalues(f, p.c))
    # phi e^{-xi/sqrt2} = 1/(1 + e^{xi/sqrt2}) lies in [1/2, 1) on xi <= 0, and likewise on the right
    assert tb.M4 == pytest.approx(1.0, abs=1e-4) and tb.M4_tilde == pytest.approx(0.5, abs=1e-6)
    assert tb.M3 == pytest.approx(1.0, abs=1e-4) and tb.M3_tilde == pytest.approx(0.5, abs=1e-6)


def test_reflect_is_involution(cubic03):
    _, p = cubic03
    q = reflect(p)
    assert q.direction is Direction.DECREASING and q.c == -p.c
    xi = np.linspace(-5, 5, 11)
    assert np.allclose(q(xi), p(-xi))
    r = reflect(q)
    assert np.array_equal(r.phi, p.phi) and r.c == p.c


def test_profile_csv_roundtrip(tmp_path, cubic03):
    _, p = cubic03
    write_profile(tmp_path / "p.csv", p)
    q = read_profile(tmp_path / "p.csv")
    assert q.c == p.c and np.array_equal(q.phi, p.phi) and np.array_equal(q.xi_grid, p.xi_grid)
    text = (tmp_path / "p.csv").read_text()
    assert text.startswith("# c=") and "normalization" in text
