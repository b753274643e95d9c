import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import polynomial as P

from entirelab.reaction import (AssumptionViolation, CaseTag, InvalidParameter,
                                StabilityConstants, compute_constants, make_cubic, make_fisher,
                                make_polynomial, parse_reaction)

alphas = st.floats(min_value=0.05, max_value=0.95).filter(lambda a: abs(a - 0.5) > 1e-3)


@given(alphas, st.floats(min_value=-0.5, max_value=1.5))
def test_cubic_matches_factored_form(alpha, u):
    f = make_cubic(alpha)
    assert f.f(u) == pytest.approx(u * (1 - u) * (u - alpha), abs=1e-14)
    assert f.f_prime(u) == pytest.approx(-alpha + 2 * (1 + alpha) * u - 3 * u * u, abs=1e-13)


@given(alphas)
def test_cubic_integral_closed_form(alpha):
    # int_0^1 u(1-u)(u-a) du = (1 - 2a)/12
    assert make_cubic(alpha).integral == pytest.approx((1 - 2 * alpha) / 12, abs=1e-12)


@given(alphas)
def test_cubic_case_tag(alpha):
    f = make_cubic(alpha)
    assert f.is_bistable and f.alpha == pytest.approx(alpha)
    # f'(0) = -a > f'(1) = a - 1 exactly when a < 1/2, and then the integral is positive
    assert f.case_tag is (CaseTag.C1 if alpha < 0.5 else CaseTag.C4)


def test_balanced_cubic():
    assert make_cubic(0.5).case_tag is CaseTag.BALANCED


def test_quartic_case_c2():
    f = make_polynomial(P.polymul(P.polymul([0, 1], [1, -1]), P.polymul([-0.4, 1], [1, -0.5])))
    assert f.case_tag is CaseTag.C2
    assert f.alpha == pytest.approx(0.4)
    assert f.f_prime(0.0) < f.f_prime(1.0) and f.integral > 0


def test_fisher():
    f = make_fisher()
    assert f.case_tag is CaseTag.MONOSTABLE and not f.is_bistable
    assert f.f(0.3) == pytest.approx(0.21)


@pytest.mark.parametrize("coeffs", [
    [0.1, -1.0],                      # degree too low
    [0.1, 1.0, -1.0],                 # f(0) != 0
    [0.0, -1.0, 1.0],                 # f'(1) > 0
    [0.0, 1.0, -3.0, 2.0],            # f'(0) > 0 but f < 0 on (1/2, 1)
    [0.0, 0.18, -1.08, 1.9, -1.0],    # u(1-u)(u-0.3)(u-0.6): two interior zeros
])
def test_invalid_polynomials(coeffs):
    with pytest.raises((InvalidParameter, AssumptionViolation)):
        make_polynomial(coeffs)


def test_bad_alpha_and_spec():
    with pytest.raises(InvalidParameter):
        make_cubic(1.2)
    with pytest.raises(InvalidParameter):
        parse_reaction("quintic:0.2")


def test_parse_forms():
    assert parse_reaction("cubic:0.3").alpha == pytest.approx(0.3)
    assert parse_reaction("cubic(0.3)").alpha == pytest.approx(0.3)
    assert parse_reaction("fisher").case_tag is CaseTag.MONOSTABLE
    assert parse_reaction("poly:[0, 1, -1]").case_tag is CaseTag.MONOSTABLE
    assert parse_reaction([0.0, -0.3, 1.3, -1.0]).case_tag is CaseTag.C1


def test_constants_cubic_03():
    sc = compute_constants(make_cubic(0.3))
    # w = max f' = -a + (1+a)^2/3 at u = (1+a)/3
    assert sc.w == pytest.approx(-0.3 + 1.3**2 / 3, abs=1e-9)
    assert sc.theta == 0.0625
    # v = max of f' on the collars [-theta, 2 theta] and [1-2 theta, 1+theta]
    u = np.concatenate([np.linspace(-0.0625, 0.125, 20001), np.linspace(0.875, 1.0625, 20001)])
    assert sc.v == pytest.approx(np.max(make_cubic(0.3).f_prime(u)), abs=1e-9)
    assert sc.v < 0 and sc.b > 0


def test_constants_fisher():
    sc = compute_constants(make_fisher())
    assert sc.theta == 0.125 and sc.v < 0


def test_stability_constants_invariants():
    with pytest.raises(AssumptionViolation):
        StabilityConstants(w=1.0, v=0.1, b=1.0, theta=0.1)
    sc = StabilityConstants(w=1.0, v=-0.1, b=1.0, theta=0.1)
    with pytest.raises(AssumptionViolation):
        sc.with_measured(b_bar=-1.0)
    assert sc.with_measured(b_tilde=-0.5).b_tilde == -0.5


@settings(max_examples=30)
@given(st.floats(min_value=0.1, max_value=0.9), st.floats(min_value=0.1, max_value=0.9))
def test_quartic_classification_consistent(a, s):
    # f = u(1-u)(u-a)(1 + s u) is bistable; its tag follows the integral sign and f'(0) vs f'(1)
    coeffs = P.polymul(P.polymul([0, 1], [1, -1]), P.polymul([-a, 1], [1, s]))
    f = make_polynomial(coeffs)
    integral = f.integral
    if abs(integral) < 1e-8:
        assert f.case_tag is CaseTag.BALANCED
    elif integral > 0:
        assert f.case_tag in (CaseTag.C1, CaseTag.C2)
        assert (f.case_tag is CaseTag.C1) == (f.f_prime(0) > f.f_prime(1))
    else:
        assert f.case_tag in (CaseTag.C3, CaseTag.C4)
        assert (f.case_tag is CaseTag.C3) == (f.f_prime(0) > f.f_prime(1))
