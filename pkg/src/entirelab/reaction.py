"""Reaction terms for 1D reaction-diffusion: validation, case tags and constants.

Every nonlinearity is stored as a polynomial in ascending-power coefficients,
which covers the Allen-Cahn cubic, the Fisher-KPP logistic term and the
quartics used for the less common bistable cases.
"""
from __future__ import annotations

import ast
import enum
import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate, optimize

__all__ = [
    "AssumptionClass",
    "CaseTag",
    "ReactionError",
    "InvalidParameter",
    "AssumptionViolation",
    "ReactionTerm",
    "StabilityConstants",
    "make_cubic",
    "make_fisher",
    "make_polynomial",
    "parse_reaction",
    "classify",
    "compute_constants",
]

ZERO_TOL = 1e-10
BALANCE_TOL = 1e-8
QUAD_TOL = 1e-10
SAMPLE_STEP = 1e-3


class ReactionError(ValueError):
    """Base class for reaction-term problems."""


class InvalidParameter(ReactionError):
    pass


class AssumptionViolation(ReactionError):
    pass


class AssumptionClass(enum.Enum):
    BISTABLE = "BistableA"
    MONOSTABLE = "MonostableAPrime"


class CaseTag(enum.Enum):
    C1 = "C1"
    C2 = "C2"
    C3 = "C3"
    C4 = "C4"
    MONOSTABLE = "Monostable"
    BALANCED = "Balanced"

    @property
    def invading_one(self) -> bool:
        """True when 1 invades 0 (positive integral of f)."""
        return self in (CaseTag.C1, CaseTag.C2, CaseTag.MONOSTABLE)


@dataclass(frozen=True, eq=False)
class ReactionTerm:
    """Polynomial nonlinearity f with its assumption class and case tag."""

    coefficients: tuple
    assumption_class: AssumptionClass
    case_tag: CaseTag
    alpha: Optional[float] = None
    spec: str = ""

    @property
    def _c(self) -> np.ndarray:
        return np.asarray(self.coefficients, dtype=float)

    def f(self, u):
        return P.polyval(u, self._c)

    __call__ = f

    def f_prime(self, u):
        return P.polyval(u, P.polyder(self._c))

    def f_second(self, u):
        return P.polyval(u, P.polyder(self._c, 2))

    @property
    def integral(self) -> float:
        """Quadrature of f over [0, 1]."""
        val, _ = integrate.quad(self.f, 0.0, 1.0, epsabs=QUAD_TOL, epsrel=1e-12)
        return float(val)

    @property
    def is_bistable(self) -> bool:
        return self.assumption_class is AssumptionClass.BISTABLE

    def __repr__(self) -> str:
        return f"ReactionTerm({self.spec or list(self.coefficients)!r}, {self.case_tag.value})"


@dataclass(frozen=True)
class StabilityConstants:
    w: float
    v: float
    b: float
    theta: float
    b_bar: Optional[float] = None
    b_tilde: Optional[float] = None

    def __post_init__(self):
        if self.v >= 0:
            raise AssumptionViolation(f"v must be negative, got {self.v}")
        if self.b <= 0 or self.theta <= 0:
            raise AssumptionViolation("b and theta must be positive")
        if self.b_bar is not None and self.b_bar <= 0:
            raise AssumptionViolation(f"b_bar must be positive, got {self.b_bar}")
        if self.b_tilde is not None and self.b_tilde >= 0:
            raise AssumptionViolation(f"b_tilde must be negative, got {self.b_tilde}")

    def with_measured(self, b_bar=None, b_tilde=None) -> "StabilityConstants":
        return replace(
            self,
            b_bar=self.b_bar if b_bar is None else float(b_bar),
            b_tilde=self.b_tilde if b_tilde is None else float(b_tilde),
        )


def _interior_roots(coeffs: np.ndarray) -> list[float]:
    roots = P.polyroots(coeffs)
    real = roots[np.abs(roots.imag) < 1e-9].real
    return sorted(r for r in real if 1e-9 < r < 1 - 1e-9)


def _validate(coeffs: np.ndarray) -> tuple[AssumptionClass, Optional[float]]:
    f0, f1 = P.polyval(0.0, coeffs), P.polyval(1.0, coeffs)
    if abs(f0) > ZERO_TOL or abs(f1) > ZERO_TOL:
        raise AssumptionViolation(f"need f(0)=f(1)=0, got f(0)={f0:g}, f(1)={f1:g}")
    d = P.polyder(coeffs)
    fp0, fp1 = P.polyval(0.0, d), P.polyval(1.0, d)
    if fp1 >= 0:
        raise AssumptionViolation(f"need f'(1)<0, got {fp1:g}")
    u = np.linspace(0.0, 1.0, 2001)[1:-1]
    vals = P.polyval(u, coeffs)
    if fp0 > 0:
        if np.any(vals <= 0):
            raise AssumptionViolation("monostable f must be positive on (0,1)")
        return AssumptionClass.MONOSTABLE, None
    if fp0 == 0:
        raise AssumptionViolation("degenerate f'(0)=0 is not supported")
    roots = _interior_roots(coeffs)
    # sign change check guards against double roots reported by polyroots
    crossing = [r for r in roots
                if P.polyval(r - 1e-6, coeffs) * P.polyval(r + 1e-6, coeffs) < 0]
    if len(roots) != 1 or len(crossing) != 1:
        raise AssumptionViolation(
            f"bistable f needs exactly one interior zero, found {roots}")
    alpha = crossing[0]
    if P.polyval(alpha, d) <= 0:
        raise AssumptionViolation("interior zero must be unstable (f'(alpha)>0)")
    return AssumptionClass.BISTABLE, float(alpha)


def make_polynomial(coefficients: Sequence[float], spec: str = "") -> ReactionTerm:
    """Validate ascending-power coefficients against (A) or (A') and tag the case."""
    coeffs = np.trim_zeros(np.asarray(coefficients, dtype=float), "b")
    if coeffs.size < 3:
        raise InvalidParameter("reaction polynomial must have degree >= 2")
    cls, alpha = _validate(coeffs)
    term = ReactionTerm(tuple(float(c) for c in coeffs), cls, CaseTag.BALANCED,
                        alpha, spec or f"poly:{list(map(float, coeffs))}")
    return replace(term, case_tag=classify(term))


def make_cubic(alpha: float) -> ReactionTerm:
    """Allen-Cahn term u(1-u)(u-alpha)."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise InvalidParameter(f"alpha must lie in (0,1), got {alpha}")
    # u(1-u)(u-a) = -a u + (1+a) u^2 - u^3
    term = ReactionTerm((0.0, -alpha, 1.0 + alpha, -1.0),
                        AssumptionClass.BISTABLE, CaseTag.BALANCED, alpha,
                        f"cubic:{alpha!r}")
    return replace(term, case_tag=classify(term))


def make_fisher() -> ReactionTerm:
    """Fisher-KPP term u(1-u)."""
    return make_polynomial([0.0, 1.0, -1.0], spec="fisher")


_CUBIC = re.compile(r"^cubic\s*[:(]\s*([-+0-9.eE]+)\s*\)?$")
_POLY = re.compile(r"^poly\s*:\s*(\[.*\])$")


def parse_reaction(spec) -> ReactionTerm:
    """Build a reaction term from ``cubic:0.3``, ``cubic(0.3)``, ``fisher``,
    ``poly:[c0, c1, ...]`` or a bare coefficient list."""
    if isinstance(spec, ReactionTerm):
        return spec
    if isinstance(spec, (list, tuple)):
        return make_polynomial(spec)
    text = str(spec).strip()
    if text.lower() == "fisher":
        return make_fisher()
    m = _CUBIC.match(text)
    if m:
        return make_cubic(float(m.group(1)))
    m = _POLY.match(text)
    if m or text.startswith("["):
        raw = m.group(1) if m else text
        try:
            coeffs = ast.literal_eval(raw)
        except (ValueError, SyntaxError) as exc:
            raise InvalidParameter(f"cannot parse coefficients {raw!r}") from exc
        return make_polynomial(coeffs, spec=f"poly:{raw}")
    raise InvalidParameter(f"unknown reaction spec {text!r}")


def classify(f: ReactionTerm) -> CaseTag:
    if f.assumption_class is AssumptionClass.MONOSTABLE:
        return CaseTag.MONOSTABLE
    integral = f.integral
    if abs(integral) < BALANCE_TOL:
        return CaseTag.BALANCED
    fp0, fp1 = f.f_prime(0.0), f.f_prime(1.0)
    if integral > 0:
        return CaseTag.C1 if fp0 > fp1 else CaseTag.C2
    return CaseTag.C3 if fp0 > fp1 else CaseTag.C4


def _max_on(fn, a: float, b: float) -> float:
    """Max of fn on [a, b]: dense sample then bounded refinement of the best cell."""
    u = np.linspace(a, b, max(int((b - a) / SAMPLE_STEP) + 1, 11))
    vals = fn(u)
    k = int(np.argmax(vals))
    lo, hi = u[max(k - 1, 0)], u[min(k + 1, u.size - 1)]
    best = float(vals[k])
    if hi > lo:
        res = optimize.minimize_scalar(lambda s: -fn(s), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-10})
        best = max(best, float(-res.fun))
    return best


def _collars(theta: float, bistable: bool):
    if bistable:
        return [(-theta, 2 * theta), (1 - 2 * theta, 1 + theta)]
    return [(1 - 2 * theta, 1 + theta)]


def _collar_ok(f: ReactionTerm, theta: float) -> bool:
    for a, b in _collars(theta, f.is_bistable):
        u = np.arange(a, b + SAMPLE_STEP / 2, SAMPLE_STEP)
        u = np.append(u, b)
        if np.any(f.f_prime(u) >= 0):
            return False
    if not f.is_bistable:
        u = np.append(np.arange(0.0, 2 * theta, SAMPLE_STEP), 2 * theta)
        if np.any(f.f_prime(u) <= 0):
            return False
    return True


def compute_constants(f: ReactionTerm) -> StabilityConstants:
    """w, v, b and theta for a validated reaction term."""
    w = _max_on(f.f_prime, 0.0, 1.0)
    if f.is_bistable and f.f_prime(0.0) >= 0:
        raise AssumptionViolation("no negative collar at 0: f'(0) >= 0")
    theta = 0.25
    while not _collar_ok(f, theta):
        theta /= 2
        if theta < 1e-6:
            raise AssumptionViolation("no positive collar width theta found")
    v = max(_max_on(f.f_prime, a, b) for a, b in _collars(theta, f.is_bistable))

    u = np.linspace(0.0, 1.0, 100001)[1:-1]
    fu = np.abs(f.f(u))
    b = max(float(np.max(fu / u)), float(np.max(fu / (1 - u))),
            abs(f.f_prime(0.0)), abs(f.f_prime(1.0)))
    return StabilityConstants(w=float(w), v=float(v), b=float(b), theta=float(theta))
