"""Super- and sub-solution envelopes, the shift functions p1..p5, and a
finite-difference certificate for the defining differential inequalities.

An envelope is the pointwise min (super) or max (sub) of smooth branches.
``verify_inequality`` evaluates N[u] = u_t - u_xx - f(u) on the active branch
with centered differences, skipping points next to a switch between branches.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from .front import FrontProfile, eigenvalues, minimal_speed, NoFrontError
from .reaction import CaseTag, ReactionTerm, StabilityConstants

__all__ = [
    "ParameterError",
    "ConfigurationError",
    "SamplingError",
    "EnvelopeDomainError",
    "ShiftKind",
    "Sign",
    "ShiftFunction",
    "shift_closed_form",
    "p3_offsets",
    "x6_offset",
    "Role",
    "Branch",
    "Envelope",
    "SampleGrid",
    "ResidualReport",
    "verify_inequality",
    "calibrate",
    "SandwichParams",
    "front_pair",
    "build_envelope_C1",
    "build_envelope_C2",
    "build_envelope_annihilating",
    "annihilating_grid",
    "build_envelope_monostable",
    "build_sandwich",
    "trajectory_evaluator",
    "solve_rho",
    "dominating_nu0",
    "rho_nu_check",
]


class ParameterError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


class SamplingError(RuntimeError):
    pass


class EnvelopeDomainError(ValueError):
    pass


# -- shift functions ---------------------------------------------------------

class ShiftKind(enum.Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"
    P5 = "P5"


class Sign(enum.Enum):
    PLUS = 1
    MINUS = -1


@dataclass(frozen=True)
class ShiftFunction:
    """Solution of p' = c_eff + sign * amplitude * exp(rate * p), p(0) = initial.

    For P5 the exponential is driven by p4 (``driver``), so
    p5(t) = p5(0) + c2 t + (p4(t) - p4(0) - c1 t).
    """

    kind: ShiftKind
    c_eff: float
    rate: float
    amplitude: float
    sign: Sign
    initial: float
    driver: Optional["ShiftFunction"] = None

    def __post_init__(self):
        if self.rate <= 0 or self.amplitude < 0:
            raise ParameterError("shift rate must be positive and amplitude non-negative")
        if self.c_eff == 0:
            raise ParameterError("shift drift speed must be nonzero")
        if self.kind is ShiftKind.P5 and self.driver is None:
            raise ParameterError("P5 needs its driving P4 shift")
        if self.kind is ShiftKind.P3:
            cap = min(0.0, math.log(self.c_eff / self.amplitude) / self.rate) \
                if self.amplitude > 0 and self.c_eff > 0 else 0.0
            if self.c_eff <= 0 or self.initial > cap + 1e-14:
                raise ParameterError(
                    f"p3(0)={self.initial} exceeds min(0, ln(c/M8)/lambda1)={cap}")

    @property
    def _k(self) -> float:
        return self.sign.value * (self.amplitude / self.c_eff) * math.exp(self.rate * self.initial)

    def __call__(self, t):
        return shift_closed_form(self, t)

    def derivative(self, t):
        if self.kind is ShiftKind.P5:
            return self.c_eff + self.amplitude * np.exp(self.driver.rate * self.driver(t))
        return self.c_eff + self.sign.value * self.amplitude * np.exp(self.rate * self(t))

    def drift_offset(self) -> float:
        """lim_{t -> -inf} p(t) - c_eff t."""
        if self.kind is ShiftKind.P5:
            d = self.driver
            return self.initial + d.drift_offset() - d.initial
        arg = 1.0 + self._k
        if arg <= 0:
            raise ParameterError("logarithm argument is not positive")
        return self.initial - math.log(arg) / self.rate

    def numeric(self, t, rtol: float = 1e-12, atol: float = 1e-12):
        """Integrate the shift ODE from t=0 with an adaptive 8th-order scheme."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.kind is ShiftKind.P5:
            d = self.driver

            def rhs(s, y):
                return [d.c_eff + d.amplitude * math.exp(d.rate * y[0]),
                        self.c_eff + self.amplitude * math.exp(d.rate * y[0])]
            y0 = [d.initial, self.initial]
        else:
            def rhs(s, y):
                return [self.c_eff + self.sign.value * self.amplitude * math.exp(self.rate * y[0])]
            y0 = [self.initial]
        out = np.empty_like(t)
        for mask, end in ((t <= 0, min(t.min(), 0.0)), (t > 0, max(t.max(), 0.0))):
            if not mask.any():
                continue
            if end == 0.0:
                out[mask] = self.initial
                continue
            sol = integrate.solve_ivp(rhs, (0.0, end), y0, method="DOP853", rtol=rtol,
                                      atol=atol, dense_output=True)
            if not sol.success:
                raise ParameterError(f"shift ODE integration failed: {sol.message}")
            out[mask] = sol.sol(t[mask])[-1]
        return out


def shift_closed_form(s: ShiftFunction, t):
    """p(t) = p0 + c t - (1/r) ln{1 + sign (M/c) e^{r p0} (1 - e^{c r t})}."""
    t = np.asarray(t, dtype=float)
    if s.kind is ShiftKind.P5:
        d = s.driver
        return s.initial + s.c_eff * t + (shift_closed_form(d, t) - d.initial - d.c_eff * t)
    arg = 1.0 + s._k * (1.0 - np.exp(s.c_eff * s.rate * t))
    if np.any(arg <= 0):
        raise ParameterError("logarithm argument is not positive for the requested times")
    return s.initial + s.c_eff * t - np.log(arg) / s.rate


def p3_offsets(s: ShiftFunction):
    """(x7, x8) with x7 = ln(1 - (M8/c) e^{l1 p3(0)})/l1 and x8 = p3(0) - x7."""
    if s.kind is not ShiftKind.P3:
        raise ParameterError("x7/x8 are defined for p3 only")
    arg = 1.0 - (s.amplitude / s.c_eff) * math.exp(s.rate * s.initial)
    if arg <= 0:
        raise ParameterError("ln argument for x7 is not positive")
    x7 = math.log(arg) / s.rate
    return x7, s.initial - x7


def x6_offset(p1_0: float, m7: float, c: float, lambda1: float) -> float:
    return p1_0 - math.log(1.0 + m7 / c) / lambda1


# -- envelopes ---------------------------------------------------------------

class Role(enum.Enum):
    SUPER = "Super"
    SUB = "Sub"


@dataclass(frozen=True)
class Branch:
    name: str
    fn: Callable
    exact: bool = False   # an exact (lattice) solution: N should vanish


def _const(v):
    return lambda x, t: np.full(np.broadcast(np.asarray(x), np.asarray(t)).shape, float(v))


@dataclass(frozen=True, eq=False)
class Envelope:
    role: Role
    case: str
    branches: tuple
    kink_locus: str = ""
    t_range: tuple = (-np.inf, np.inf)
    params: dict = field(default_factory=dict)

    @property
    def combine(self):
        return np.minimum if self.role is Role.SUPER else np.maximum

    def _check_t(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.t_range
        if np.any(t > hi + 1e-12) or np.any(t < lo - 1e-12):
            raise EnvelopeDomainError(
                f"{self.case} {self.role.value} envelope is valid for t in [{lo}, {hi}]")

    def branch_values(self, x, t):
        x = np.asarray(x, dtype=float)
        return np.stack([np.broadcast_to(b.fn(x, t), np.broadcast(x, np.asarray(t)).shape)
                         for b in self.branches])

    def __call__(self, x, t):
        self._check_t(t)
        vals = self.branch_values(x, t)
        return self.combine.reduce(vals, axis=0)

    def active(self, x, t):
        vals = self.branch_values(x, t)
        return np.argmin(vals, axis=0) if self.role is Role.SUPER else np.argmax(vals, axis=0)


def front_pair(p: FrontProfile, role: Role, shift: float = 0.0, case: str = "pair") -> Envelope:
    """min (Super) or max (Sub) of phi(x+ct+shift) and phi(-x+ct+shift)."""
    c = p.c
    return Envelope(role, case, (
        Branch("phi(x+ct)", lambda x, t: p(x + c * t + shift), exact=True),
        Branch("phi(-x+ct)", lambda x, t: p(-x + c * t + shift), exact=True)),
        kink_locus="x = 0", params={"shift": shift})


@dataclass(frozen=True)
class SampleGrid:
    x: np.ndarray
    t: np.ndarray
    dx: float
    ht: float = 1e-4

    @classmethod
    def regular(cls, x_lo, x_hi, dx, t_lo, t_hi, nt=31, ht=1e-4) -> "SampleGrid":
        m0, m1 = int(math.ceil(x_lo / dx - 1e-9)), int(math.floor(x_hi / dx + 1e-9))
        return cls(dx * np.arange(m0, m1 + 1), np.linspace(t_lo, t_hi, nt), float(dx), ht)


@dataclass
class ResidualReport:
    role: Role
    tol: float
    worst: float
    worst_x: float
    worst_t: float
    checked: int
    skipped: int
    exact_max_abs: float = 0.0
    by_branch: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.role is Role.SUPER:
            return self.worst >= -self.tol
        return self.worst <= self.tol


def verify_inequality(e: Envelope, f: ReactionTerm, grid: SampleGrid,
                      tol: Optional[float] = None, kink_width: int = 2) -> ResidualReport:
    """Sign check of N[u] = u_t - u_xx - f(u) branch by branch.

    Super passes iff N >= -tol, Sub iff N <= tol (default tol = 10 dx^2).
    Points whose active branch changes within ``kink_width`` grid steps or
    one time step are skipped.
    """
    tol = 10 * grid.dx**2 if tol is None else float(tol)
    x, dx, ht = grid.x, grid.dx, grid.ht
    sign = 1.0 if e.role is Role.SUPER else -1.0
    worst, wx, wt = np.inf, np.nan, np.nan
    checked = skipped = 0
    exact_abs = 0.0
    by_branch = {b.name: np.inf for b in e.branches}
    offsets = np.arange(-kink_width, kink_width + 1)
    for t in grid.t:
        e._check_t(t)
        xs = x[None, :] + dx * offsets[:, None]
        act = e.active(xs, t)
        act_tp = e.active(x, t + ht)
        act_tm = e.active(x, t - ht)
        center = act[kink_width]
        smooth = np.all(act == center, axis=0) & (act_tp == center) & (act_tm == center)
        skipped += int((~smooth).sum())
        if not smooth.any():
            continue
        xc = x[smooth]
        idx = center[smooth]
        for k, b in enumerate(e.branches):
            sel = idx == k
            if not sel.any():
                continue
            xb = xc[sel]
            u0 = np.broadcast_to(b.fn(xb, t), xb.shape)
            n = ((b.fn(xb, t + ht) - b.fn(xb, t - ht)) / (2 * ht)
                 - (b.fn(xb + dx, t) - 2 * u0 + b.fn(xb - dx, t)) / dx**2 - f.f(u0))
            n = np.broadcast_to(n, xb.shape)
            checked += n.size
            signed = sign * n
            j = int(np.argmin(signed))
            by_branch[b.name] = min(by_branch[b.name], float(signed[j]))
            if signed[j] < worst:
                worst, wx, wt = float(signed[j]), float(xb[j]), float(t)
            if b.exact:
                exact_abs = max(exact_abs, float(np.max(np.abs(n))))
    if checked == 0:
        raise SamplingError("every sample point lies next to a branch switch")
    by_branch = {k: sign * v for k, v in by_branch.items() if np.isfinite(v)}
    return ResidualReport(e.role, tol, sign * worst, wx, wt, checked, skipped, exact_abs, by_branch)


def calibrate(build: Callable[[float], Sequence[Envelope]], f: ReactionTerm,
              grid_for: Callable[[Sequence[Envelope]], SampleGrid] | SampleGrid,
              tol: float = 1e-8, start: float = 1.0, floor: float = 1e-6,
              ceiling: float = 1e6, factor: float = 1.1):
    """Smallest amplitude M (within ``factor``) whose envelopes all pass.

    Start at ``start``; double on failure, otherwise halve until failure (or the
    floor), then bisect geometrically.  Returns (M, history).
    """
    history = []

    def ok(m):
        try:
            envs = build(m)
            grid = grid_for(envs) if callable(grid_for) else grid_for
            res = all(verify_inequality(e, f, grid, tol=tol).passed for e in envs)
        except (ParameterError, EnvelopeDomainError):
            res = False
        history.append((m, res))
        return res

    m = start
    if ok(m):
        hi, lo = m, None
        while hi / 2 >= floor:
            if ok(hi / 2):
                hi /= 2
            else:
                lo = hi / 2
                break
        if lo is None:
            return hi, history
    else:
        lo = m
        hi = m * 2
        while not ok(hi):
            lo = hi
            hi *= 2
            if hi > ceiling:
                raise ParameterError(f"no passing amplitude up to {ceiling:g}")
    while hi / lo > factor:
        mid = math.sqrt(hi * lo)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi, history


# -- bistable envelopes ------------------------------------------------------

def _need(f: ReactionTerm, tags, what):
    if f.case_tag not in tags:
        raise ConfigurationError(f"{what} needs case {[t.value for t in tags]}, got {f.case_tag.value}")


def build_envelope_C1(f: ReactionTerm, p: FrontProfile, m7: float, p1_0: float = 0.0):
    """(super, sub) for merging fronts when 1 invades 0 and f'(0) > f'(1)."""
    _need(f, (CaseTag.C1,), "build_envelope_C1")
    if p.c <= 0 or m7 <= 0 or p1_0 > 0:
        raise ParameterError("need c > 0, M7 > 0 and p1(0) <= 0")
    lam1 = eigenvalues(f, p.c).lambda1
    p1 = ShiftFunction(ShiftKind.P1, p.c, lam1, m7, Sign.PLUS, p1_0)
    x6 = x6_offset(p1_0, m7, p.c, lam1)
    c = p.c
    sup = Envelope(Role.SUPER, "C1", (
        Branch("phi(x+p1)+phi(-x+p1)", lambda x, t: p(x + p1(t)) + p(-x + p1(t))),
        Branch("1", _const(1.0), exact=True)),
        kink_locus="sum = 1", t_range=(-np.inf, 0.0), params={"M7": m7, "p1": p1, "x6": x6})
    sub = Envelope(Role.SUB, "C1", (
        Branch("phi(x+ct+x6)", lambda x, t: p(x + c * t + x6), exact=True),
        Branch("phi(-x+ct+x6)", lambda x, t: p(-x + c * t + x6), exact=True)),
        kink_locus="x = 0", params={"M7": m7, "x6": x6, "p1": p1})
    return sup, sub


def default_p3_initial(c: float, m8: float, lambda1: float) -> float:
    """p3(0) with p3'(0) = c/2: strictly inside the admissible range."""
    return min(0.0, math.log(c / (2 * m8)) / lambda1)


def build_envelope_C2(f: ReactionTerm, p: FrontProfile, m8: float, p2_0: float = 0.0,
                      p3_0: Optional[float] = None):
    """(super, sub) built from sums of the two fronts with shifts p2, p3."""
    _need(f, (CaseTag.C2,), "build_envelope_C2")
    if p.c <= 0 or m8 <= 0 or p2_0 > 0:
        raise ParameterError("need c > 0, M8 > 0 and p2(0) <= 0")
    lam1 = eigenvalues(f, p.c).lambda1
    if p3_0 is None:
        p3_0 = default_p3_initial(p.c, m8, lam1)
    p2 = ShiftFunction(ShiftKind.P2, p.c, lam1, m8, Sign.PLUS, p2_0)
    p3 = ShiftFunction(ShiftKind.P3, p.c, lam1, m8, Sign.MINUS, p3_0)
    x7, x8 = p3_offsets(p3)
    sup = Envelope(Role.SUPER, "C2", (
        Branch("phi(x+p2)+phi(-x+p2)", lambda x, t: p(x + p2(t)) + p(-x + p2(t))),),
        t_range=(-np.inf, 0.0), params={"M8": m8, "p2": p2})
    sub = Envelope(Role.SUB, "C2", (
        Branch("phi(x+p3)+phi(-x+p3)", lambda x, t: p(x + p3(t)) + p(-x + p3(t))),),
        t_range=(-np.inf, 0.0), params={"M8": m8, "p3": p3, "x7": x7, "x8": x8})
    return sup, sub


def band_shift(p: FrontProfile, B: float):
    """h1(t) = 4 B phi(|c| t); vanishes as t -> -inf for either sign of c."""
    a = abs(p.c)
    return lambda t: 4.0 * B * p(a * np.asarray(t, dtype=float))


def build_envelope_annihilating(f: ReactionTerm, p: FrontProfile, B: float):
    """(super, sub) = (Phi(x, t - h1), Phi(x, t + h1)) with
    Phi(x, t) = phi(x+ct) phi(-x+ct), valid for t <= -4 B phi(0)."""
    _need(f, (CaseTag.C3, CaseTag.C4), "build_envelope_annihilating")
    if p.c >= 0 or B <= 0:
        raise ParameterError("need c < 0 and B > 0")
    c = p.c
    h1 = band_shift(p, B)
    t_hi = -4.0 * B * float(p(0.0))

    def product(x, s):
        return p(x + c * s) * p(-x + c * s)
    sup = Envelope(Role.SUPER, "C3-C4", (
        Branch("Phi(x,t-h1)", lambda x, t: product(x, t - h1(t))),),
        t_range=(-np.inf, t_hi), params={"B": B, "t_valid": t_hi})
    sub = Envelope(Role.SUB, "C3-C4", (
        Branch("Phi(x,t+h1)", lambda x, t: product(x, t + h1(t))),),
        t_range=(-np.inf, t_hi), params={"B": B, "t_valid": t_hi})
    return sup, sub


def annihilating_grid(p: FrontProfile, dx: float, span: float = 30.0, nt: int = 31,
                      margin: float = 20.0):
    """Grid factory for ``calibrate``: the window [t_valid - span, t_valid] and an
    x range that holds both fronts throughout it."""
    def grid_for(envs):
        t_hi = float(envs[0].params["t_valid"])
        x = abs(p.c) * (abs(t_hi) + span) + margin
        return SampleGrid.regular(-x, x, dx, t_hi - span, t_hi, nt)
    return grid_for


# -- monostable envelopes ----------------------------------------------------

def solve_rho(f: ReactionTerm, rho0: float = 0.5, t_lo: float = -60.0, t_hi: float = 0.0):
    """Dense solution of rho' = f(rho), rho(0) = rho0, on [t_lo, t_hi]."""
    if not 0 < rho0 < 1:
        raise ParameterError("rho(0) must lie in (0, 1)")
    pieces = []
    for end in (t_lo, t_hi):
        if end == 0.0:
            continue
        sol = integrate.solve_ivp(lambda s, y: f.f(y), (0.0, end), [rho0], method="DOP853",
                                  rtol=1e-13, atol=1e-300, dense_output=True)
        pieces.append((min(0.0, end), max(0.0, end), sol.sol))

    def rho(t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, float(rho0))
        for a, b, s in pieces:
            m = (t >= a) & (t <= b) & (t != 0)
            if np.any(m):
                out[m] = s(t[m])[0]
        if np.any((t < t_lo) | (t > t_hi)):
            raise EnvelopeDomainError(f"rho tabulated on [{t_lo}, {t_hi}] only")
        return out
    return rho


def dominating_nu0(rho, fp0: float, t_lo: float = -60.0) -> float:
    """Smallest nu0 with nu0 e^{f'(0) t} >= rho(t) on [t_lo, 0]."""
    t = np.linspace(t_lo, 0.0, 6001)
    return float(np.max(rho(t) * np.exp(-fp0 * t))) * (1 + 1e-9)


def rho_nu_check(rho, nu0: float, fp0: float, t_lo: float = -30.0, n: int = 3001):
    """Literal check of 0 < rho - nu <= M10 e^{f'(0) t} on [t_lo, 0].

    Returns (min of rho - nu, fitted M10 = sup (rho - nu) e^{-f'(0) t}, passed).
    """
    t = np.linspace(t_lo, 0.0, n)
    d = rho(t) - nu0 * np.exp(fp0 * t)
    m10 = float(np.max(d * np.exp(-fp0 * t)))
    ok = bool(np.all(d > 0) and np.all(d <= m10 * np.exp(fp0 * t) * (1 + 1e-12)))
    return float(np.min(d)), m10, ok


_VARIANTS = {"u3": (1, 1, False), "u10": (1, 0, True), "u01": (0, 1, True), "u11": (1, 1, True)}


def build_envelope_monostable(f: ReactionTerm, p1: FrontProfile, p2: FrontProfile, m9: float,
                              alpha_tilde: float, p4_0: float = 0.0, p5_0: float = 0.0,
                              variant: str = "u3", nu0: Optional[float] = None,
                              rho0: float = 0.5, t_lo: float = -60.0):
    """(upper, lower) for the monostable entire solutions u3 and u_ij."""
    if f.case_tag is not CaseTag.MONOSTABLE:
        raise ConfigurationError("monostable envelopes need a monostable reaction term")
    if variant not in _VARIANTS:
        raise ConfigurationError(f"unknown variant {variant!r}")
    c1, c2 = p1.c, p2.c
    cmin = minimal_speed(f)
    if min(c1, c2) < cmin - 1e-9:
        raise NoFrontError(f"front speeds must be >= c_min={cmin}")
    if c1 > c2:
        raise ParameterError("need c1 <= c2")
    if not p5_0 <= p4_0 <= 0:
        raise ParameterError("need p5(0) <= p4(0) <= 0")
    if m9 <= 0 or alpha_tilde <= 0:
        raise ParameterError("M9 and alpha~ must be positive")
    ci, cj, with_rho = _VARIANTS[variant]
    p4 = ShiftFunction(ShiftKind.P4, c1, alpha_tilde, m9, Sign.PLUS, p4_0)
    p5 = ShiftFunction(ShiftKind.P5, c2, alpha_tilde, m9, Sign.PLUS, p5_0, driver=p4)
    y1, y2 = p4.drift_offset(), p5.drift_offset()
    params = {"M9": m9, "alpha_tilde": alpha_tilde, "p4": p4, "p5": p5, "y_left": y1,
              "y_right": y2, "variant": variant}
    lower = []
    if ci:
        lower.append(Branch("phi1(x+c1t+y)", lambda x, t: p1(x + c1 * t + y1), exact=True))
    if cj:
        lower.append(Branch("phi2(-x+c2t+y)", lambda x, t: p2(-x + c2 * t + y2), exact=True))

    def fronts(x, t):
        out = 0.0
        if ci:
            out = out + p1(x + p4(t))
        if cj:
            out = out + p2(-x + p5(t))
        return out

    upper_name = "+".join(n for n, k in (("phi1(x+p4)", ci), ("phi2(-x+p5)", cj)) if k)
    if with_rho:
        rho = solve_rho(f, rho0, t_lo, 0.0)
        fp0 = float(f.f_prime(0.0))
        nu0 = dominating_nu0(rho, fp0, t_lo) if nu0 is None else float(nu0)
        params.update(rho=rho, rho0=rho0, nu0=nu0)
        lower.append(Branch("rho(t)", lambda x, t: np.broadcast_to(
            rho(np.asarray(t, dtype=float)), np.broadcast(np.asarray(x), np.asarray(t)).shape),
            exact=False))
        upper_fn = (lambda x, t: fronts(x, t) + nu0 * np.exp(fp0 * np.asarray(t)))
        upper_name += "+nu(t)"
    else:
        upper_fn = fronts
    t_range = (t_lo if with_rho else -np.inf, 0.0)
    upper = Envelope(Role.SUPER, f"Monostable-{variant}",
                     (Branch(upper_name, upper_fn), Branch("1", _const(1.0), exact=True)),
                     kink_locus="sum = 1", t_range=t_range, params=params)
    lower_env = Envelope(Role.SUB, f"Monostable-{variant}", tuple(lower),
                         kink_locus="branch switch", t_range=t_range, params=params)
    return upper, lower_env


# -- sandwich ----------------------------------------------------------------

@dataclass(frozen=True)
class SandwichParams:
    q0_bar: float
    v: float
    w: float
    b: float            # b_bar (> 0) or b_tilde (< 0)
    increasing: bool = True

    @property
    def gamma0(self) -> float:
        if self.increasing:
            return (self.v - self.w) / (self.b * self.v)
        return (self.w - self.v) / (self.b * self.v)

    def q(self, t):
        return self.q0_bar * np.exp(self.v * np.asarray(t, dtype=float))

    def gamma(self, t):
        g0 = self.gamma0
        return self.q0_bar * (1.0 + g0 - g0 * np.exp(self.v * np.asarray(t, dtype=float)))

    def gamma_prime(self, t):
        return -self.q0_bar * self.gamma0 * self.v * np.exp(self.v * np.asarray(t, dtype=float))


def trajectory_evaluator(traj):
    """(x, t) -> u for grid-node x, using the trajectory's Hermite time interpolation."""
    def ev(x, t):
        x = np.asarray(x, dtype=float)
        idx = np.rint((x - traj.x0) / traj.dx).astype(int)
        idx = np.clip(idx, 0, traj.u.shape[1] - 1)
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return traj.at(float(t))[idx]
        out = np.empty(np.broadcast(x, t).shape)
        xb, tb = np.broadcast_arrays(idx, t)
        for tv in np.unique(tb):
            m = tb == tv
            out[m] = traj.at(float(tv))[xb[m]]
        return out
    return ev


def build_sandwich(u_entire: Callable, sc: StabilityConstants, q0_bar: float,
                   direction: str = "Increasing"):
    """(super, sub) around an entire solution, for t >= 0.

    Increasing: min{1, u(x,t+gamma)+q}, max{0, u(x,t-gamma)-q}.
    Decreasing: min{1, u(x,t-gamma~)+q}, max{0, u(x,t+gamma~)-q}.
    """
    if q0_bar < 0 or q0_bar > sc.theta:
        raise ParameterError(f"q0_bar={q0_bar} must lie in [0, theta={sc.theta}]")
    inc = direction.lower().startswith("inc")
    b = sc.b_bar if inc else sc.b_tilde
    if b is None:
        raise ParameterError("the mid-range derivative bound (b_bar or b_tilde) must be measured first")
    sp = SandwichParams(q0_bar, sc.v, sc.w, b, inc)
    s = 1.0 if inc else -1.0
    u = u_entire
    sup = Envelope(Role.SUPER, "sandwich", (
        Branch("u(x,t+g)+q", lambda x, t: u(x, t + s * sp.gamma(t)) + sp.q(t)),
        Branch("1", _const(1.0), exact=True)),
        kink_locus="u + q = 1", t_range=(0.0, np.inf), params={"sandwich": sp})
    sub = Envelope(Role.SUB, "sandwich", (
        Branch("u(x,t-g)-q", lambda x, t: u(x, t - s * sp.gamma(t)) - sp.q(t)),
        Branch("0", _const(0.0), exact=True)),
        kink_locus="u - q = 0", t_range=(0.0, np.inf), params={"sandwich": sp})
    return sup, sub
