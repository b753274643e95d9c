"""Traveling fronts phi(x + c t) connecting 0 and 1.

Continuous fronts come from phase-plane shooting.  ``lattice_front`` refines a
continuous front into the traveling wave of the semi-discrete equation on a
grid of spacing dx, which the evolution code propagates without speed drift.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline

from .io import read_csv, write_csv
from .reaction import AssumptionClass, ReactionTerm

__all__ = [
    "Direction",
    "FrontError",
    "SolverFailure",
    "NoFrontError",
    "DomainError",
    "FitFailure",
    "EdgeEigenvalues",
    "TailBounds",
    "FrontProfile",
    "eigenvalues",
    "minimal_speed",
    "solve_front_bistable",
    "solve_front_monostable",
    "lattice_front",
    "fit_tail_constants",
    "reflect",
    "write_profile",
    "read_profile",
]

SHOOT_EPS = 1e-8
ODE_RTOL = 1e-10
ODE_ATOL = 1e-13
TABLE_STEP = 0.01


class FrontError(RuntimeError):
    pass


class SolverFailure(FrontError):
    pass


class NoFrontError(FrontError, ValueError):
    pass


class DomainError(FrontError, ValueError):
    pass


class FitFailure(FrontError):
    pass


class Direction(enum.Enum):
    INCREASING = "Increasing"
    DECREASING = "DecreasingReflect"


@dataclass(frozen=True)
class EdgeEigenvalues:
    lambda1: float
    lambda2: float
    mu1: float
    mu2: float


@dataclass(frozen=True)
class TailBounds:
    M3: float
    M3_tilde: float
    M4: float
    M4_tilde: float


@dataclass(frozen=True, eq=False)
class FrontProfile:
    """Tabulated front on a uniform xi grid with exponential tail extension.

    Outside the table the profile is ``limit + (edge - limit) * exp(rate * dxi)``
    on each side, so evaluation is defined on the whole line.
    """

    xi_grid: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    c: float
    direction: Direction = Direction.INCREASING
    left_limit: float = 0.0
    right_limit: float = 1.0
    left_rate: float = 1.0
    right_rate: float = -1.0
    lattice_dx: Optional[float] = None
    normalization: str = "phi(0)=1/2"

    @functools.cached_property
    def _spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.xi_grid, self.phi, self.dphi)

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        a, b = self.xi_grid[0], self.xi_grid[-1]
        inner = self._spline(np.clip(xi, a, b))
        left = self.left_limit + (self.phi[0] - self.left_limit) * np.exp(
            self.left_rate * np.minimum(xi - a, 0.0))
        right = self.right_limit + (self.phi[-1] - self.right_limit) * np.exp(
            self.right_rate * np.maximum(xi - b, 0.0))
        return np.where(xi < a, left, np.where(xi > b, right, inner))

    def derivative(self, xi):
        xi = np.asarray(xi, dtype=float)
        a, b = self.xi_grid[0], self.xi_grid[-1]
        inner = self._spline(np.clip(xi, a, b), 1)
        left = self.left_rate * (self.phi[0] - self.left_limit) * np.exp(
            self.left_rate * np.minimum(xi - a, 0.0))
        right = self.right_rate * (self.phi[-1] - self.right_limit) * np.exp(
            self.right_rate * np.maximum(xi - b, 0.0))
        return np.where(xi < a, left, np.where(xi > b, right, inner))

    @property
    def dxi(self) -> float:
        return float(self.xi_grid[1] - self.xi_grid[0])

    def residual(self, f: ReactionTerm) -> np.ndarray:
        """Centered-difference residual of phi'' - c phi' + f(phi) on the table."""
        h = self.dxi
        p = self.phi
        d2 = (p[2:] - 2 * p[1:-1] + p[:-2]) / h**2
        d1 = (p[2:] - p[:-2]) / (2 * h)
        return d2 - self.c * d1 + f.f(p[1:-1])


def minimal_speed(f: ReactionTerm) -> float:
    if f.assumption_class is not AssumptionClass.MONOSTABLE:
        raise DomainError("minimal speed is defined for monostable terms only")
    return 2.0 * np.sqrt(f.f_prime(0.0))


def eigenvalues(f: ReactionTerm, c: float) -> EdgeEigenvalues:
    """Roots of lambda^2 - c lambda + f'(0) and mu^2 - c mu + f'(1)."""
    d0 = c * c - 4.0 * f.f_prime(0.0)
    d1 = c * c - 4.0 * f.f_prime(1.0)
    if d0 < 0 or d1 < 0:
        raise DomainError(
            f"complex edge eigenvalues for c={c!r} (discriminants {d0:g}, {d1:g})")
    s0, s1 = np.sqrt(d0), np.sqrt(d1)
    return EdgeEigenvalues((c + s0) / 2, (c - s0) / 2, (c + s1) / 2, (c - s1) / 2)


def _rhs(f: ReactionTerm, c: float):
    def rhs(_, y):
        return [y[1], c * y[1] - f.f(y[0])]
    return rhs


def _shoot(f: ReactionTerm, c: float, span: float = 400.0) -> float:
    """Signed miss of the unstable manifold of (0,0) with respect to (1,0).

    Positive: crosses phi=1 with slope phi' > 0 (speed too large).
    Negative: turns back below 1 (speed too small).
    """
    lam = eigenvalues(f, c).lambda1

    def hit_one(_, y):
        return y[0] - 1.0
    hit_one.terminal, hit_one.direction = True, 1

    def turn(_, y):
        return y[1]
    turn.terminal, turn.direction = True, -1

    sol = integrate.solve_ivp(_rhs(f, c), (0.0, span), [SHOOT_EPS, lam * SHOOT_EPS],
                              method="DOP853", rtol=ODE_RTOL, atol=ODE_ATOL,
                              events=(hit_one, turn))
    if sol.t_events[0].size:
        return float(sol.y_events[0][0][1])
    if sol.t_events[1].size:
        return float(sol.y_events[1][0][0] - 1.0)
    return float(sol.y[0, -1] - 1.0)


def _half_branch(f, c, start, rate, span, level=0.5):
    """Integrate from an edge equilibrium along its manifold up to phi=level.

    Returns the dense solution and the xi at which phi reaches ``level``.
    """
    def reach(_, y):
        return y[0] - level
    reach.terminal = True
    sol = integrate.solve_ivp(_rhs(f, c), (0.0, span), start, method="DOP853",
                              rtol=ODE_RTOL, atol=ODE_ATOL, dense_output=True,
                              events=reach)
    if not sol.t_events[0].size:
        raise SolverFailure(f"manifold branch never reached phi={level} (c={c!r})")
    return sol, float(sol.t_events[0][0])


def _tabulate(pieces, step):
    """Sample (sol, xi_shift, lo, hi) pieces on one uniform grid through xi=0."""
    lo = min(p[2] for p in pieces)
    hi = max(p[3] for p in pieces)
    k = np.arange(int(np.ceil(lo / step)), int(np.floor(hi / step)) + 1)
    xi = k * step
    phi = np.empty_like(xi)
    dphi = np.empty_like(xi)
    for sol, shift, a, b in pieces:
        sel = (xi >= a - 1e-12) & (xi <= b + 1e-12)
        y = sol.sol(xi[sel] + shift)
        phi[sel], dphi[sel] = y[0], y[1]
    return xi, phi, dphi


def solve_front_bistable(f: ReactionTerm, tol: float = 1e-8,
                         step: float = TABLE_STEP) -> FrontProfile:
    """Speed and increasing profile of the bistable front, normalized phi(0)=1/2."""
    if not f.is_bistable:
        raise DomainError("solve_front_bistable needs a bistable reaction term")
    if tol <= 0:
        raise ValueError("tol must be positive")
    u = np.linspace(0, 1, 1001)
    cmax = 2.0 * np.sqrt(np.max(np.abs(f.f_prime(u))))
    lo, hi = _shoot(f, -cmax), _shoot(f, cmax)
    if not (lo < 0 < hi):
        raise SolverFailure(
            f"no sign change of the shooting functional on [{-cmax:g}, {cmax:g}]: "
            f"F(lo)={lo:g}, F(hi)={hi:g}")
    c = optimize.brentq(lambda s: _shoot(f, s), -cmax, cmax, xtol=min(tol, 1e-12),
                        rtol=4 * np.finfo(float).eps, maxiter=200)
    return _profile_from_speed(f, c, step)


def _profile_from_speed(f, c, step):
    e = eigenvalues(f, c)
    left, xl = _half_branch(f, c, [SHOOT_EPS, e.lambda1 * SHOOT_EPS], e.lambda1, 400.0)
    right, xr = _half_branch(f, c, [1 - SHOOT_EPS, -e.mu2 * SHOOT_EPS], e.mu2, -400.0)
    xi, phi, dphi = _tabulate([(left, xl, -xl, 0.0), (right, xr, 1e-300, -xr)], step)
    _check_monotone(phi, dphi)
    return FrontProfile(xi, phi, dphi, float(c), left_rate=e.lambda1, right_rate=e.mu2)


def _check_monotone(phi, dphi):
    if np.any(dphi <= 0) or np.any(np.diff(phi) <= 0):
        raise SolverFailure("computed profile is not strictly increasing")


def solve_front_monostable(f: ReactionTerm, c: float, tol: float = 1e-9,
                           step: float = TABLE_STEP) -> FrontProfile:
    """Monotone front with the requested speed c >= c_min, by backward shooting
    from the saddle at 1."""
    if f.assumption_class is not AssumptionClass.MONOSTABLE:
        raise DomainError("solve_front_monostable needs a monostable reaction term")
    cmin = minimal_speed(f)
    if c < cmin - tol:
        raise NoFrontError(f"no monotone front for c={c!r} below c_min={cmin!r}")
    c = max(float(c), cmin)
    e = eigenvalues(f, c)

    def low(_, y):
        return y[0] - SHOOT_EPS
    low.terminal = True

    def half(_, y):
        return y[0] - 0.5

    sol = integrate.solve_ivp(_rhs(f, c), (0.0, -2000.0), [1 - SHOOT_EPS, -e.mu2 * SHOOT_EPS],
                              method="DOP853", rtol=ODE_RTOL, atol=ODE_ATOL,
                              dense_output=True, events=(low, half))
    if not sol.t_events[0].size or not sol.t_events[1].size:
        raise SolverFailure(f"backward shooting did not reach phi~0 for c={c!r}")
    if np.any(sol.y[1] <= 0) or np.any(sol.y[0] < 0):
        raise SolverFailure(f"trajectory for c={c!r} is not monotone")
    x_half, x_low = float(sol.t_events[1][0]), float(sol.t_events[0][0])
    xi, phi, dphi = _tabulate([(sol, x_half, x_low - x_half, -x_half)], step)
    _check_monotone(phi, dphi)
    return FrontProfile(xi, phi, dphi, c, left_rate=e.lambda2, right_rate=e.mu2)


def _lattice_rate(fp: float, c: float, h: float, positive: bool) -> float:
    """Root of (2cosh(r h) - 2)/h^2 - c r + fp = 0 on the requested side."""
    g = lambda r: (2 * np.cosh(r * h) - 2) / h**2 - c * r + fp
    if positive:
        if fp >= 0:
            # monostable: the smaller of the two positive roots
            rmin = optimize.minimize_scalar(g, bounds=(1e-9, 50.0), method="bounded").x
            if g(rmin) > 0:
                raise NoFrontError(f"speed {c!r} is below the lattice minimal speed")
            return optimize.brentq(g, 1e-12, rmin, xtol=1e-15)
        hi = 1.0
        while g(hi) < 0:
            hi *= 2
        return optimize.brentq(g, 0.0, hi, xtol=1e-15)
    lo = -1.0
    while g(lo) < 0:
        lo *= 2
    return optimize.brentq(g, lo, 0.0, xtol=1e-15)


_D1 = np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60])


def lattice_front(f: ReactionTerm, base: FrontProfile, dx: float, refine: int = 4,
                  floor: float = 1e-15, newton_tol: float = 1e-12) -> FrontProfile:
    """Traveling wave of phi_t = (phi(x+dx) - 2 phi(x) + phi(x-dx))/dx^2 + f(phi).

    The profile is resolved on a grid of spacing dx/refine so the shifts by
    +-dx are exact.  Both variants impose phi(0)=1/2.  Bistable: the speed is
    solved for together with the profile.  Monostable: the speed stays fixed
    and the left end follows the slow tail mode with a free amplitude.
    """
    if base.direction is not Direction.INCREASING:
        raise ValueError("lattice_front expects an increasing profile")
    refine = int(refine)
    hf = dx / refine
    bistable = f.is_bistable
    fp0, fp1 = f.f_prime(0.0), f.f_prime(1.0)
    c = base.c
    right_rate = _lattice_rate(fp1, c, dx, positive=False)
    left_rate = _lattice_rate(fp0, c, dx, positive=True)
    # monostable fronts decay slowly on the left; truncate at a modest level and
    # carry the slow tail mode through the ghost nodes instead
    left_floor = floor if bistable else 1e-10
    xl = np.log(left_floor) / left_rate
    xr = np.log(floor) / right_rate
    k = np.arange(int(np.floor(xl / hf)), int(np.ceil(xr / hf)) + 1)
    xi = k * hf
    n = xi.size
    pad = max(refine, 3)
    # ghost values relative to the first node, so the amplitude unknown is O(1e-10)
    # but its Jacobian column is O(1/dx^2)
    ghost_shape = np.exp(-left_rate * hf * np.arange(pad, 0, -1))
    ghost_r = np.ones(pad)
    i0 = int(np.argmin(np.abs(xi)))

    lap = sp.diags([np.ones(n - refine), -2 * np.ones(n), np.ones(n - refine)],
                   [-refine, 0, refine]) / dx**2
    d1 = sp.diags([(_D1[j] / hf) * np.ones(n - abs(j - 3)) for j in range(7)],
                  [j - 3 for j in range(7)])

    def parts(p, amp):
        e = np.concatenate([amp * ghost_shape, p, ghost_r])
        shifted = (e[pad + refine:pad + refine + n] - 2 * p + e[pad - refine:pad - refine + n]) / dx**2
        deriv = sum(_D1[j] / hf * e[pad - 3 + j:pad - 3 + j + n] for j in range(7))
        return shifted, deriv

    p = base(xi)
    # bistable: ghosts are zero and the extra unknown is the speed;
    # monostable: the speed is fixed and the extra unknown is the tail amplitude
    amp = 0.0 if bistable else float(p[0])
    row = sp.csr_matrix(([1.0], ([0], [i0])), shape=(1, n))
    if not bistable:
        zeros = np.zeros(n)
        s1, d1a = parts(zeros, 1.0)
        amp_col = s1 - c * d1a
    for _ in range(30):
        shifted, deriv = parts(p, amp)
        r = shifted - c * deriv + f.f(p)
        jac = (lap - c * d1 + sp.diags(f.f_prime(p))).tocsc()
        col = -deriv if bistable else amp_col
        big = sp.bmat([[jac, sp.csc_matrix(col.reshape(-1, 1))], [row, None]]).tocsc()
        step = spla.spsolve(big, -np.append(r, p[i0] - 0.5))
        p = p + step[:n]
        if bistable:
            c = c + step[n]
        else:
            amp = amp + step[n]
        size = np.max(np.abs(step[:n]))
        if size < newton_tol:
            break
    else:
        raise SolverFailure(f"lattice front Newton iteration did not converge (last step {size:g})")
    if bistable:
        right_rate = _lattice_rate(fp1, c, dx, positive=False)
        left_rate = _lattice_rate(fp0, c, dx, positive=True)
    _, dphi = parts(p, amp)
    body = (p > 1e-12) & (p < 1 - 1e-12)
    if np.any(np.diff(p)[body[:-1]] <= 0):
        raise SolverFailure("lattice front is not monotone")
    return FrontProfile(xi, p, dphi, float(c), left_rate=float(left_rate),
                        right_rate=float(right_rate), lattice_dx=float(dx))


TAIL_RESOLVED = 1e-13


def fit_tail_constants(p: FrontProfile, e: EdgeEigenvalues,
                       resolve: float = 1e-3) -> TailBounds:
    """Envelope constants with M4~ e^{l1 xi} <= phi <= M4 e^{l1 xi} (xi<=0) and
    M3~ e^{m2 xi} <= 1-phi <= M3 e^{m2 xi} (xi>=0), scanned over the table."""
    if p.direction is not Direction.INCREASING:
        p = reflect(p)
    xi, phi = p.xi_grid, p.phi
    if phi[0] >= resolve or 1 - phi[-1] >= resolve:
        raise FitFailure("profile table does not resolve both tails")
    # only tail values resolved above roundoff enter the ratios
    left = (xi <= 0) & (phi > TAIL_RESOLVED)
    right = (xi >= 0) & (1 - phi > TAIL_RESOLVED)
    r4 = phi[left] * np.exp(-e.lambda1 * xi[left])
    r3 = (1 - phi[right]) * np.exp(-e.mu2 * xi[right])
    bounds = []
    for r in (r3, r4):
        if r.size == 0 or np.any(~np.isfinite(r)) or np.any(r <= 0):
            raise FitFailure("non-positive or unbounded tail ratio")
        if r.max() / r.min() > 1e8:
            raise FitFailure("tail ratio does not settle; table too short or wrong rate")
        bounds.append((float(r.max()), float(r.min())))
    (m3, m3t), (m4, m4t) = bounds
    return TailBounds(M3=m3, M3_tilde=m3t, M4=m4, M4_tilde=m4t)


def reflect(p: FrontProfile) -> FrontProfile:
    """psi(xi) = phi(-xi): the mirrored front with speed -c."""
    flipped = (Direction.DECREASING if p.direction is Direction.INCREASING
               else Direction.INCREASING)
    return replace(
        p,
        xi_grid=-p.xi_grid[::-1],
        phi=p.phi[::-1].copy(),
        dphi=-p.dphi[::-1],
        c=-p.c,
        direction=flipped,
        left_limit=p.right_limit,
        right_limit=p.left_limit,
        left_rate=-p.right_rate,
        right_rate=-p.left_rate,
    )


def write_profile(path, p: FrontProfile, extra: Optional[dict] = None):
    """CSV table xi, phi, dphi; speed, normalization, direction and tails in the header."""
    header = {"c": p.c, "normalization": p.normalization, "direction": p.direction.value,
              "left_limit": p.left_limit, "right_limit": p.right_limit,
              "left_rate": p.left_rate, "right_rate": p.right_rate,
              "lattice_dx": "none" if p.lattice_dx is None else p.lattice_dx}
    header.update(extra or {})
    write_csv(path, {"xi": p.xi_grid, "phi": p.phi, "dphi": p.dphi}, header)


def read_profile(path) -> FrontProfile:
    """Inverse of ``write_profile``."""
    h, cols = read_csv(path)
    ldx = h.get("lattice_dx", "none")
    return FrontProfile(cols["xi"], cols["phi"], cols["dphi"], float(h["c"]),
                        direction=Direction(h.get("direction", Direction.INCREASING.value)),
                        left_limit=float(h.get("left_limit", 0.0)),
                        right_limit=float(h.get("right_limit", 1.0)),
                        left_rate=float(h.get("left_rate", 1.0)),
                        right_rate=float(h.get("right_rate", -1.0)),
                        lattice_dx=None if ldx == "none" else float(ldx),
                        normalization=h.get("normalization", "phi(0)=1/2"))
