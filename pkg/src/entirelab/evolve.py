"""Time stepping for u_t = u_xx + f(u) on a truncated uniform grid.

The scheme is Strang splitting: half a step of the reaction ODE (classical
RK4), a Crank-Nicolson diffusion step, and another reaction half step.  For
dt/dx^2 <= 1 the Crank-Nicolson step is monotone, so ordered initial data stay
ordered; this is what the comparison checks rely on.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import lapack

from .reaction import ReactionTerm

__all__ = [
    "EvolveError",
    "InstabilityError",
    "NumericalFailure",
    "InsufficientData",
    "PreconditionError",
    "GridField",
    "Boundary",
    "Trajectory",
    "ComparisonReport",
    "SchauderReport",
    "evolve",
    "extend",
    "comparison_check",
    "derivative_bounds",
    "schauder_constants",
    "default_dt",
]

BLOWUP = 10.0


class EvolveError(RuntimeError):
    pass


class InstabilityError(EvolveError):
    pass


class NumericalFailure(EvolveError):
    pass


class InsufficientData(EvolveError, ValueError):
    pass


class PreconditionError(EvolveError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridField:
    """Values u on the uniform grid x0 + dx*k at time t."""

    x0: float
    dx: float
    u: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.ndim != 1 or u.size < 3:
            raise ValueError("a grid field needs a 1D array with at least 3 values")
        if self.dx <= 0:
            raise ValueError("dx must be positive")
        if not np.all(np.isfinite(u)):
            raise NumericalFailure("grid field has non-finite values")
        object.__setattr__(self, "u", u)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.u.size)

    @property
    def n(self) -> int:
        return self.u.size

    @classmethod
    def sample(cls, fn, halfwidth: float, dx: float, t: float = 0.0) -> "GridField":
        """Grid symmetric about 0 (odd number of points), u = fn(x)."""
        m = int(round(halfwidth / dx))
        x = dx * np.arange(-m, m + 1)
        return cls(float(x[0]), float(dx), np.broadcast_to(fn(x), x.shape).astype(float), t)

    def with_values(self, u, t=None) -> "GridField":
        return GridField(self.x0, self.dx, u, self.t if t is None else t)


@dataclass(frozen=True)
class Boundary:
    """Neumann (reflecting) or Dirichlet with time-dependent end values."""

    kind: str = "neumann"
    left: Optional[Callable[[float], float]] = None
    right: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        if self.kind not in ("neumann", "dirichlet"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "dirichlet" and (self.left is None or self.right is None):
            raise ValueError("dirichlet boundary needs left and right value functions")

    @classmethod
    def neumann(cls) -> "Boundary":
        return cls("neumann")

    @classmethod
    def dirichlet(cls, left, right) -> "Boundary":
        lf = left if callable(left) else (lambda t, v=float(left): v)
        rf = right if callable(right) else (lambda t, v=float(right): v)
        return cls("dirichlet", lf, rf)

    @classmethod
    def from_envelope(cls, env, x_left: float, x_right: float) -> "Boundary":
        """Dirichlet data read off an (x, t) evaluator at the two ends."""
        def end(xb):
            def fn(t):
                t = np.asarray(t, dtype=float)
                vals = env(np.full(t.shape, xb), t)
                return float(vals) if t.ndim == 0 else vals
            return fn
        return cls("dirichlet", end(float(x_left)), end(float(x_right)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots u(x, t_k) and their time derivatives on a fixed grid."""

    x0: float
    dx: float
    times: np.ndarray
    u: np.ndarray
    ut: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.u.shape[1])

    def __len__(self):
        return self.times.size

    def field(self, k: int) -> GridField:
        return GridField(self.x0, self.dx, self.u[k], float(self.times[k]))

    @property
    def final(self) -> GridField:
        return self.field(-1)

    def index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def at(self, t: float) -> np.ndarray:
        """Cubic Hermite interpolation in time between the bracketing snapshots."""
        ts = self.times
        if t < ts[0] - 1e-9 or t > ts[-1] + 1e-9:
            raise ValueError(f"t={t} outside [{ts[0]}, {ts[-1]}]")
        k = int(np.clip(np.searchsorted(ts, t) - 1, 0, ts.size - 2))
        h = ts[k + 1] - ts[k]
        s = (t - ts[k]) / h
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return (h00 * self.u[k] + h10 * h * self.ut[k]
                + h01 * self.u[k + 1] + h11 * h * self.ut[k + 1])

    def window(self, t_lo: float = -np.inf, t_hi: float = np.inf) -> "Trajectory":
        sel = (self.times >= t_lo - 1e-12) & (self.times <= t_hi + 1e-12)
        return Trajectory(self.x0, self.dx, self.times[sel], self.u[sel], self.ut[sel],
                          dict(self.meta))

    def records(self):
        """(t, x0, dx, u) tuples for the snapshot writer."""
        for k in range(self.times.size):
            yield float(self.times[k]), self.x0, self.dx, self.u[k]


def default_dt(dx: float, snapshot_dt: Optional[float] = None) -> float:
    dt = min(0.25 * dx * dx, 0.01)
    if snapshot_dt:
        dt = snapshot_dt / np.ceil(snapshot_dt / dt - 1e-9)
    return dt


def _horner(coeffs):
    c = [float(v) for v in coeffs][::-1]

    def fn(u):
        acc = c[0] * u + c[1]
        for a in c[2:]:
            acc = acc * u + a
        return acc
    return fn


class _Stepper:
    def __init__(self, n, dx, dt, f: ReactionTerm, boundary: Boundary):
        self.n, self.dx, self.dt, self.bc = n, dx, dt, boundary
        self.fn = _horner(f.coefficients)
        r = dt / dx**2
        self.r = r
        dl = np.full(n - 1, -0.5 * r)
        du = np.full(n - 1, -0.5 * r)
        d = np.full(n, 1.0 + r)
        if boundary.kind == "neumann":
            du[0] = -r
            dl[-1] = -r
        else:
            d[0] = d[-1] = 1.0
            du[0] = dl[-1] = 0.0
        self.lu = lapack.dgttrf(dl, d, du)[:5]

    def lap(self, u):
        out = np.empty_like(u)
        out[1:-1] = u[2:] - 2 * u[1:-1] + u[:-2]
        if self.bc.kind == "neumann":
            out[0] = 2 * (u[1] - u[0])
            out[-1] = 2 * (u[-2] - u[-1])
        else:
            out[0] = out[-1] = 0.0
        return out / self.dx**2

    def react(self, u, h):
        fn = self.fn
        k1 = fn(u)
        k2 = fn(u + 0.5 * h * k1)
        k3 = fn(u + 0.5 * h * k2)
        k4 = fn(u + h * k3)
        return u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    def step(self, u, ends=None):
        """One step; ``ends`` holds the Dirichlet values at the new time."""
        dt = self.dt
        u = self.react(u, 0.5 * dt)
        rhs = u + 0.5 * dt * self.lap(u)
        if ends is not None:
            rhs[0], rhs[-1] = ends
        u, info = lapack.dgttrs(*self.lu, rhs)
        u = self.react(u, 0.5 * dt)
        if ends is not None:
            u[0], u[-1] = ends
        return u

    def rate(self, u, t):
        """Semi-discrete right-hand side, used as u_t at snapshots."""
        ut = self.lap(u) + self.fn(u)
        if self.bc.kind == "dirichlet":
            # backward differences: the boundary data may end at t
            e = 1e-5
            for i, g in ((0, self.bc.left), (-1, self.bc.right)):
                ut[i] = (3 * g(t) - 4 * g(t - e) + g(t - 2 * e)) / (2 * e)
        return ut


def _sample(fn, tk):
    """Evaluate a boundary function on all step times, vectorized if it allows."""
    try:
        vals = np.asarray(fn(tk), dtype=float)
        if vals.shape == tk.shape:
            return vals
    except (TypeError, ValueError):
        pass
    return np.array([fn(t) for t in tk], dtype=float)


def evolve(u0: GridField, f: ReactionTerm, T: float, dt: Optional[float] = None,
           snapshot_dt: float = 0.1, boundary: Optional[Boundary] = None,
           stop: Optional[Callable[[GridField], bool]] = None) -> Trajectory:
    """Evolve from u0 (at time u0.t) up to absolute time T.

    Snapshots are stored every ``snapshot_dt``; ``stop`` is checked on each
    snapshot and ends the run early when it returns True.
    """
    boundary = boundary or Boundary.neumann()
    if T < u0.t:
        raise ValueError(f"end time {T} precedes the initial time {u0.t}")
    if snapshot_dt <= 0:
        raise ValueError("snapshot_dt must be positive")
    dt = default_dt(u0.dx, snapshot_dt) if dt is None else float(dt)
    if dt <= 0:
        raise ValueError("dt must be positive")
    per = max(int(round(snapshot_dt / dt)), 1)
    stepper = _Stepper(u0.n, u0.dx, dt, f, boundary)
    u = u0.u.copy()
    if boundary.kind == "dirichlet":
        u[0], u[-1] = boundary.left(u0.t), boundary.right(u0.t)
    nsteps = int(round((T - u0.t) / dt))
    ends = None
    if boundary.kind == "dirichlet":
        tk = u0.t + dt * np.arange(nsteps + 1)
        ends = np.column_stack([_sample(boundary.left, tk), _sample(boundary.right, tk)])
    times, us, uts = [u0.t], [u.copy()], [stepper.rate(u, u0.t)]
    for k in range(1, nsteps + 1):
        u = stepper.step(u, None if ends is None else ends[k])
        if k % per == 0 or k == nsteps:
            t = u0.t + k * dt
            if not np.all(np.isfinite(u)):
                raise NumericalFailure(f"non-finite values at t={t:g}")
            if np.max(np.abs(u)) > BLOWUP:
                raise InstabilityError(f"|u| exceeded {BLOWUP} at t={t:g}")
            times.append(t)
            us.append(u.copy())
            uts.append(stepper.rate(u, t))
            if stop is not None and stop(GridField(u0.x0, u0.dx, u, t)):
                break
    meta = {"dt": dt, "boundary": boundary.kind}
    return Trajectory(u0.x0, u0.dx, np.array(times), np.array(us), np.array(uts), meta)


def extend(traj: Trajectory, f: ReactionTerm, T: float, **kw) -> Trajectory:
    """Continue a trajectory from its final snapshot up to time T.

    Keyword arguments go to ``evolve`` (boundary, stop, dt, ...); the snapshot
    spacing defaults to the one of ``traj``.
    """
    if traj.times.size > 1:
        kw.setdefault("snapshot_dt", float(traj.times[1] - traj.times[0]))
    more = evolve(traj.final, f, T, **kw)
    meta = dict(traj.meta)
    meta["stages"] = meta.get("stages", [traj.meta.get("boundary")]) + [more.meta["boundary"]]
    return Trajectory(traj.x0, traj.dx, np.concatenate([traj.times, more.times[1:]]),
                      np.concatenate([traj.u, more.u[1:]]),
                      np.concatenate([traj.ut, more.ut[1:]]), meta)


@dataclass(frozen=True)
class ComparisonReport:
    max_violation: float
    t_worst: float
    x_worst: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol


def comparison_check(lower0: GridField, upper0: GridField, f: ReactionTerm, T: float,
                     tol: float = 1e-6, **kw) -> ComparisonReport:
    """Evolve both fields and report the worst max(lower - upper, 0) over time."""
    if lower0.n != upper0.n or lower0.dx != upper0.dx or lower0.x0 != upper0.x0:
        raise PreconditionError("fields live on different grids")
    if np.any(lower0.u > upper0.u + 1e-14):
        k = int(np.argmax(lower0.u - upper0.u))
        raise PreconditionError(
            f"initial ordering violated at x={lower0.x[k]:g} by {lower0.u[k] - upper0.u[k]:g}")
    lo = evolve(lower0, f, T, **kw)
    hi = evolve(upper0, f, T, **kw)
    gap = np.maximum(lo.u - hi.u, 0.0)
    k, j = np.unravel_index(int(np.argmax(gap)), gap.shape)
    return ComparisonReport(float(gap[k, j]), float(lo.times[k]), float(lo.x[j]), tol)


@dataclass(frozen=True)
class SchauderReport:
    L0: float
    L1: float
    L2: float
    L3: float
    L4: float
    observed_sup_ut: float
    observed_sup_ux: float
    observed_sup_uxx: float
    r: float

    @property
    def passed(self) -> bool:
        return (self.observed_sup_ux <= self.L2 and self.observed_sup_uxx <= self.L3
                and self.observed_sup_ut <= self.L4)


def schauder_constants(L0: float, L1: float, r: float):
    """(L2, L3, L4) from the interior estimate with window parameter r."""
    sp = np.sqrt(np.pi)
    L2 = L0 / sp + 2 * L1 * np.sqrt(r) / sp
    L3 = L0 + 2 * L1 * L2 * np.sqrt(r) / sp
    L4 = L3 + L1
    return L2, L3, L4


def _time_derivative(times, u):
    """Second-order differences in t: centered inside, one-sided at the ends."""
    if times.size < 3:
        raise InsufficientData("need at least three snapshots for d/dt")
    return np.gradient(u, times, axis=0, edge_order=2)


def derivative_bounds(traj: Trajectory, f: ReactionTerm, r: float = 1.0,
                      t_from: float = 1.0, margin: int = 2) -> SchauderReport:
    """Compare measured sup-norms of u_x, u_xx, u_t for t >= t_from with L2, L3, L4.

    ``t_from`` is measured from the start of the trajectory; ``margin`` grid
    points are dropped at each end to stay clear of the boundary closure.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    t0 = traj.times[0]
    if traj.times[-1] - t0 < t_from:
        raise InsufficientData(
            f"trajectory spans {traj.times[-1] - t0:g} time units, need at least {t_from:g}")
    L0 = float(np.max(np.abs(traj.u)))
    s = np.linspace(-L0, L0, 2001)
    L1 = float(max(np.max(np.abs(f.f(s))), np.max(np.abs(f.f_prime(s))),
                   np.max(np.abs(f.f_second(s)))))
    L2, L3, L4 = schauder_constants(L0, L1, r)
    sel = traj.times >= t0 + t_from - 1e-12
    u = traj.u[:, margin:traj.u.shape[1] - margin] if margin else traj.u
    ut = _time_derivative(traj.times, u)[sel]
    w = u[sel]
    ux = (w[:, 2:] - w[:, :-2]) / (2 * traj.dx)
    uxx = (w[:, 2:] - 2 * w[:, 1:-1] + w[:, :-2]) / traj.dx**2
    return SchauderReport(L0, L1, L2, L3, L4, float(np.max(np.abs(ut))),
                          float(np.max(np.abs(ux))), float(np.max(np.abs(uxx))), float(r))
