"""Entire solutions approximated by backward Cauchy problems, and checks of
their defining properties.

Each member u_n starts at t = -n from an envelope (the sub-solution for the
merging and monostable families, the min of the two fronts for annihilating
fronts) and is evolved forward.  The members agree more and more on a fixed
window as n grows; the largest member restricted to t >= -n_min is the
deliverable.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .evolve import Boundary, GridField, PreconditionError, Trajectory, evolve, extend
from .front import FrontProfile
from .io import read_manifest, read_snapshots, write_manifest, write_snapshots
from .reaction import CaseTag, ReactionTerm
from .supersub import Envelope, band_shift

__all__ = [
    "ConstructionFailure",
    "PropertyFailure",
    "Family",
    "MCondition",
    "EntireSolutionApprox",
    "MonotonicityReport",
    "AsymptoticsReport",
    "MConditionReport",
    "BandReport",
    "construct_entire",
    "check_time_monotonicity",
    "check_asymptotics",
    "check_M_condition",
    "check_symmetry",
    "check_band",
    "calibrate_band",
    "save_entire",
    "load_members",
]

T_CAP = 60.0
LIMIT_TOL = 1e-3
EDGE = 2          # grid nodes dropped at each end in pointwise checks


class ConstructionFailure(RuntimeError):
    pass


class PropertyFailure(RuntimeError):
    pass


class Family(enum.Enum):
    MERGING = "merging"            # u1: 1 invades 0, fronts merge
    ANNIHILATING = "annihilating"  # u2: 0 invades 1, fronts annihilate
    MONOSTABLE = "monostable"      # u3 and u_ij

    @classmethod
    def of(cls, f: ReactionTerm) -> "Family":
        if f.case_tag is CaseTag.MONOSTABLE:
            return cls.MONOSTABLE
        if f.case_tag in (CaseTag.C1, CaseTag.C2):
            return cls.MERGING
        if f.case_tag in (CaseTag.C3, CaseTag.C4):
            return cls.ANNIHILATING
        raise PreconditionError(f"no entire-solution family for case {f.case_tag.value}")

    @property
    def sign(self) -> int:
        return -1 if self is Family.ANNIHILATING else 1

    @property
    def limit(self) -> float:
        return 0.0 if self is Family.ANNIHILATING else 1.0


class MCondition(enum.Enum):
    MPLUS = "MPlus"
    MMINUS = "MMinus"


@dataclass
class EntireSolutionApprox:
    f: ReactionTerm
    family: Family
    n_list: tuple
    members: dict                       # n -> Trajectory
    cauchy_gaps: list                   # gap(n_k, n_{k+1}) on the compact window
    confinement: dict                   # n -> (worst sub excess, worst super excess)
    sub: Envelope
    sup: Envelope
    window: tuple                       # (x half-width, t_lo, t_hi) of the gap window
    T_end: float
    dt_min: Optional[float] = None
    shifts: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def largest(self) -> Trajectory:
        return self.members[max(self.n_list)]

    @property
    def entire(self) -> Trajectory:
        """Largest member restricted to t >= -n_min."""
        return self.largest.window(-min(self.n_list))

    @property
    def confinement_worst(self) -> float:
        return max(max(v) for v in self.confinement.values())

    @property
    def gaps_decreasing(self) -> bool:
        g = self.cauchy_gaps
        return all(b < a for a, b in zip(g, g[1:]))


def _limit_stop(limit: float, tol: float = LIMIT_TOL):
    return lambda g: float(np.max(np.abs(g.u - limit))) < tol


def _confinement(traj: Trajectory, env: Envelope, sign: int):
    """Worst sign * (env - u) over snapshots inside the envelope's time range, t <= 0."""
    lo, hi = env.t_range
    hi = min(hi, 0.0)
    worst, at = -np.inf, (np.nan, np.nan)
    x = traj.x
    for k, t in enumerate(traj.times):
        if t < lo - 1e-12 or t > hi + 1e-12:
            continue
        d = sign * (env(x, float(t)) - traj.u[k])
        j = int(np.argmax(d))
        if d[j] > worst:
            worst, at = float(d[j]), (float(x[j]), float(t))
    return worst, at


def _gap(a: Trajectory, b: Trajectory, half: float, t_lo: float, t_hi: float) -> float:
    sel = np.abs(a.x) <= half + 1e-12
    times = a.times[(a.times >= t_lo - 1e-9) & (a.times <= t_hi + 1e-9)]
    return max(float(np.max(np.abs(a.at(float(t))[sel] - b.at(float(t))[sel]))) for t in times)


def construct_entire(f: ReactionTerm, sub: Envelope, sup: Envelope, n_list: Sequence[float],
                     halfwidth: float = 40.0, dx: float = 0.05, T_end: Optional[float] = None,
                     snapshot_dt: float = 0.1, start: Optional[str] = None,
                     boundary: Optional[str] = None, conf_tol: float = 1e-6,
                     strict: bool = True) -> EntireSolutionApprox:
    """Backward Cauchy problems u_n(x, -n) = envelope(x, -n), evolved to T_end.

    ``start`` picks the envelope used as initial data ("sub" or "super"); by
    default the sub-solution, except for annihilating fronts where the
    decreasing family starts from the super-solution.  With T_end None the
    largest member runs until it is within 1e-3 of its limit state (or t=60)
    and the others are run to the same time.
    """
    family = Family.of(f)
    n_list = tuple(sorted(float(n) for n in n_list))
    if not n_list or n_list[0] <= 0:
        raise PreconditionError("n_list must hold positive start times")
    if len(set(n_list)) != len(n_list):
        raise PreconditionError("n_list entries must be distinct")
    if start is None:
        start = "super" if family is Family.ANNIHILATING else "sub"
    init = {"sub": sub, "super": sup}[start]
    members = {}
    confinement = {}
    T = T_end
    for n in sorted(n_list, reverse=True):
        u0 = GridField.sample(lambda x: init(x, -n), halfwidth, dx, -n)
        xl, xr = float(u0.x[0]), float(u0.x[-1])
        end = T if T is not None else T_CAP
        stop = _limit_stop(family.limit) if T is None else None
        lo, hi = init.t_range
        # Dirichlet data from the initial envelope while it is defined, then Neumann
        switch = min(hi, end) if boundary is None and lo <= -n else -n
        if boundary == "dirichlet":
            switch = end
        elif boundary == "neumann":
            switch = -n
        if switch > -n:
            bc = Boundary.from_envelope(init, xl, xr)
            traj = evolve(u0, f, switch, snapshot_dt=snapshot_dt, boundary=bc, stop=stop)
            if switch < end and traj.times[-1] >= switch - 1e-9:
                traj = extend(traj, f, end, boundary=Boundary.neumann(), stop=stop)
        else:
            traj = evolve(u0, f, end, snapshot_dt=snapshot_dt, boundary=Boundary.neumann(),
                          stop=stop)
        if T is None:
            T = float(traj.times[-1])
        traj.meta.update(n=n, start=start)
        members[n] = traj
        low, low_at = _confinement(traj, sub, +1)
        high, high_at = _confinement(traj, sup, -1)
        confinement[n] = (low, high)
        if strict and max(low, high) > conf_tol:
            side, where = ("sub", low_at) if low >= high else ("super", high_at)
            raise ConstructionFailure(
                f"member n={n:g} leaves the {side} envelope by {max(low, high):.3e} "
                f"at x={where[0]:g}, t={where[1]:g}")
    half = halfwidth / 2
    t_lo = -n_list[0]
    gaps = [_gap(members[a], members[b], half, t_lo, T) for a, b in zip(n_list, n_list[1:])]
    return EntireSolutionApprox(f, family, n_list, members, gaps, confinement, sub, sup,
                                (half, t_lo, T), T,
                                meta={"halfwidth": halfwidth, "dx": dx,
                                      "snapshot_dt": snapshot_dt, "start": start})


# -- time monotonicity ---------------------------------------------------------

@dataclass(frozen=True)
class MonotonicityReport:
    expected_sign: int
    worst: float          # most adverse signed value of u_t (expected_sign * u_t)
    worst_x: float
    worst_t: float
    tol: float
    mid_bound: Optional[float]   # b_bar (min u_t) or b_tilde (max u_t) on theta <= u <= 1-theta

    @property
    def passed(self) -> bool:
        return self.worst > -self.tol


def check_time_monotonicity(a: EntireSolutionApprox, expected_sign: Optional[int] = None,
                            theta: Optional[float] = None, tol: float = 1e-6,
                            raise_on_fail: bool = False) -> MonotonicityReport:
    """Sign of the semi-discrete u_t at every stored snapshot of the deliverable."""
    traj = a.entire
    if traj.times.size < 2:
        raise PreconditionError("need at least two snapshots")
    ut = traj.ut[:, EDGE:-EDGE]
    if float(np.max(np.abs(ut))) < 1e-12:
        raise PreconditionError("stationary field: not an entire-solution family")
    s = a.family.sign if expected_sign is None else int(np.sign(expected_sign))
    signed = s * ut
    k, j = np.unravel_index(int(np.argmin(signed)), signed.shape)
    if theta is None:
        from .reaction import compute_constants
        theta = compute_constants(a.f).theta
    u = traj.u[:, EDGE:-EDGE]
    mid = (u >= theta) & (u <= 1 - theta)
    bound = None
    if mid.any():
        bound = float(np.min(ut[mid])) if s > 0 else float(np.max(ut[mid]))
        a.dt_min = bound
    rep = MonotonicityReport(s, float(signed[k, j]), float(traj.x[EDGE + j]),
                             float(traj.times[k]), tol, bound)
    if raise_on_fail and not rep.passed:
        raise PropertyFailure(f"u_t has the wrong sign ({rep.worst:.3e}) at "
                              f"x={rep.worst_x:g}, t={rep.worst_t:g}")
    return rep


# -- asymptotics ---------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticsReport:
    y_right: float
    y_left: float
    times: np.ndarray
    deviations: np.ndarray       # half-line sup deviations summed, per sampled time
    final_distance: float        # sup |u - limit| at the final time
    limit: float
    min_bound_violation: Optional[float] = None   # annihilating: max(u - min of fronts)

    @property
    def decays(self) -> bool:
        d = self.deviations
        return bool(d[0] < d[-1]) and bool(np.all(np.diff(d) >= -1e-9))

    @property
    def passed(self) -> bool:
        ok = self.decays and self.final_distance < LIMIT_TOL
        if self.min_bound_violation is not None:
            ok = ok and self.min_bound_violation <= 1e-6
        return ok


def _halves(a: EntireSolutionApprox, profiles):
    """Callables (x, t, y) for the right (x >= 0) and left (x <= 0) asymptotic fronts."""
    p_r, p_l = profiles
    if a.family is Family.ANNIHILATING:
        # phi(-x+ct) governs x >= 0 and phi(x+ct) governs x <= 0 when c < 0
        return (lambda x, t, y: p_r(-x + p_r.c * t + y),
                lambda x, t, y: p_l(x + p_l.c * t + y))
    return (lambda x, t, y: p_r(x + p_r.c * t + y),
            lambda x, t, y: p_l(-x + p_l.c * t + y))


def _fit_shift(g, x, u, t, guess, span=5.0):
    res = optimize.minimize_scalar(lambda y: float(np.max(np.abs(u - g(x, t, y)))),
                                   bounds=(guess - span, guess + span), method="bounded",
                                   options={"xatol": 1e-5})
    return float(res.x)


def check_asymptotics(a: EntireSolutionApprox, p, guess: float = 0.0,
                      n_times: int = 6, raise_on_fail: bool = False) -> AsymptoticsReport:
    """Fit the half-line shifts at the earliest time and follow the deviation.

    ``p`` is one front profile, or a (right, left) pair for monostable runs.
    Annihilating fronts use zero shifts (the normalisation of the fronts).
    """
    profiles = tuple(p) if isinstance(p, (tuple, list)) else (p, p)
    traj = a.largest
    g_r, g_l = _halves(a, profiles)
    x = traj.x[EDGE:-EDGE]
    right, left = x >= 0, x <= 0
    t0 = float(traj.times[0])
    u0 = traj.u[0, EDGE:-EDGE]
    if a.family is Family.ANNIHILATING:
        y_r = y_l = 0.0
    else:
        y_r = _fit_shift(g_r, x[right], u0[right], t0, guess)
        y_l = _fit_shift(g_l, x[left], u0[left], t0, guess)
    times = np.linspace(t0, -min(a.n_list), n_times)
    devs = []
    for t in times:
        u = traj.at(float(t))[EDGE:-EDGE]
        devs.append(float(np.max(np.abs(u[right] - g_r(x[right], t, y_r))))
                    + float(np.max(np.abs(u[left] - g_l(x[left], t, y_l)))))
    final = float(np.max(np.abs(traj.u[-1] - a.family.limit)))
    mb = None
    if a.family is Family.ANNIHILATING:
        pr = profiles[0]
        xs = traj.x
        mb = max(float(np.max(u - np.minimum(pr(xs + pr.c * t), pr(-xs + pr.c * t))))
                 for t, u in zip(traj.times, traj.u))
    a.shifts.update(y_right=y_r, y_left=y_l)
    rep = AsymptoticsReport(y_r, y_l, times, np.array(devs), final, a.family.limit, mb)
    if raise_on_fail and not rep.decays:
        raise PropertyFailure("half-line deviation does not decrease toward t -> -inf")
    return rep


# -- conditions M+ / M- --------------------------------------------------------

@dataclass(frozen=True)
class MConditionReport:
    condition: MCondition
    alpha1: float
    alpha2: float
    d: Optional[float]
    T: Optional[float]
    offset: float                 # x~ (M+) or x^ (M-)
    l: Optional[Callable] = None
    m: Optional[Callable] = None
    span: float = 0.0

    @property
    def passed(self) -> bool:
        return self.d is not None


def _level(p: FrontProfile, v: float) -> float:
    return float(optimize.brentq(lambda s: float(p(s)) - v, p.xi_grid[0], p.xi_grid[-1],
                                 xtol=1e-12))


def check_M_condition(a: EntireSolutionApprox, p: FrontProfile,
                      which: Optional[MCondition] = None, offset: float = 0.0,
                      d_values: Optional[Sequence[float]] = None, min_span: float = 5.0,
                      tol: float = 1e-8, raise_on_fail: bool = False) -> MConditionReport:
    """Search (d, T) for the backward-in-time structure of the entire solution.

    M+: u >= alpha2 outside [l1, m1] and u <= alpha1 on [l1+d, m1-d], with
    l1 = ct - x~, m1 = -ct + x~ and phi(x~ + offset) = alpha2 (offset is the
    drift offset of the sub-solution, e.g. x6).
    M-: u <= alpha1 outside [l2, m2] and u >= alpha2 on [l2+d, m2-d], with
    l2 = -ct - x^, m2 = ct + x^ and phi(-x^) <= alpha1.
    T is the largest sampled time t <= 0 up to which every sample passes.
    """
    if a.family is Family.MONOSTABLE or a.f.alpha is None:
        raise PreconditionError("conditions M+/M- apply to bistable entire solutions")
    expected = MCondition.MPLUS if a.family is Family.MERGING else MCondition.MMINUS
    which = expected if which is None else MCondition(which)
    if which is not expected:
        raise PreconditionError(f"{which.value} does not match case {a.f.case_tag.value}")
    alpha = a.f.alpha
    gap = 0.1 * min(alpha, 1 - alpha)
    a1, a2 = alpha - gap, alpha + gap
    c = p.c
    if which is MCondition.MPLUS:
        xt = _level(p, a2) - offset
        l = lambda t: c * t - xt  # noqa: E731
        m = lambda t: -c * t + xt  # noqa: E731
        outer_ok = lambda u: u >= a2 - tol  # noqa: E731
        inner_ok = lambda u: u <= a1 + tol  # noqa: E731
    else:
        xt = max(-_level(p, a1), 1e-3)
        l = lambda t: -c * t - xt  # noqa: E731
        m = lambda t: c * t + xt  # noqa: E731
        outer_ok = lambda u: u <= a1 + tol  # noqa: E731
        inner_ok = lambda u: u >= a2 - tol  # noqa: E731
    traj = a.entire
    sel = traj.times <= 1e-12
    times, us = traj.times[sel], traj.u[sel]
    x = traj.x
    half = (x[-1] - x[0]) / 2
    if d_values is None:
        d_values = np.arange(0.5, half / 2, 0.5)
    found = (None, None, 0.0)
    for d in d_values:
        last = None
        for t, u in zip(times, us):
            lo, hi = l(t), m(t)
            outside = (x <= lo) | (x >= hi)
            inside = (x >= lo + d) & (x <= hi - d)
            if not (np.all(outer_ok(u[outside])) and np.all(inner_ok(u[inside]))):
                break
            last = float(t)
        if last is not None and last - float(times[0]) >= min_span:
            found = (float(d), last, last - float(times[0]))
            break
    rep = MConditionReport(which, a1, a2, found[0], found[1], xt, l, m, found[2])
    if raise_on_fail and not rep.passed:
        raise PropertyFailure(f"no (d, T) found for {which.value}")
    return rep


# -- symmetry and the annihilating band ----------------------------------------

def check_symmetry(a_or_traj) -> float:
    """max over snapshots of |u(x) - u(-x)|, for every member."""
    trajs = (list(a_or_traj.members.values()) if isinstance(a_or_traj, EntireSolutionApprox)
             else [a_or_traj])
    worst = 0.0
    for tr in trajs:
        x = tr.x
        if abs(x[0] + x[-1]) > 1e-9 * max(1.0, abs(x[0])):
            raise PreconditionError("grid is not symmetric about x = 0")
        worst = max(worst, float(np.max(np.abs(tr.u - tr.u[:, ::-1]))))
    return worst


@dataclass(frozen=True)
class BandReport:
    B: float
    t_valid: float
    times: np.ndarray
    worst: float          # max of u(t+h1) - Phi(t) and Phi(t) - u(t-h1)
    worst_x: float
    worst_t: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.times.size > 0 and self.worst <= self.tol


def check_band(a: EntireSolutionApprox, p: FrontProfile, B: float, n_times: int = 21,
               tol: float = 1e-6) -> BandReport:
    """u(x, t+h1) <= Phi(x,t) <= u(x, t-h1) at sampled t <= -4 B phi(0) within the deliverable."""
    if a.family is not Family.ANNIHILATING:
        raise PreconditionError("the band applies to annihilating fronts")
    h1 = band_shift(p, B)
    t_valid = -4.0 * B * float(p(0.0))
    traj = a.entire
    t_lo = float(traj.times[0])
    # both u(t - h1) and u(t + h1) must lie inside the deliverable's time range
    cand = np.linspace(t_lo, min(t_valid, float(traj.times[-1])), 4 * n_times)
    ok = (cand - h1(cand) >= t_lo) & (cand + h1(cand) <= float(traj.times[-1]))
    cand = cand[ok]
    if cand.size > n_times:
        cand = cand[np.linspace(0, cand.size - 1, n_times).astype(int)]
    x = traj.x
    c = p.c
    worst, wx, wt = -np.inf, np.nan, np.nan
    for t in cand:
        h = float(h1(t))
        phi = p(x + c * t) * p(-x + c * t)
        d = np.maximum(traj.at(t + h) - phi, phi - traj.at(t - h))
        j = int(np.argmax(d))
        if d[j] > worst:
            worst, wx, wt = float(d[j]), float(x[j]), float(t)
    return BandReport(B, t_valid, cand, worst if cand.size else np.inf, wx, wt, tol)


def calibrate_band(a: EntireSolutionApprox, p: FrontProfile, B_min: float = 1e-3,
                   B_max: float = 1e3, factor: float = 1.1, **kw):
    """Smallest B (within ``factor``) for which the band holds on the deliverable.

    Larger B widens the band but also pushes the validity threshold -4 B phi(0)
    back in time; B is searched upward from B_min in steps of ``factor``.
    Returns (B, report) or (None, last report).
    """
    B, rep = B_min, None
    while B <= B_max:
        rep = check_band(a, p, B, **kw)
        if rep.times.size == 0:
            break
        if rep.passed:
            return B, rep
        B *= factor
    return None, rep


# -- persistence ---------------------------------------------------------------

def save_entire(a: EntireSolutionApprox, directory, extra: Optional[dict] = None):
    """Directory with manifest.txt and one snapshot file per member."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {}
    for n, tr in a.members.items():
        name = f"member_n{n:g}.bin"
        write_snapshots(d / name, tr.records())
        files[f"n{n:g}"] = name
    entries = {
        "reaction": a.f.spec,
        "case": a.f.case_tag.value,
        "family": a.family.value,
        "n_list": list(a.n_list),
        "T_end": a.T_end,
        "cauchy_gaps": list(a.cauchy_gaps),
        "gaps_decreasing": a.gaps_decreasing,
        "confinement_worst": a.confinement_worst,
        "window": {"half": a.window[0], "t_lo": a.window[1], "t_hi": a.window[2]},
        "grid": {k: v for k, v in a.meta.items() if k != "start"},
        "start": a.meta.get("start", ""),
        "files": files,
    }
    if a.dt_min is not None:
        entries["dt_min"] = a.dt_min
    if a.shifts:
        entries["shifts"] = dict(a.shifts)
    if extra:
        entries.update(extra)
    write_manifest(d / "manifest.txt", entries)
    return d


def load_members(directory) -> dict:
    """n -> list of (t, x0, dx, u) snapshot records, read back from ``save_entire``."""
    d = Path(directory)
    man = read_manifest(d / "manifest.txt")
    out = {}
    for key, val in man.items():
        if key.startswith("files."):
            out[float(key.split(".n", 1)[1])] = read_snapshots(d / val)
    return out
