"""Stability experiments: convergence to the constant states, stability of a
single front, diverging pairs of fronts, the explicit half-width bounds for
the pair lemma, the perturbation sandwich around an entire solution, and
exponential rate fitting.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import optimize

from .evolve import Boundary, GridField, PreconditionError, Trajectory, evolve, extend
from .front import (FrontProfile, TailBounds, eigenvalues, fit_tail_constants)
from .reaction import ReactionTerm, StabilityConstants, compute_constants
from .supersub import ParameterError, SandwichParams, build_sandwich, trajectory_evaluator

__all__ = [
    "FitError",
    "Experiment",
    "RateFit",
    "StabilityReport",
    "DivergingPairSpec",
    "L1Inputs",
    "L2Inputs",
    "rate_fit",
    "tail_window",
    "constant_convergence",
    "front_stability",
    "diverging_pair",
    "lower_bound_L1",
    "lower_bound_L2",
    "l1_inputs",
    "l2_inputs",
    "sandwich_stability",
    "level_crossings",
]

FLOOR = 1e-11          # series values below this are treated as converged
EDGE = 2


class FitError(ValueError):
    pass


class Experiment(enum.Enum):
    CONSTANT = "constant_convergence"
    FRONT = "front_stability"
    DIVERGING = "diverging_pair"
    SANDWICH = "sandwich_stability"


# -- rate fitting --------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    rate: float          # slope of ln(value) against t (negative for decay)
    prefactor: float     # exp(intercept)
    residual: float      # RMS of the log residuals
    n: int

    @property
    def decaying(self) -> bool:
        return self.rate < -1e-6


def tail_window(t) -> tuple:
    """Last half of the time span, without its final 5%."""
    t = np.asarray(t, dtype=float)
    t0, t1 = float(t[0]), float(t[-1])
    span = t1 - t0
    return t0 + 0.5 * span, t1 - 0.05 * span


def rate_fit(t, values, window: Optional[tuple] = None) -> RateFit:
    """Least squares of ln(value) = ln(M) + rate * t over ``window``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape:
        raise FitError("times and values differ in length")
    if window is not None:
        sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
        t, v = t[sel], v[sel]
    if t.size < 4:
        raise FitError(f"need at least 4 points in the window, got {t.size}")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise FitError("values must be positive and finite on the window")
    y = np.log(v)
    slope, intercept = np.polyfit(t, y, 1)
    res = y - (intercept + slope * t)
    return RateFit(float(slope), float(math.exp(intercept)),
                   float(np.sqrt(np.mean(res**2))), int(t.size))


def _truncated(t, v, floor=FLOOR):
    """Series up to the first value below ``floor``."""
    t, v = np.asarray(t), np.asarray(v)
    below = np.nonzero(v < floor)[0]
    end = below[0] if below.size else v.size
    return t[:end], v[:end]


def _fit_tail(t, v, floor=FLOOR) -> Optional[RateFit]:
    tt, vv = _truncated(t, v, floor)
    if tt.size < 8:
        return None
    try:
        return rate_fit(tt, vv, tail_window(tt))
    except FitError:
        return None


# -- reports -------------------------------------------------------------------

@dataclass
class StabilityReport:
    experiment: Experiment
    perturbation_size: float
    fitted_rate: float            # omega > 0 for decay (= -slope)
    fitted_prefactor: float
    predicted_rate: float
    passed: bool
    shift_estimates: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)   # name -> array, for plotting

    def row(self) -> dict:
        out = {"experiment": self.experiment.value, "delta": self.perturbation_size,
               "fitted_rate": self.fitted_rate, "fitted_prefactor": self.fitted_prefactor,
               "predicted_rate": self.predicted_rate, "pass": self.passed}
        out.update({f"shift_{k}": v for k, v in self.shift_estimates.items()})
        out.update({k: v for k, v in self.details.items()
                    if isinstance(v, (int, float, str, bool, np.floating, np.integer))})
        return out


def _sup_distance(traj: Trajectory, target: float) -> np.ndarray:
    return np.max(np.abs(traj.u - target), axis=1)


# -- constant states -------------------------------------------------------------

PATTERNS = ("dip", "above", "bump", "below")


def pattern_initial(f: ReactionTerm, pattern: str, depth: float = 0.2,
                    width: float = 5.0) -> Callable:
    """Initial data for the four constant-state hypotheses.

    dip: edges at alpha+0.2, central dip to alpha-depth; above: alpha+0.05;
    bump: edges at alpha-0.2, central bump to alpha+depth; below: alpha-0.05.
    """
    a = f.alpha
    if a is None:
        raise PreconditionError("constant-state patterns need a bistable reaction term")
    if pattern == "above":
        return lambda x: np.full_like(x, a + 0.05)
    if pattern == "below":
        return lambda x: np.full_like(x, a - 0.05)
    g = lambda x: np.exp(-(x / width) ** 2)  # noqa: E731
    if pattern == "dip":
        hi = min(a + 0.2, 1.0)
        return lambda x: hi - (hi - max(a - depth, 0.0)) * g(x)
    if pattern == "bump":
        lo = max(a - 0.2, 0.0)
        return lambda x: lo + (min(a + depth, 1.0) - lo) * g(x)
    raise PreconditionError(f"unknown pattern {pattern!r}; choose from {PATTERNS}")


def classify_initial(f: ReactionTerm, u0: np.ndarray, edge: int = 5) -> Optional[str]:
    """Which constant-state hypothesis the samples satisfy: 'to1', 'to0' or None."""
    a = f.alpha
    if np.min(u0) < 0 or np.max(u0) > 1:
        return None
    if np.min(u0) > a:
        return "to1"
    if np.max(u0) < a:
        return "to0"
    ends = np.concatenate([u0[:edge], u0[-edge:]])
    integral = f.integral
    if integral >= 0 and np.min(ends) > a:
        return "to1"
    if integral <= 0 and np.max(ends) < a:
        return "to0"
    return None


def constant_convergence(f: ReactionTerm, u0_spec: Union[str, Callable], which: Optional[str] = None,
                         halfwidth: float = 40.0, dx: float = 0.1, T: float = 60.0,
                         snapshot_dt: float = 0.1, tol: float = 1e-3,
                         rate_tol: float = 0.3) -> StabilityReport:
    """Evolve data satisfying one of the constant-state hypotheses and fit the decay."""
    if not f.is_bistable:
        raise PreconditionError("constant-state convergence is stated for bistable terms")
    fn = pattern_initial(f, u0_spec) if isinstance(u0_spec, str) else u0_spec
    u0 = GridField.sample(fn, halfwidth, dx, 0.0)
    kind = classify_initial(f, u0.u)
    if kind is None:
        raise PreconditionError("initial data match none of the four hypothesis patterns")
    if which is not None and which != kind:
        raise PreconditionError(f"initial data predict {kind}, not {which}")
    limit = 1.0 if kind == "to1" else 0.0
    stop = lambda g: float(np.max(np.abs(g.u - limit))) < FLOOR  # noqa: E731
    traj = evolve(u0, f, T, snapshot_dt=snapshot_dt, boundary=Boundary.neumann(), stop=stop)
    dist = _sup_distance(traj, limit)
    hit = np.nonzero(dist < tol)[0]
    t_hit = float(traj.times[hit[0]]) if hit.size else math.inf
    predicted = abs(float(f.f_prime(limit)))
    fit = _fit_tail(traj.times, dist)
    rate = -fit.rate if fit else math.nan
    ok = bool(hit.size) and fit is not None and abs(rate - predicted) <= rate_tol * predicted
    return StabilityReport(Experiment.CONSTANT, 0.0, rate, fit.prefactor if fit else math.nan,
                           predicted, ok,
                           details={"limit": limit, "t_hit": t_hit, "kind": kind,
                                    "pattern": u0_spec if isinstance(u0_spec, str) else "custom",
                                    "fit_residual": fit.residual if fit else math.nan,
                                    "final_distance": float(dist[-1])},
                           series={"t": traj.times, "distance": dist})


# -- single front ----------------------------------------------------------------

def _best_shift(g, x, u, t, guess=0.0, span=10.0):
    """Least-squares translation, then the sup deviation at that translation."""
    res = optimize.minimize_scalar(lambda s: float(np.sum((u - g(x, t, s)) ** 2)),
                                   bounds=(guess - span, guess + span), method="bounded",
                                   options={"xatol": 1e-12})
    s = float(res.x)
    return s, float(np.max(np.abs(u - g(x, t, s))))


def front_stability(f: ReactionTerm, p: FrontProfile, delta: float = 0.0,
                    perturbation: Optional[Callable] = None, reflected: bool = False,
                    halfwidth: float = 40.0, dx: Optional[float] = None, T: float = 30.0,
                    snapshot_dt: float = 0.1, floor: float = 1e-8,
                    tol: float = 1e-3) -> StabilityReport:
    """u0 = phi(x) + delta * perturbation(x) (clipped to [0,1]); follow the best shift.

    ``reflected`` uses phi(-x) and compares with phi(-x+ct-x1).
    """
    dx = p.lattice_dx if dx is None and p.lattice_dx else (dx or 0.05)
    c = p.c
    if reflected:
        g = lambda x, t, s: p(-x + c * t - s)  # noqa: E731
    else:
        g = lambda x, t, s: p(x + c * t - s)  # noqa: E731
    pert = perturbation or (lambda x: np.exp(-x**2))
    u0 = GridField.sample(lambda x: np.clip(g(x, 0.0, 0.0) + delta * pert(x), 0.0, 1.0),
                          halfwidth, dx, 0.0)
    traj = evolve(u0, f, T, snapshot_dt=snapshot_dt, boundary=Boundary.neumann())
    x = traj.x[EDGE:-EDGE]
    shifts, devs = [], []
    s = 0.0
    for t, u in zip(traj.times, traj.u):
        s, d = _best_shift(g, x, u[EDGE:-EDGE], t, guess=s)
        shifts.append(s)
        devs.append(d)
    shifts, devs = np.array(shifts), np.array(devs)
    exact = float(np.max(devs)) < floor
    fit = None if exact else _fit_tail(traj.times, devs, floor)
    rate = -fit.rate if fit else (math.inf if exact else math.nan)
    ok = bool(devs[-1] < tol and (exact or (fit is not None and fit.rate < 0
                                              and fit.residual < 0.5)))
    return StabilityReport(Experiment.FRONT, delta, rate, fit.prefactor if fit else math.nan,
                           math.nan, ok,
                           shift_estimates={"x1" if reflected else "x0": float(shifts[-1])},
                           details={"final_deviation": float(devs[-1]), "exact": exact,
                                    "fit_residual": fit.residual if fit else math.nan,
                                    "reflected": reflected},
                           series={"t": traj.times, "deviation": devs, "shift": shifts})


# -- diverging pairs -------------------------------------------------------------

@dataclass(frozen=True)
class DivergingPairSpec:
    beta: float = 0.1          # beta1 (expanding bump) or beta2 (dip)
    L_bar: float = 30.0        # half-width of the bump / dip
    height_factor: float = 1.5  # plateau at alpha +- height_factor * beta
    edge: float = 0.5          # tanh smoothing length of the plateau edges


def level_crossings(x: np.ndarray, u: np.ndarray, level: float = 0.5):
    """Leftmost and rightmost positions where u crosses ``level`` (linear interpolation)."""
    s = u - level
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    exact = np.nonzero(s == 0)[0]
    pts = [x[i] - s[i] * (x[i + 1] - x[i]) / (s[i + 1] - s[i]) for i in idx]
    pts += [x[i] for i in exact]
    if len(pts) < 2:
        return None
    return float(min(pts)), float(max(pts))


def diverging_pair(f: ReactionTerm, p: FrontProfile, spec: DivergingPairSpec = DivergingPairSpec(),
                   direction: Optional[str] = None, halfwidth: float = 80.0, dx: float = 0.1,
                   T: float = 60.0, snapshot_dt: float = 0.1, speed_tol: float = 0.02,
                   L_bound: Optional[float] = None) -> StabilityReport:
    """Wide plateau above alpha (expand_to_1) or dip below alpha (collapse_to_0_outside).

    Tracks the two u=1/2 crossings, fits their speeds over the last third of
    the run, and fits the half-line deviation decay on |x| >= 2.  When the
    crossings disappear the outcome is reported as "collapsed"/"filled".
    """
    a = f.alpha
    if a is None:
        raise PreconditionError("diverging pairs need a bistable reaction term")
    expand = f.integral > 0
    want = "expand_to_1" if expand else "collapse_to_0_outside"
    if direction is not None and direction != want:
        raise PreconditionError(f"direction {direction} does not match the sign of the integral")
    if L_bound is not None and spec.L_bar < L_bound:
        raise PreconditionError(f"half-width {spec.L_bar} below the lower bound {L_bound}")
    plateau = a + spec.height_factor * spec.beta if expand else a - spec.height_factor * spec.beta
    if not 0.0 < plateau < 1.0:
        raise PreconditionError("plateau level leaves (0, 1)")
    outside = 0.0 if expand else 1.0
    L, e = spec.L_bar, spec.edge
    shape = lambda x: 0.5 * (np.tanh((x + L) / e) - np.tanh((x - L) / e))  # noqa: E731
    u0 = GridField.sample(lambda x: outside + (plateau - outside) * shape(x), halfwidth, dx, 0.0)
    traj = evolve(u0, f, T, snapshot_dt=snapshot_dt, boundary=Boundary.neumann())
    x = traj.x
    left, right, times = [], [], []
    for t, u in zip(traj.times, traj.u):
        cr = level_crossings(x, u)
        if cr is None:
            continue
        times.append(t)
        left.append(cr[0])
        right.append(cr[1])
    times, left, right = map(np.array, (times, left, right))
    c = abs(p.c)
    final = traj.u[-1]
    limit_inside = 1.0 if expand else 0.0
    if times.size < 10 or times[-1] < traj.times[-1] - 1e-9:
        outcome = "collapsed" if expand else "filled"
        return StabilityReport(Experiment.DIVERGING, spec.beta, math.nan, math.nan, c, False,
                               details={"outcome": outcome, "L_bar": L,
                                        "final_max": float(np.max(final)),
                                        "final_min": float(np.min(final))},
                               series={"t": traj.times, "max": np.max(traj.u, axis=1),
                                       "min": np.min(traj.u, axis=1)})
    third = times >= times[0] + 2 * (times[-1] - times[0]) / 3
    v_left = float(np.polyfit(times[third], left[third], 1)[0])
    v_right = float(np.polyfit(times[third], right[third], 1)[0])
    err = max(abs(v_left + c), abs(v_right - c)) / c
    # half-line deviations against shifted fronts, on |x| >= 2
    pc = p.c
    if expand:
        g_l = lambda xx, t, s: p(xx + pc * t - s)  # noqa: E731  (x < 0)
        g_r = lambda xx, t, s: p(-xx + pc * t - s)  # noqa: E731  (x > 0)
    else:
        g_r = lambda xx, t, s: p(xx + pc * t - s)  # noqa: E731  (x > 0)
        g_l = lambda xx, t, s: p(-xx + pc * t - s)  # noqa: E731  (x < 0)
    xl, xr = x < -2, x > 2
    xl[:EDGE] = False
    xr[-EDGE:] = False
    devs, sl, sr = [], 0.0, 0.0
    sel_t = traj.times >= times[0]
    guess_l = -L * (1 if expand else -1)
    sl = sr = 0.0
    first = True
    for t, u in zip(traj.times[sel_t], traj.u[sel_t]):
        if first:
            sl, _ = _best_shift(g_l, x[xl], u[xl], t, guess=guess_l, span=2 * L + 10)
            sr, _ = _best_shift(g_r, x[xr], u[xr], t, guess=guess_l, span=2 * L + 10)
            first = False
        sl, dl = _best_shift(g_l, x[xl], u[xl], t, guess=sl, span=5.0)
        sr, dr = _best_shift(g_r, x[xr], u[xr], t, guess=sr, span=5.0)
        devs.append(max(dl, dr))
    devs = np.array(devs)
    fit = _fit_tail(traj.times[sel_t], devs, 1e-8)
    ok = err <= speed_tol
    names = ("x2", "x3") if expand else ("x5", "x4")
    return StabilityReport(Experiment.DIVERGING, spec.beta, -fit.rate if fit else math.nan,
                           fit.prefactor if fit else math.nan, c, ok,
                           shift_estimates={names[0]: sl, names[1]: sr},
                           details={"outcome": "diverging", "v_left": v_left,
                                    "v_right": v_right, "speed_error": err, "L_bar": L,
                                    "final_deviation": float(devs[-1]),
                                    "inside_limit": limit_inside},
                           series={"t": times, "left": left, "right": right,
                                   "deviation_t": traj.times[sel_t], "deviation": devs})


# -- half-width lower bounds -----------------------------------------------------

@dataclass(frozen=True)
class L1Inputs:
    alpha: float
    beta1: float
    q0: float
    q1: float
    mu_tilde_1: float
    beta: float
    M3: float
    M4: float
    b: float
    w: float
    c: float
    mu2: float
    lambda1: float


@dataclass(frozen=True)
class L2Inputs:
    alpha: float
    beta2: float
    q0: float
    q1: float
    mu_tilde_1: float
    beta: float
    M3: float
    M4: float
    b: float
    w: float
    c: float
    mu2: float
    lambda1: float


def _chain(checks):
    for ok, text in checks:
        if not ok:
            raise ParameterError(f"admissibility violated: {text}")


def lower_bound_L1(z: L1Inputs) -> float:
    """Lower bound for the half-width of an expanding plateau (integral of f > 0)."""
    _chain([(0 < 1 - z.q1, "0 < 1-q1"), (1 - z.q1 < 1 - z.q0, "1-q1 < 1-q0"),
            (1 - z.q0 < z.alpha + z.beta1, "1-q0 < alpha+beta1"),
            (z.beta1 > 0, "beta1 > 0"), (1 - z.alpha - z.beta1 > 0, "alpha+beta1 < 1"),
            (z.c > 0, "c > 0"), (z.mu2 < 0, "mu2 < 0"), (z.mu_tilde_1 > 0, "mu~1 > 0"),
            (z.beta > 0, "beta > 0")])
    mt2 = 0.5 * min(-z.mu2 * z.c, z.mu_tilde_1)
    m_bar = ((z.w + z.b) / (z.c * z.beta * z.mu2)) * z.M3 - ((z.w + mt2) / (z.beta * mt2)) * z.q0
    _chain([(m_bar < 0, "M_bar < 0")])
    phi0 = min(m_bar,
               m_bar - math.log((z.q1 - z.q0) / z.M3) / z.mu2,
               m_bar - math.log((z.mu_tilde_1 - mt2) * z.q0 / (z.b * z.M3)) / z.mu2)
    return max(-phi0, -math.log((1 - z.alpha - z.beta1) / z.M4) / z.lambda1 - phi0)


def lower_bound_L2(z: L2Inputs) -> float:
    """Lower bound for the half-width of a spreading dip (integral of f < 0).

    The primed constant beta' is used in both terms of M_bar'.
    """
    _chain([(0 < z.alpha - z.beta2, "0 < alpha-beta2"),
            (z.alpha - z.beta2 < z.q0, "alpha-beta2 < q~0"), (z.q0 < z.q1, "q~0 < q~1"),
            (z.q1 < z.alpha, "q~1 < alpha"), (z.beta2 > 0, "beta2 > 0"),
            (z.c < 0, "c < 0"), (z.lambda1 > 0, "lambda1 > 0"), (z.mu_tilde_1 > 0, "mu~1' > 0"),
            (z.beta > 0, "beta' > 0")])
    mt2 = 0.5 * min(-z.lambda1 * z.c, z.mu_tilde_1)
    m_bar = ((z.w + z.b) / (z.c * z.lambda1 * z.beta)) * z.M4 - ((z.w + mt2) / (z.beta * mt2)) * z.q0
    _chain([(m_bar < 0, "M_bar' < 0")])
    phi0 = min(m_bar,
               m_bar + math.log((z.q1 - z.q0) / z.M4) / z.lambda1,
               m_bar + math.log((z.mu_tilde_1 - mt2) * z.q0 / (z.b * z.M4)) / z.lambda1)
    return max(-phi0, math.log((z.alpha - z.beta2) / z.M3) / z.mu2 - phi0)


def _front_constants(f: ReactionTerm, p: FrontProfile):
    e = eigenvalues(f, p.c)
    tb = fit_tail_constants(p, e)
    sc = compute_constants(f)
    return e, tb, sc


def l1_inputs(f: ReactionTerm, p: FrontProfile, beta1: float, mu_tilde_1: Optional[float] = None,
              beta: float = 0.5, q0: Optional[float] = None, q1: Optional[float] = None) -> L1Inputs:
    """Inputs for ``lower_bound_L1`` from the front, with the documented defaults."""
    e, tb, sc = _front_constants(f, p)
    s = f.alpha + beta1
    q0 = 1 - s + s / 3 if q0 is None else q0
    q1 = 1 - s + 2 * s / 3 if q1 is None else q1
    mt1 = abs(e.mu2) / 2 if mu_tilde_1 is None else mu_tilde_1
    return L1Inputs(f.alpha, beta1, q0, q1, mt1, beta, tb.M3, tb.M4, sc.b, sc.w, p.c,
                    e.mu2, e.lambda1)


def l2_inputs(f: ReactionTerm, p: FrontProfile, beta2: float, mu_tilde_1: Optional[float] = None,
              beta: float = 0.5, q0: Optional[float] = None, q1: Optional[float] = None) -> L2Inputs:
    e, tb, sc = _front_constants(f, p)
    lo = f.alpha - beta2
    q0 = lo + beta2 / 3 if q0 is None else q0
    q1 = lo + 2 * beta2 / 3 if q1 is None else q1
    mt1 = e.lambda1 / 2 if mu_tilde_1 is None else mu_tilde_1
    return L2Inputs(f.alpha, beta2, q0, q1, mt1, beta, tb.M3, tb.M4, sc.b, sc.w, p.c,
                    e.mu2, e.lambda1)


# -- sandwich around an entire solution -------------------------------------------

def _perturbation(x, delta, seed, scale=0.9):
    """Deterministic sum of three signed Gaussian bumps, sup-norm < delta."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(x[0] / 2, x[-1] / 2, 3)
    signs = rng.choice([-1.0, 1.0], 3)
    g = sum(s * np.exp(-((x - c0) / 2.0) ** 2) for s, c0 in zip(signs, centers))
    return scale * delta * g / max(float(np.max(np.abs(g))), 1e-300)


def sandwich_stability(a, sc: StabilityConstants, delta: float,
                       tail_bounds: Optional[TailBounds] = None, p: Optional[FrontProfile] = None,
                       T: float = 60.0, t0: float = 0.0, seed: int = 0,
                       tol: Optional[float] = None, eps: Optional[float] = None,
                       rate_slack: float = 0.8) -> StabilityReport:
    """Perturb the entire solution at t0 by less than delta and check the sandwich

        max{0, u(x, t - g(t)) - q(t)} <= v(x, t) <= min{1, u(x, t + g(t)) + q(t)}

    (time shifts reversed for decreasing families), the decay rate of
    ||v - u||, and the final exponential bound for t past the onset time.
    """
    from .entire import Family
    if not 0 <= delta <= sc.theta:
        raise ParameterError(f"delta={delta} must lie in [0, theta={sc.theta}]")
    inc = a.family is not Family.ANNIHILATING
    if (sc.b_bar if inc else sc.b_tilde) is None:
        raise ParameterError("measure b_bar / b_tilde (check_time_monotonicity) first")
    f = a.f
    sp = SandwichParams(delta, sc.v, sc.w, sc.b_bar if inc else sc.b_tilde, inc)
    if eps is not None:
        # delta <= min(delta1/(1+gamma0), eps/2) with delta1 = eps/(2 L), L = sup |u_t|
        L = float(np.max(np.abs(a.entire.ut)))
        cap = min(eps / (2 * L) / (1 + sp.gamma0), eps / 2)
        if delta > cap:
            raise ParameterError(f"delta={delta} exceeds min(delta1/(1+gamma0), eps/2)={cap:.3g}")
    base = a.largest
    g_inf = delta * (1 + sp.gamma0)
    need = t0 + T + g_inf + 1.0
    if base.times[-1] < need:
        base = extend(base, f, need, boundary=Boundary.neumann())
    u_ref = trajectory_evaluator(base)
    shifted = lambda x, t: u_ref(x, np.asarray(t) + t0)  # noqa: E731
    sup, sub = build_sandwich(shifted, sc, delta, "Increasing" if inc else "DecreasingReflect")
    x = base.x
    start = base.at(t0)
    v0 = np.clip(start + _perturbation(x, delta, seed), 0.0, 1.0)
    traj = evolve(GridField(base.x0, base.dx, v0, 0.0), f, T,
                  snapshot_dt=float(base.times[1] - base.times[0]), boundary=Boundary.neumann())
    tol = 10 * base.dx**2 if tol is None else tol
    worst, wx, wt = -np.inf, np.nan, np.nan
    diff = []
    for t, v in zip(traj.times, traj.u):
        lo, hi = sub(x, float(t)), sup(x, float(t))
        d = np.maximum(lo - v, v - hi)[EDGE:-EDGE]
        j = int(np.argmax(d))
        if d[j] > worst:
            worst, wx, wt = float(d[j]), float(x[EDGE + j]), float(t)
        diff.append(float(np.max(np.abs(v - base.at(float(t) + t0)))))
    diff = np.array(diff)
    fit = _fit_tail(traj.times, diff)
    predicted = min(abs(sc.v), abs(_edge_rate(f, p, inc))) if p is not None else abs(sc.v)
    slope_ok = fit is not None and fit.rate <= -rate_slack * predicted
    # final exponential bound
    bound_ok, bound_worst, onset = None, math.nan, math.nan
    if p is not None and tail_bounds is not None:
        bound_ok, bound_worst, onset = _final_bound(a, p, tail_bounds, sc, sp, traj.times, diff,
                                                    inc, t0)
    ok = worst <= tol and slope_ok and (bound_ok is not False)
    return StabilityReport(Experiment.SANDWICH, delta, -fit.rate if fit else math.nan,
                           fit.prefactor if fit else math.nan, predicted, bool(ok),
                           details={"sandwich_worst": worst, "sandwich_x": wx, "sandwich_t": wt,
                                    "tol": tol, "gamma0": sp.gamma0, "gamma_inf": g_inf,
                                    "slope_ok": bool(slope_ok),
                                    "bound_ok": "n/a" if bound_ok is None else bool(bound_ok),
                                    "bound_margin": bound_worst, "onset": onset, "t0": t0,
                                    "final_difference": float(diff[-1])},
                           series={"t": traj.times, "difference": diff})


def _edge_rate(f, p, inc):
    e = eigenvalues(f, p.c)
    return e.mu2 * p.c if inc else e.lambda1 * p.c


def _final_bound(a, p, tb, sc, sp, times, diff, inc, t0):
    """||v - u|| <= K1 e^{r t} + K2 e^{r t} + delta e^{v t} past the onset time.

    Merging: 1 - u <= M3 e^{mu2(ct + x6)} from the sub-solution (x6 its drift
    offset), and the shifted sandwich adds the factor e^{-mu2 c gamma_inf}.
    Annihilating: u <= M4 e^{lambda1 ct} from the min of the fronts, with the
    factor e^{lambda1 |c| gamma_inf}.
    """
    e = eigenvalues(a.f, p.c)
    c = p.c
    g_inf = sp.q0_bar * (1 + sp.gamma0)
    if inc:
        x6 = a.sub.params.get("x6")
        if x6 is None:
            return None, math.nan, math.nan
        r = e.mu2 * c
        K1 = tb.M3 * math.exp(e.mu2 * x6)
        K2 = K1 * math.exp(-e.mu2 * c * g_inf)
        onset = max(g_inf, g_inf - x6 / c)
    else:
        r = e.lambda1 * c
        K1 = tb.M4
        K2 = K1 * math.exp(-e.lambda1 * c * g_inf)
        onset = g_inf
    tt = times + t0
    sel = tt >= onset
    if not sel.any():
        return None, math.nan, onset
    bound = (K1 + K2) * np.exp(r * tt[sel]) + sp.q0_bar * np.exp(sc.v * times[sel])
    margin = float(np.max(diff[sel] - bound))
    return bool(margin <= 0), margin, onset
