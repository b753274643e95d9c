"""Command-line entry point: ``entirelab {front,evolve,entire,stability,sweep,report}``.

Configuration comes from an optional TOML file (``--config``) overridden by
command-line flags.  Every run writes into ``$ENTIRELAB_OUTPUT/<run name>``
(default ``./entirelab_output``): CSV tables with 17 significant digits, a
``manifest.txt`` and a ``config.toml`` that reproduces the run, calibrated
constants included.  Exit status: 0 all selected checks pass, 1 a check
failed, 2 configuration error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import plotting
from .entire import (Family, check_asymptotics, check_band, check_M_condition,
                     check_symmetry, check_time_monotonicity, construct_entire, save_entire)
from .evolve import Boundary, EvolveError, GridField, derivative_bounds, evolve
from .experiments import (PATTERNS, DivergingPairSpec, constant_convergence, diverging_pair,
                          front_stability, sandwich_stability)
from .front import (FrontError, NoFrontError, eigenvalues, fit_tail_constants, lattice_front,
                    minimal_speed, solve_front_bistable, solve_front_monostable, write_profile)
from .io import config_hash, fmt, read_manifest, write_csv, write_manifest, write_rows, write_snapshots
from .reaction import CaseTag, ReactionError, compute_constants, parse_reaction
from .supersub import (Role, SampleGrid, annihilating_grid, build_envelope_annihilating,
                       build_envelope_C1, build_envelope_C2, build_envelope_monostable, calibrate,
                       front_pair, rho_nu_check, solve_rho)

OUTPUT_ENV = "ENTIRELAB_OUTPUT"
DEFAULT_OUTPUT = "entirelab_output"

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

COMMANDS = ("front", "evolve", "entire", "stability", "sweep", "report")
EXPERIMENTS = ("constant", "front", "diverging", "sandwich")
VARIANTS = ("u3", "u10", "u01", "u11")
INITIALS = ("front", "step") + PATTERNS
LIMIT_TOL = 1e-3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    reaction: str = "cubic:0.3"
    case: Optional[str] = None            # optional case override, must match the reaction
    halfwidth: Optional[float] = None
    dx: Optional[float] = None
    dt: Optional[float] = None            # evolve only; default from the stability limit
    snapshot_dt: float = 0.1
    n_list: Optional[list] = None
    T_end: Optional[float] = None         # entire: final time of the members
    T: Optional[float] = None             # evolve / stability horizon
    speed: Optional[float] = None         # monostable front speed (c1 for entire)
    speed2: Optional[float] = None        # monostable second front speed c2
    lattice_dx: Optional[float] = None    # front: also tabulate the lattice front
    variant: str = "u3"
    initial: str = "front"
    experiment: Optional[str] = None
    delta: Optional[float] = None
    pattern: Optional[str] = None
    seed: int = 0
    over: str = "alpha"
    values: Optional[list] = None
    jobs: int = 1
    output: Optional[str] = None          # run directory name under the output root
    calibrated: dict = field(default_factory=dict)


KEYS = {f.name for f in fields(RunConfig)}


# -- configuration ---------------------------------------------------------------

def _flatten(data: dict) -> dict:
    """Top-level keys plus one level of tables (``[grid] dx = ...`` -> ``dx``);
    the ``calibrated`` table is kept whole."""
    out = {}
    for k, v in data.items():
        if isinstance(v, dict) and k != "calibrated":
            for k2, v2 in v.items():
                if k2 in out:
                    raise ConfigError(f"duplicate key {k2!r}")
                out[k2] = v2
        else:
            out[k] = v
    return out


def load_config(path: Optional[str], overrides: dict) -> RunConfig:
    """TOML file then flag overrides; unknown keys are rejected."""
    data = {}
    if path:
        try:
            with open(path, "rb") as fh:
                data = _flatten(tomllib.load(fh))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    data.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(data) - KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return RunConfig(**data)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return fmt(v)


def dump_config(cfg: RunConfig) -> str:
    """TOML text for a resolved config; ``load_config`` reads it back unchanged."""
    lines, cal = [], {}
    for k, v in asdict(cfg).items():
        if k == "calibrated":
            cal = v
        elif v is not None:
            lines.append(f"{k} = {_toml_value(v)}")
    if cal:
        lines += ["", "[calibrated]"] + [f"{k} = {_toml_value(v)}" for k, v in sorted(cal.items())]
    return "\n".join(lines) + "\n"


def _floats(v, name):
    if isinstance(v, str):
        v = [s for s in v.replace(" ", "").split(",") if s]
    try:
        return [float(s) for s in v]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a list of numbers") from exc


def _family_of(f) -> Family:
    try:
        return Family.of(f)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def validate(cfg: RunConfig, command: str):
    """Resolve defaults and check module preconditions before any compute.

    Returns (reaction term, resolved config)."""
    try:
        f = parse_reaction(cfg.reaction)
    except ReactionError as exc:
        raise ConfigError(f"reaction {cfg.reaction!r}: {exc}") from exc
    if cfg.case is not None:
        try:
            want = CaseTag(cfg.case)
        except ValueError as exc:
            raise ConfigError(f"unknown case {cfg.case!r}") from exc
        if want is not f.case_tag:
            raise ConfigError(f"case {want.value} does not match reaction {f.spec} "
                              f"(classified {f.case_tag.value})")
    mono = not f.is_bistable
    upd = {}
    if cfg.dx is None:
        coarse = mono or command == "evolve" or (
            command == "stability" and cfg.experiment in ("constant", "diverging"))
        upd["dx"] = 0.1 if coarse else 0.05
    if cfg.halfwidth is None:
        upd["halfwidth"] = 70.0 if mono and command == "entire" else 40.0
    cfg = replace(cfg, **upd)
    if cfg.dx <= 0 or cfg.halfwidth <= 0 or cfg.snapshot_dt <= 0:
        raise ConfigError("dx, halfwidth and snapshot_dt must be positive")
    if cfg.halfwidth < 10 * cfg.dx:
        raise ConfigError("halfwidth must span at least ten grid steps")
    if cfg.dt is not None and (command != "evolve" or cfg.dt <= 0):
        raise ConfigError("dt applies to evolve only and must be positive")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    if mono:
        cmin = minimal_speed(f)
        for name in ("speed", "speed2"):
            s = getattr(cfg, name)
            if s is not None and s < cmin - 1e-12:
                raise ConfigError(f"{name}={fmt(s)} is below c_min={fmt(cmin)}")
    if command == "entire" or (command == "stability" and cfg.experiment == "sandwich"):
        family = _family_of(f)
        if family is Family.MONOSTABLE:
            cmin = minimal_speed(f)
            c1 = cfg.speed if cfg.speed is not None else 1.25 * cmin
            c2 = cfg.speed2 if cfg.speed2 is not None else 1.5 * cmin
            if c1 > c2:
                raise ConfigError("monostable entire solutions need speed <= speed2")
            if cfg.variant not in VARIANTS:
                raise ConfigError(f"variant must be one of {VARIANTS}")
            cfg = replace(cfg, speed=c1, speed2=c2)
        default_n = {Family.MERGING: [10.0, 20.0, 30.0], Family.ANNIHILATING: [30.0, 45.0, 60.0],
                     Family.MONOSTABLE: [5.0, 10.0, 15.0]}[family]
        n = sorted(set(_floats(cfg.n_list, "n_list"))) if cfg.n_list is not None else default_n
        if len(n) < 2 or n[0] <= 0:
            raise ConfigError("n_list needs at least two distinct positive horizons")
        cfg = replace(cfg, n_list=n)
    if command == "stability":
        if cfg.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
        if not f.is_bistable:
            raise ConfigError("stability experiments are stated for bistable reaction terms")
        if cfg.pattern is not None and cfg.pattern not in PATTERNS:
            raise ConfigError(f"pattern must be one of {PATTERNS}")
        if cfg.experiment in ("front", "sandwich"):
            delta = cfg.delta if cfg.delta is not None else (0.05 if cfg.experiment == "front"
                                                             else 0.02)
            _check_delta(f, delta)
            cfg = replace(cfg, delta=delta)
    if command == "evolve":
        if cfg.initial not in INITIALS and not cfg.initial.startswith("const:"):
            raise ConfigError(f"initial must be one of {INITIALS} or const:<value>")
    if command == "sweep":
        if cfg.over not in ("alpha", "delta"):
            raise ConfigError("sweep runs over alpha or delta")
        if cfg.values is None:
            raise ConfigError("sweep needs values")
        vals = _floats(cfg.values, "values")
        if cfg.over == "alpha" and any(not 0 < v < 1 for v in vals):
            raise ConfigError("alpha values must lie in (0, 1)")
        if cfg.over == "delta":
            if not f.is_bistable:
                raise ConfigError("delta sweeps need a bistable reaction term")
            for v in vals:
                _check_delta(f, v)
        cfg = replace(cfg, values=vals)
    return f, cfg


def _check_delta(f, delta):
    theta = compute_constants(f).theta
    if not 0 <= delta <= theta:
        raise ConfigError(f"delta={fmt(delta)} must lie in [0, theta={fmt(theta)}]")


# -- output ----------------------------------------------------------------------

def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))


def run_dir(cfg: RunConfig, command: str) -> Path:
    name = cfg.output or f"{command}-{config_hash(command, dump_config(cfg))}"
    d = output_root() / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _finish(d: Path, command: str, cfg: RunConfig, results: dict, checks: list) -> int:
    """Write checks.csv, manifest and config; print the report; return the exit code."""
    if checks:
        write_rows(d / "checks.csv", checks)
    ok = all(bool(c["pass"]) for c in checks)
    man = d / "manifest.txt"
    entries = read_manifest(man) if man.exists() and command == "entire" else {}
    entries.update({"command": command, "config": asdict(cfg) | {"calibrated": cfg.calibrated},
                    "results": results, "all_pass": ok})
    entries["config"] = {k: v for k, v in entries["config"].items() if v is not None and v != {}}
    write_manifest(man, entries)
    (d / "config.toml").write_text(dump_config(cfg))
    for k, v in results.items():
        print(f"{k} = {fmt(v)}")
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['check']}: value={fmt(c['value'])} "
              f"bound={fmt(c['bound'])}")
    print(f"output = {d}")
    return EXIT_OK if ok else EXIT_CHECKS


def _check(name, value, bound, passed) -> dict:
    return {"check": name, "value": value, "bound": bound, "pass": bool(passed)}


def write_series(d: Path, name: str, series: dict):
    """Series columns grouped by time axis: ``foo_t`` pairs with ``foo``."""
    if not series:
        return
    own = {k: v for k, v in series.items() if k.endswith("_t")}
    rest = {k: np.asarray(v) for k, v in series.items()
            if k not in own and f"{k}_t" not in series}
    if "t" in rest:
        write_csv(d / f"{name}.csv", rest)
    for k, t in own.items():
        base = k[:-2]
        write_csv(d / f"{name}_{base}.csv", {"t": np.asarray(t), base: np.asarray(series[base])})


# -- front -----------------------------------------------------------------------

def cmd_front(cfg: RunConfig) -> int:
    f, cfg = validate(cfg, "front")
    if f.is_bistable:
        p = solve_front_bistable(f)
        results = {"c": p.c}
    else:
        cmin = minimal_speed(f)
        c = cfg.speed if cfg.speed is not None else cmin
        p = solve_front_monostable(f, c)
        results = {"c": p.c, "c_min": cmin}
    e = eigenvalues(f, p.c)
    results.update(integral=f.integral, case=f.case_tag.value, lambda1=e.lambda1,
                   lambda2=e.lambda2, mu1=e.mu1, mu2=e.mu2)
    d = run_dir(cfg, "front")
    write_profile(d / "profile.csv", p, {"reaction": f.spec})
    profiles = [p]
    if cfg.lattice_dx is not None:
        lp = lattice_front(f, p, cfg.lattice_dx)
        write_profile(d / "profile_lattice.csv", lp, {"reaction": f.spec})
        results["c_lattice"] = lp.c
        profiles.append(lp)
    try:
        tb = fit_tail_constants(profiles[-1], eigenvalues(f, profiles[-1].c))
        results.update(M3=tb.M3, M3_tilde=tb.M3_tilde, M4=tb.M4, M4_tilde=tb.M4_tilde)
    except FrontError as exc:
        results["tail_fit"] = f"unavailable: {exc}"
    resid = float(np.max(np.abs(p.residual(f))))
    checks = [_check("profile_residual", resid, 1e-6, resid <= 1e-6)]
    return _finish(d, "front", cfg, results, checks)


# -- evolve ----------------------------------------------------------------------

def _initial(f, cfg):
    name = cfg.initial
    if name.startswith("const:"):
        try:
            v = float(name.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad constant initial {name!r}") from exc
        return lambda x: np.full_like(x, v)
    if name == "step":
        return lambda x: (x > 0).astype(float)
    if name == "front":
        p = solve_front_bistable(f) if f.is_bistable else solve_front_monostable(
            f, cfg.speed if cfg.speed is not None else minimal_speed(f))
        return lattice_front(f, p, cfg.dx)
    from .experiments import pattern_initial
    return pattern_initial(f, name)


def cmd_evolve(cfg: RunConfig) -> int:
    f, cfg = validate(cfg, "evolve")
    T = cfg.T if cfg.T is not None else 3.0
    u0 = GridField.sample(_initial(f, cfg), cfg.halfwidth, cfg.dx, 0.0)
    traj = evolve(u0, f, T, dt=cfg.dt, snapshot_dt=cfg.snapshot_dt, boundary=Boundary.neumann())
    d = run_dir(cfg, "evolve")
    write_snapshots(d / "snapshots.bin", traj.records())
    write_csv(d / "final.csv", {"x": traj.x, "u": traj.final.u}, {"t": float(traj.times[-1])})
    write_csv(d / "range.csv", {"t": traj.times, "max_u": traj.u.max(axis=1),
                                "min_u": traj.u.min(axis=1)})
    results = {"T": float(traj.times[-1]), "snapshots": int(traj.times.size)}
    checks = []
    if traj.times[-1] - traj.times[0] >= 1.0:
        sr = derivative_bounds(traj, f, 1.0)
        results.update(L0=sr.L0, L1=sr.L1, L2=sr.L2, L3=sr.L3, L4=sr.L4)
        checks += [_check("schauder_ux", sr.observed_sup_ux, sr.L2, sr.observed_sup_ux <= sr.L2),
                   _check("schauder_uxx", sr.observed_sup_uxx, sr.L3,
                          sr.observed_sup_uxx <= sr.L3),
                   _check("schauder_ut", sr.observed_sup_ut, sr.L4, sr.observed_sup_ut <= sr.L4)]
    return _finish(d, "evolve", cfg, results, checks)


# -- entire ----------------------------------------------------------------------

def _cache_path(key: str) -> Path:
    d = output_root() / "cache"
    d.mkdir(parents=True, exist_ok=True)
    return d / f"calibration-{key}.txt"


def _calibrated(cfg: RunConfig, name: str, key_parts: tuple, compute):
    """Pinned value from the config, else the cache, else ``compute()`` (then cached)."""
    if name in cfg.calibrated:
        return float(cfg.calibrated[name])
    path = _cache_path(config_hash(name, *key_parts))
    if path.exists():
        return float(read_manifest(path)[name])
    value = float(compute())
    write_manifest(path, {name: value, "key": list(map(str, key_parts))})
    return value


@dataclass
class EntireRun:
    a: object
    profile: object            # front (bistable) or (right, left) pair (monostable)
    checks: list
    results: dict
    cfg: RunConfig


def run_entire(cfg: RunConfig, f=None) -> EntireRun:
    """Calibrate (or load) the envelope amplitude, build the members, run the checks."""
    if f is None:
        f, cfg = validate(cfg, "entire")
    family = Family.of(f)
    dx, hw, n_list = cfg.dx, cfg.halfwidth, cfg.n_list
    key = (f.spec, f.case_tag.value, dx, hw)
    cal = dict(cfg.calibrated)
    checks, results = [], {"case": f.case_tag.value, "family": family.value}

    if family is Family.MONOSTABLE:
        p1 = lattice_front(f, solve_front_monostable(f, cfg.speed), dx)
        p2 = lattice_front(f, solve_front_monostable(f, cfg.speed2), dx)
        at = p1.left_rate
        g = SampleGrid.regular(-(hw - 10), hw - 10, dx, -20, -0.01, 21)

        def build(m):
            return build_envelope_monostable(f, p1, p2, m, at, variant=cfg.variant)
        m9 = _calibrated(cfg, "M9", key + (cfg.speed, cfg.speed2, cfg.variant),
                         lambda: calibrate(build, f, g)[0])
        cal["M9"] = m9
        sup, sub = build(m9)
        profile = (p1, p2)
        results.update(M9=m9, c1=p1.c, c2=p2.c, y_left=sup.params["y_left"],
                       y_right=sup.params["y_right"])
    else:
        L = lattice_front(f, solve_front_bistable(f), dx)
        profile = L
        results["c"] = L.c
        if f.case_tag is CaseTag.C1:
            g = SampleGrid.regular(-hw, hw, dx, -30, 0, 31)
            m7 = _calibrated(cfg, "M7", key, lambda: calibrate(
                lambda m: build_envelope_C1(f, L, m), f, g)[0])
            cal["M7"] = m7
            sup, sub = build_envelope_C1(f, L, m7)
            offset = sub.params["x6"]
            results.update(M7=m7, x6=offset)
        elif f.case_tag is CaseTag.C2:
            g = SampleGrid.regular(-hw, hw, dx, -30, 0, 31)
            m8 = _calibrated(cfg, "M8", key, lambda: calibrate(
                lambda m: build_envelope_C2(f, L, m), f, g)[0])
            cal["M8"] = m8
            sup, sub = build_envelope_C2(f, L, m8)
            offset = sub.params["p3"].drift_offset()
            results.update(M8=m8, x7=sub.params["x7"], x8=sub.params["x8"],
                           p3_offset=offset)
        else:
            B = _calibrated(cfg, "B", key, lambda: calibrate(
                lambda b: build_envelope_annihilating(f, L, b), f, annihilating_grid(L, dx))[0])
            cal["B"] = B
            _, sub = build_envelope_annihilating(f, L, B)
            sup = front_pair(L, Role.SUPER, case="C3-C4")
            offset = 0.0
            results.update(B=B, t_valid=sub.params["t_valid"])
    cfg = replace(cfg, calibrated=cal)

    a = construct_entire(f, sub, sup, n_list, halfwidth=hw, dx=dx, T_end=cfg.T_end,
                         snapshot_dt=cfg.snapshot_dt, strict=False)
    results.update(T_end=a.T_end, gap_last=a.cauchy_gaps[-1])
    cw = a.confinement_worst
    checks.append(_check("confinement", cw, 1e-6, cw <= 1e-6))
    checks.append(_check("cauchy_gaps_decreasing", a.cauchy_gaps[-1], a.cauchy_gaps[0],
                         a.gaps_decreasing))
    mono = check_time_monotonicity(a)
    results["mid_bound"] = mono.mid_bound
    checks.append(_check("time_monotonicity", mono.worst, -mono.tol, mono.passed))
    limit = family.limit
    final = float(np.max(np.abs(a.largest.final.u - limit)))
    checks.append(_check("reaches_limit", final, LIMIT_TOL,
                         final < LIMIT_TOL and a.T_end <= 60 + 1e-9))
    if family is Family.MONOSTABLE:
        if sup.params.get("rho") is not None:
            # the envelope uses the dominating nu0; the literal rho - nu check uses rho(0)/2
            rho, nu0 = sup.params["rho"], 0.5 * sup.params["rho0"]
            lo, m10, ok = rho_nu_check(rho, nu0, float(f.f_prime(0.0)))
            results.update(nu0_envelope=sup.params["nu0"], nu0=nu0, M10=m10)
            checks.append(_check("rho_minus_nu", lo, 0.0, ok))
        if f.spec == "fisher":
            rho = solve_rho(f, 0.5, -60.0, 0.0)
            t = np.linspace(-30.0, 0.0, 301)
            err = float(np.max(np.abs(rho(t) - 1.0 / (1.0 + np.exp(-t)))))
            checks.append(_check("rho_logistic", err, 1e-8, err <= 1e-8))
    else:
        asym = check_asymptotics(a, profile, guess=offset)
        results.update(y_right=asym.y_right, y_left=asym.y_left)
        # deviation at the earliest sampled time must stay below the later ones
        checks.append(_check("asymptotics", float(asym.deviations[0]),
                             float(asym.deviations[-1]), asym.decays))
        mc = check_M_condition(a, profile, offset=offset)
        results.update(M_d=mc.d if mc.d is not None else math.nan,
                       M_T=mc.T if mc.T is not None else math.nan)
        checks.append(_check(mc.condition.value, mc.span, 5.0, mc.passed))
        if family is Family.ANNIHILATING:
            sym = check_symmetry(a)
            checks.append(_check("symmetry", sym, 1e-10, sym <= 1e-10))
            mb = asym.min_bound_violation
            checks.append(_check("below_min_of_fronts", mb, 1e-6, mb <= 1e-6))
            band = check_band(a, profile, cal["B"])
            checks.append(_check("band", band.worst, band.tol, band.passed))
    return EntireRun(a, profile, checks, results, cfg)


def _distance_series(a) -> dict:
    tr = a.largest
    return {"t": tr.times, "distance": np.max(np.abs(tr.u - a.family.limit), axis=1)}


def cmd_entire(cfg: RunConfig) -> int:
    f, cfg = validate(cfg, "entire")
    run = run_entire(cfg, f)
    d = run_dir(cfg, "entire")
    save_entire(run.a, d)
    write_csv(d / "distance.csv", _distance_series(run.a))
    gaps = run.a.cauchy_gaps
    write_csv(d / "gaps.csv", {"n": run.a.n_list[:len(gaps)], "gap": gaps})
    return _finish(d, "entire", run.cfg, run.results, run.checks)


# -- stability -------------------------------------------------------------------

def _report_checks(rep, label) -> list:
    return [_check(label, rep.fitted_rate, rep.predicted_rate, rep.passed)]


def cmd_stability(cfg: RunConfig) -> int:
    f, cfg = validate(cfg, "stability")
    exp = cfg.experiment
    reports, checks, results = [], [], {}
    if exp == "constant":
        pats = [cfg.pattern] if cfg.pattern else list(PATTERNS)
        for pat in pats:
            try:
                rep = constant_convergence(f, pat, halfwidth=cfg.halfwidth, dx=cfg.dx,
                                           T=cfg.T or 60.0)
            except EvolveError as exc:
                if cfg.pattern:
                    raise ConfigError(str(exc)) from exc
                continue            # pattern does not apply to this reaction term
            reports.append((f"constant_{pat}", rep))
    elif exp == "front":
        L = lattice_front(f, solve_front_bistable(f), cfg.dx)
        rep = front_stability(f, L, cfg.delta, halfwidth=cfg.halfwidth, dx=cfg.dx,
                              T=cfg.T or 30.0)
        reports.append(("front", rep))
    elif exp == "diverging":
        dx = cfg.dx
        L = lattice_front(f, solve_front_bistable(f), dx)
        rep = diverging_pair(f, L, DivergingPairSpec(), halfwidth=max(cfg.halfwidth, 80.0),
                             dx=dx, T=cfg.T or 60.0)
        reports.append(("diverging", rep))
        ctrl = diverging_pair(f, L, DivergingPairSpec(L_bar=0.5), halfwidth=max(cfg.halfwidth, 80.0),
                              dx=dx, T=cfg.T or 60.0)
        collapsed = ctrl.details.get("outcome") in ("collapsed", "filled")
        results["control_outcome"] = ctrl.details.get("outcome", "")
        checks.append(_check("narrow_control_collapses", 0.5, 0.5, collapsed))
    else:
        run = run_entire(replace(cfg, experiment=None), f)
        cfg = replace(cfg, calibrated=run.cfg.calibrated)
        a = run.a
        mono = check_time_monotonicity(a)
        sc = compute_constants(f)
        sc = (sc.with_measured(b_bar=mono.mid_bound) if a.family is Family.MERGING
              else sc.with_measured(b_tilde=mono.mid_bound))
        L = run.profile
        tb = fit_tail_constants(L, eigenvalues(f, L.c))
        rep = sandwich_stability(a, sc, cfg.delta, tb, L, T=cfg.T or 60.0, seed=cfg.seed)
        reports.append(("sandwich", rep))
    if not reports:
        raise ConfigError("no applicable experiment for this reaction term")
    d = run_dir(cfg, "stability")
    rows = []
    for label, rep in reports:
        rows.append(rep.row() | {"label": label})
        checks += _report_checks(rep, label)
        write_series(d, f"series_{label}", rep.series)
    write_rows(d / "stability.csv", rows)
    if len(reports) == 1:
        results.update({k: v for k, v in rows[0].items() if isinstance(v, (int, float))})
    return _finish(d, "stability", cfg, results, checks)


# -- sweep -----------------------------------------------------------------------

def _sweep_alpha(alpha: float) -> dict:
    f = parse_reaction(f"cubic:{alpha!r}")
    p = solve_front_bistable(f)
    exact = (1 - 2 * alpha) / math.sqrt(2)
    sign_ok = np.sign(round(p.c, 9)) == np.sign(round(f.integral, 12))
    return {"alpha": alpha, "c": p.c, "c_exact": exact, "error": abs(p.c - exact),
            "integral": f.integral, "case": f.case_tag.value, "pass": bool(sign_ok)}


def _sweep_delta(args) -> dict:
    spec, delta, dx, hw, T = args
    f = parse_reaction(spec)
    L = lattice_front(f, solve_front_bistable(f), dx)
    rep = front_stability(f, L, delta, halfwidth=hw, dx=dx, T=T)
    return rep.row()


def cmd_sweep(cfg: RunConfig) -> int:
    f, cfg = validate(cfg, "sweep")
    if cfg.over == "alpha":
        job, args = _sweep_alpha, list(cfg.values)
    else:
        job = _sweep_delta
        args = [(cfg.reaction, v, cfg.dx, cfg.halfwidth, cfg.T or 30.0) for v in cfg.values]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(job, args))
    else:
        rows = [job(a) for a in args]
    d = run_dir(cfg, "sweep")
    write_rows(d / "sweep.csv", rows)          # single writer: the parent process
    checks = [_check(f"{cfg.over}={fmt(v)}", r.get("fitted_rate", r.get("c")), math.nan,
                     r["pass"]) for v, r in zip(cfg.values, rows)]
    return _finish(d, "sweep", cfg, {"jobs": len(rows)}, checks)


# -- report ----------------------------------------------------------------------

def cmd_report(run: Optional[str]) -> int:
    root = output_root()
    dirs = [Path(run)] if run else sorted(p for p in root.iterdir()
                                         if p.is_dir() and p.name != "cache") \
        if root.exists() else []
    if not dirs:
        print(f"no runs under {root}", file=sys.stderr)
        return EXIT_CONFIG
    for d in dirs:
        if not d.is_dir():
            print(f"{d}: not a run directory", file=sys.stderr)
            return EXIT_CONFIG
        for path in plotting.render_run(d):
            print(path)
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    p.add_argument("--config", help="TOML config file; flags override its keys")
    p.add_argument("--reaction", default=S, help="cubic:<alpha>, fisher or poly:[c0, c1, ...]")
    p.add_argument("--case", default=S, help="expected case tag (C1..C4, Monostable)")
    p.add_argument("--halfwidth", type=float, default=S)
    p.add_argument("--dx", type=float, default=S)
    p.add_argument("--snapshot-dt", dest="snapshot_dt", type=float, default=S)
    p.add_argument("--speed", type=float, default=S, help="monostable front speed")
    p.add_argument("--output", default=S, help="run directory name under $ENTIRELAB_OUTPUT")
    p.add_argument("--seed", type=int, default=S)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    ap = argparse.ArgumentParser(prog="entirelab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("front", help="front profile, eigenvalues and tail constants")
    _common(p)
    p.add_argument("--lattice-dx", dest="lattice_dx", type=float, default=S)
    p = sub.add_parser("evolve", help="forward evolution from a named initial state")
    _common(p)
    p.add_argument("--initial", default=S, help=f"one of {INITIALS} or const:<value>")
    p.add_argument("--T", type=float, default=S)
    p.add_argument("--dt", type=float, default=S)
    p = sub.add_parser("entire", help="construct an entire solution and check its properties")
    _common(p)
    p.add_argument("--n-list", dest="n_list", default=S, help="comma-separated horizons")
    p.add_argument("--T-end", dest="T_end", type=float, default=S)
    p.add_argument("--speed2", type=float, default=S)
    p.add_argument("--variant", default=S, choices=VARIANTS)
    p = sub.add_parser("stability", help="stability experiments")
    _common(p)
    p.add_argument("--experiment", default=S, choices=EXPERIMENTS)
    p.add_argument("--delta", type=float, default=S)
    p.add_argument("--pattern", default=S)
    p.add_argument("--T", type=float, default=S)
    p.add_argument("--n-list", dest="n_list", default=S)
    p = sub.add_parser("sweep", help="front speeds over alpha, or front stability over delta")
    _common(p)
    p.add_argument("--over", default=S, choices=("alpha", "delta"))
    p.add_argument("--values", default=S, help="comma-separated values")
    p.add_argument("--jobs", type=int, default=S)
    p.add_argument("--T", type=float, default=S)
    p = sub.add_parser("report", help="render figures next to the CSVs of finished runs")
    p.add_argument("--run", help="run directory (default: every run under the output root)")
    return ap


HANDLERS = {"front": cmd_front, "evolve": cmd_evolve, "entire": cmd_entire,
            "stability": cmd_stability, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    if command == "report":
        return cmd_report(args.get("run"))
    path = args.pop("config", None)
    try:
        cfg = load_config(path, args)
        return HANDLERS[command](cfg)
    except (ConfigError, ReactionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoFrontError as exc:
        print(f"no front: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (FrontError, EvolveError) as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
