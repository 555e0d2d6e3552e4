"""Turn an :class:`ExperimentConfig` into objects and run the subcommands.

Each ``run_*`` function returns a :class:`Report`: named file contents, a
one-line summary and an ok flag.  Nothing here touches the filesystem; see
:func:`emit_report`.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bounds import _clean, bound_report
from .config import ExperimentConfig
from .dynamics import Box, ControlSignal, ExponentialKL, closed_loop, integrate, linear_system
from .feedback import FeedbackLaw, companion_gain, feedback_entropy_rate, proposition42_check
from .models import (
    ChainParams,
    CubicParams,
    QuadraticParams,
    SynthesisResult,
    cardano_equilibrium,
    chain_equilibrium,
    chain_system,
    cubic_exponential_limit,
    cubic_system,
    fit_overshoot_M,
    pwl_equilibria,
    quad_jacobian,
    quadratic_exponential_lower,
    quadratic_sign_case,
    quadratic_system,
    quadratic_truncation_slack,
    synthesize_pwl,
    synthesize_quadratic,
    verify_practical_stability,
)
from .spanning import SpanningMode, build_candidates, entropy_rate, estimate_csv


@dataclass
class Report:
    name: str
    files: dict
    summary: str
    ok: bool = True


@dataclass
class Setup:
    cfg: ExperimentConfig
    system: object
    feedback: Optional[FeedbackLaw]
    zeta: ExponentialKL
    gamma: Box
    grid: np.ndarray
    target: Box
    synthesis: Optional[SynthesisResult] = None
    params: object = None
    meta: dict = field(default_factory=dict)


def dumps(obj) -> str:
    """JSON with insertion-ordered keys, finite floats only, trailing newline."""
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _params(cfg: ExperimentConfig):
    p = dict(cfg.system.params)
    kind = cfg.system.kind
    if kind == "quadratic":
        return QuadraticParams(p["lam"], p.get("alpha0", 0.0), p.get("beta0", 0.0), p["gamma0"])
    if kind == "cubic":
        return CubicParams(**{k: float(v) for k, v in p.items()})
    if kind == "chain":
        gammas = tuple(p["gammas"])
        if "poles" in p:
            return ChainParams.with_poles(int(p["d"]), p["lam"], p.get("alpha0", 0.0),
                                          p.get("beta0", 0.0), gammas, p["k1"], p["poles"])
        return ChainParams(int(p["d"]), p["lam"], p.get("alpha0", 0.0), p.get("beta0", 0.0),
                           gammas, p["k1"], tuple(p["K2"]))
    return None


def _synthesize(cfg: ExperimentConfig, p, gamma: Box) -> SynthesisResult:
    s = cfg.synthesis
    fn = synthesize_quadratic if cfg.system.kind == "quadratic" else synthesize_pwl
    return fn(p, cfg.spanning.epsilon, s.alpha, gamma, T_fit=s.T_fit, dt=s.dt, grid_points=s.grid_points)


def prepare(cfg: ExperimentConfig) -> Setup:
    """Build system, feedback, envelope and grids; runs synthesis when asked for."""
    gamma = Box(cfg.gamma.lower, cfg.gamma.upper)
    grid = gamma.grid(cfg.gamma.points)
    target = Box(cfg.target.lower, cfg.target.upper)
    rho = cfg.system.rho
    kind = cfg.system.kind
    p = _params(cfg)
    synth = None
    fb = None
    zeta = ExponentialKL(cfg.zeta.alpha, cfg.zeta.M)
    meta = {}
    if kind == "linear":
        B = np.atleast_2d(np.asarray(cfg.system.B, dtype=float))
        U = Box([-rho] * B.shape[1], [rho] * B.shape[1])
        system = linear_system(cfg.system.A, B, U, cfg.name)
    elif kind in ("quadratic", "cubic"):
        if cfg.feedback.kind == "synthesized" or cfg.zeta.synthesized:
            synth = _synthesize(cfg, p, gamma)
            system, fb = synth.system, synth.feedback
            if cfg.zeta.synthesized:
                zeta = synth.envelope
        else:
            U = Box([-rho], [rho])
            system = (quadratic_system if kind == "quadratic" else cubic_system)(p, U, cfg.name)
    else:
        system, fb = chain_system(p, Box([-rho], [rho]), cfg.name)
        if cfg.zeta.synthesized:
            e = chain_equilibrium(p)
            m_hat = fit_overshoot_M(system, fb, grid, cfg.synthesis.alpha, e, cfg.synthesis.T_fit,
                                    cfg.synthesis.dt)
            zeta = ExponentialKL(cfg.synthesis.alpha, m_hat)
            meta["equilibrium"] = e.tolist()
            meta["M_kind"] = "empirical"
    if cfg.feedback.kind == "linear":
        if cfg.feedback.K is not None:
            K = cfg.feedback.K
        else:
            K = [companion_gain(cfg.feedback.poles).tolist()]
        fb = FeedbackLaw.linear(K)
    elif cfg.feedback.kind == "none" and kind != "chain":
        fb = None
    return Setup(cfg, system, fb, zeta, gamma, grid, target, synth, p, meta)


# ---------------------------------------------------------------------------
# subcommands

def _bounds(st: Setup):
    cfg = st.cfg
    slack = 0.0
    if isinstance(st.params, QuadraticParams) and quadratic_sign_case(st.params, st.system.control_range):
        slack = quadratic_truncation_slack(st.params, cfg.spanning.epsilon)
    return bound_report(st.system, st.gamma, st.target, st.zeta, cfg.spanning.epsilon,
                        cfg.bounds.grid_res, cfg.bounds.upper_safety, cfg.bounds.lower_safety, slack)


def _analytic(st: Setup) -> dict:
    p, eps = st.params, st.cfg.spanning.epsilon
    out = {}
    if isinstance(p, QuadraticParams) and quadratic_sign_case(p, st.system.control_range):
        out["exponential_lower_closed_form"] = quadratic_exponential_lower(
            p, st.zeta.alpha, eps, st.system.control_range)
    if isinstance(p, CubicParams) and p.gamma1 > 0:
        out["exponential_lower_limit"] = cubic_exponential_limit(p, st.zeta.alpha)
    return out


def run_bounds(st: Setup) -> Report:
    br = _bounds(st)
    d = br.to_dict()
    d["analytic"] = _analytic(st)
    summary = (f"{st.cfg.name} bounds: lower={br.lower_general:.6g} upper={br.upper_lipschitz:.6g}"
               + ("" if br.lower_exponential is None else f" lower_exp={br.lower_exponential:.6g}"))
    return Report("bounds", {"bounds.json": dumps(d)}, summary)


def run_entropy(st: Setup, jobs: int = 1) -> Report:
    sp = st.cfg.spanning
    step = sp.control_step or sp.dt
    fbs = [st.feedback] if st.feedback is not None else []
    pool = build_candidates(st.system, fbs, st.grid, sp.horizons[-1], step, sp.dt, sp.constant_levels,
                            sp.sample_hold)
    mode = SpanningMode(sp.mode, sp.epsilon, sp.sampling_factor)
    est = entropy_rate(st.system, st.grid, pool, st.zeta, mode, st.target, sp.horizons, sp.dt,
                       sp.cover, jobs)
    br = _bounds(st)
    lo, hi = br.lower_general, br.upper_lipschitz
    sandwich = lo - 0.01 <= est.rate <= hi + 0.01
    summary_d = {
        "name": st.cfg.name,
        "mode": sp.mode,
        "epsilon": sp.epsilon,
        "zeta": st.zeta.to_dict(),
        **est.to_dict(),
        "lower_general": lo,
        "upper_lipschitz": hi,
        "sandwich": bool(sandwich),
        "spectral_exact": br.spectral_exact,
    }
    if st.synthesis is not None:
        summary_d["synthesis"] = st.synthesis.to_dict()
    summary = (f"{st.cfg.name} entropy: rate={est.rate:.6g} counts={est.counts} "
               f"bounds=[{lo:.4g}, {hi:.4g}] sandwich={sandwich}")
    return Report("entropy", {"entropy.csv": estimate_csv(est), "entropy.json": dumps(summary_d)}, summary)


def _comparison(st: Setup):
    c = st.cfg.comparison
    zeta = ExponentialKL(c.alpha, st.zeta.big_m) if c.alpha is not None else st.zeta
    grid = st.gamma.grid(c.points) if c.points is not None else st.grid
    return zeta, grid, c.horizons or st.cfg.spanning.horizons


def run_fb_entropy(st: Setup, jobs: int = 1) -> Report:
    if st.feedback is None:
        raise ValueError("fb-entropy needs a feedback law")
    sp = st.cfg.spanning
    zeta, grid, hs = _comparison(st)
    fe = feedback_entropy_rate(st.system, st.feedback, grid, zeta, sp.epsilon, hs, sp.dt,
                               sp.control_step, method="greedy", jobs=jobs)
    d = {"name": st.cfg.name, "epsilon": sp.epsilon, "zeta": zeta.to_dict(), **fe.to_dict()}
    rows = [(t, c.count, c.method, c.binding, math.log(c.count) / t) for t, c in zip(fe.estimate.horizons, fe.covers)]
    files = {"fb_entropy.csv": _csv(("tau", "count", "method", "binding", "rate_running"), rows),
             "fb_entropy.json": dumps(d)}
    return Report("fb-entropy", files, f"{st.cfg.name} fb-entropy: rate={fe.rate:.6g} counts={fe.estimate.counts}")


def run_synth(st: Setup) -> Report:
    if st.synthesis is None:
        if st.cfg.system.kind in ("quadratic", "cubic"):
            st.synthesis = _synthesize(st.cfg, st.params, st.gamma)
        else:
            raise ValueError("synth applies to quadratic and cubic systems")
    r = st.synthesis
    summary = f"{st.cfg.name} synth: gains={ {k: float(v) for k, v in r.gains.items()} } M={r.m_hat:.4g} rho={r.rho:.4g}"
    return Report("synth", {"synthesis.json": r.to_json()}, summary)


def run_verify(st: Setup) -> Report:
    if st.feedback is None:
        raise ValueError("verify needs a feedback law")
    v = st.cfg.verify
    dt = v.dt or (st.synthesis.dt if st.synthesis is not None else st.cfg.spanning.dt)
    rep = verify_practical_stability(st.system, st.feedback, st.grid, st.zeta, st.cfg.spanning.epsilon,
                                     v.T, dt, st.target)
    summary = f"{st.cfg.name} verify: pass={rep.passed} worst_margin={rep.worst_margin:.6g}"
    return Report("verify", {"verify.json": rep.to_json()}, summary, rep.passed)


def run_sweep(st: Setup) -> Report:
    sw = st.cfg.sweep
    mags = np.geomspace(sw.start, sw.stop, sw.num)
    p = st.params
    if isinstance(p, QuadraticParams):
        qs = -np.sign(p.gamma0) * mags
        es = [cardano_equilibrium(p, q) for q in qs]
        js = [quad_jacobian(p, q, e) for q, e in zip(qs, es)]
        slope = float(np.polyfit(np.log(mags), np.log(np.abs(es)), 1)[0])
        text = _csv(("q", "e", "J"), zip(qs.tolist(), es, js))
        d = {"name": st.cfg.name, "parameter": "q", "slope_log_e": slope,
             "J_limit": -3 * p.lam, "J_last": js[-1]}
        fname = "sweep_q.csv"
    elif isinstance(p, CubicParams):
        ks = -np.sign(p.eta1) * mags
        eq = [pwl_equilibria(p, k, k) for k in ks]
        rows = [(k, e1, j1, e2, j2) for k, ((e1, j1), (e2, j2)) in zip(ks.tolist(), eq)]
        s1 = float(np.polyfit(np.log(mags), np.log([abs(r[1]) for r in rows]), 1)[0])
        s2 = float(np.polyfit(np.log(mags), np.log([abs(r[3]) for r in rows]), 1)[0])
        text = _csv(("k", "e1", "J1", "e2", "J2"), rows)
        d = {"name": st.cfg.name, "parameter": "k", "slope_log_e1": s1, "slope_log_e2": s2}
        fname = "sweep_k.csv"
    else:
        raise ValueError("sweep applies to quadratic and cubic systems")
    slopes = {k: round(v, 4) for k, v in d.items() if k.startswith("slope")}
    return Report("sweep", {fname: text, "sweep.json": dumps(d)}, f"{st.cfg.name} sweep: {slopes}")


def run_check42(st: Setup, jobs: int = 1) -> Report:
    if st.feedback is None:
        raise ValueError("check42 needs a feedback law")
    c, sp = st.cfg.comparison, st.cfg.spanning
    zeta, grid, hs = _comparison(st)
    rep = proposition42_check(st.system, st.feedback, grid, zeta, sp.epsilon, hs, sp.dt, st.target,
                              sp.control_step, c.slack, jobs)
    d = {"name": st.cfg.name, "zeta": zeta.to_dict(), "epsilon": sp.epsilon, **rep.to_dict()}
    summary = (f"{st.cfg.name} check42: spanning={rep.lhs_rate:.6g} feedback={rep.rhs_rate:.6g} "
               f"pass={rep.passed}")
    return Report("check42", {"check42.json": dumps(d)}, summary, rep.passed)


def run_simulate(st: Setup) -> Report:
    s = st.cfg.simulate
    x0 = np.asarray(s.x0 if s.x0 is not None else 0.5 * (st.gamma.lower + st.gamma.upper), dtype=float)
    m = st.system.dim_control
    if s.u is None and st.feedback is not None:
        traj, _ = closed_loop(st.system, st.feedback, x0, s.tau, s.dt)
        states = traj.states
        controls = st.feedback(states)
    else:
        u = np.asarray(s.u if s.u is not None else np.zeros(m), dtype=float)
        traj = integrate(st.system, x0, ControlSignal.constant(u, s.dt, s.tau), s.tau, s.dt)
        states = traj.states
        controls = np.tile(u, (states.shape[0], 1))
    d = states.shape[1]
    header = ["t"] + [f"x{i + 1}" for i in range(d)] + [f"u{j + 1}" for j in range(m)]
    rows = [[t, *x, *u] for t, x, u in zip(traj.times.tolist(), states.tolist(), controls.tolist())]
    text = _csv(header, rows)
    summary = f"{st.cfg.name} simulate: x(T)={np.round(states[-1], 6).tolist()}"
    return Report("simulate", {"trajectory.csv": text}, summary)


def emit_report(report: Report, out_dir) -> list:
    """Write every file of ``report`` under ``out_dir``; returns the paths in order."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, text in report.files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths.append(path)
    return paths
