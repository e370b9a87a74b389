"""Zero-order-hold closed-loop simulation and invariance monitoring.

Each sampling interval holds the filtered input fixed and integrates the
dynamics with classical RK4.  Every substep is recorded, so the monitor can
check the safe set, the held-input barrier quantity and the per-interval
excursion of Psi against the sampled-data margin.  Substep sampling only
approximates the continuous-time supremum; refining ``substeps`` tightens it.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .controller import (HIGH_ORDER, PASSTHROUGH, ControllerConfig, compute_control,
                         filter_margin, psi_top)
from .errors import DivergedError, InitialStateUnsafe, InvalidParameter, SolverInfeasible
from .symmat import lambda_min, spectral_norm
from .system import MultiAgentSystem, SafetyModel, combined_vector_field, eval_cascade, eval_H


@dataclass(frozen=True)
class SimConfig:
    t0: float = 0.0
    horizon: int = 200
    dt: float = 0.01
    substeps: int = 20
    monitor_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 0 or int(self.horizon) != self.horizon:
            raise InvalidParameter("horizon must be a nonnegative integer")
        if self.substeps < 1 or int(self.substeps) != self.substeps:
            raise InvalidParameter("substeps must be a positive integer")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidParameter("dt must be positive")
        if self.monitor_tol < 0:
            raise InvalidParameter("monitor_tol must be nonnegative")


def zoh_step(sys: MultiAgentSystem, x, u, dt: float, substeps: int):
    """RK4 over one hold interval.

    Returns ``(x_next, states)`` where ``states`` has ``substeps + 1`` rows,
    the first being ``x`` and the last ``x_next``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise DivergedError("non-finite state or input at the start of the interval")
    if substeps < 1 or dt <= 0:
        raise InvalidParameter("need dt > 0 and at least one substep")
    h = dt / substeps

    def f(z):
        return combined_vector_field(sys, z, u)

    states = np.empty((substeps + 1, x.size))
    states[0] = x
    z = x
    for i in range(substeps):
        k1 = f(z)
        k2 = f(z + 0.5 * h * k1)
        k3 = f(z + 0.5 * h * k2)
        k4 = f(z + h * k3)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise DivergedError(f"state became non-finite at substep {i + 1}")
        states[i + 1] = z
    return z, states


@dataclass
class IntervalRecord:
    k: int
    time: float
    status: str
    lambda_margin: float
    cuts_used: int
    solve_time: float
    excursion: float
    delta: float


@dataclass
class Trace:
    """Substep samples plus one record per completed interval.

    ``lam_psi[:, q-1]`` holds lambda_min(Psi_q) for q < r, and the last
    column holds lambda_min(Psi_r(x(t), u_k)) for the held input.
    """

    n: int
    m: int
    r: int
    mode: str
    delta: float
    times: list = field(default_factory=list)
    interval_index: list = field(default_factory=list)
    states: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    lam_H: list = field(default_factory=list)
    lam_psi: list = field(default_factory=list)
    intervals: list = field(default_factory=list)
    termination: Optional[dict] = None

    @property
    def complete(self) -> bool:
        return self.termination is None

    def arrays(self):
        return (np.asarray(self.times, dtype=float), np.asarray(self.states, dtype=float).reshape(-1, self.n),
                np.asarray(self.inputs, dtype=float).reshape(-1, self.m),
                np.asarray(self.lam_H, dtype=float), np.asarray(self.lam_psi, dtype=float).reshape(-1, self.r))

    def header(self) -> list:
        cols = ["row", "k", "time"]
        cols += [f"x{i}" for i in range(self.n)] + [f"u{i}" for i in range(self.m)]
        cols += ["lambda_min_H"] + [f"lambda_min_Psi_{q}" for q in range(1, self.r + 1)]
        cols += ["excursion", "delta", "status", "lambda_margin", "cuts_used"]
        return cols

    def rows(self):
        empty_iv = [""] * 5
        by_k = {rec.k: rec for rec in self.intervals}
        last_k = None
        for t, k, x, u, lh, lp in zip(self.times, self.interval_index, self.states, self.inputs,
                                      self.lam_H, self.lam_psi):
            if last_k is not None and k != last_k and last_k in by_k:
                yield self._interval_row(by_k[last_k])
            last_k = k
            yield (["substep", str(k), _fmt(t)] + [_fmt(v) for v in x] + [_fmt(v) for v in u]
                   + [_fmt(lh)] + [_fmt(v) for v in lp] + empty_iv)
        if last_k is not None and last_k in by_k:
            yield self._interval_row(by_k[last_k])

    def _interval_row(self, rec: IntervalRecord):
        blank = [""] * (self.n + self.m + 1 + self.r)
        return (["interval", str(rec.k), _fmt(rec.time)] + blank
                + [_fmt(rec.excursion), _fmt(rec.delta), rec.status, _fmt(rec.lambda_margin),
                   str(rec.cuts_used)])

    def to_csv(self, path):
        """Write the trace; wall-clock solve times are left out so replays match byte for byte."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for row in self.rows():
                w.writerow(row)
            if self.termination is not None:
                blank = [""] * (self.n + self.m + 1 + self.r + 2)
                w.writerow(["terminated", str(self.termination["k"]), _fmt(self.termination["time"])]
                           + blank + [self.termination["cause"], "", ""])


def _fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def _level_values(cfg: ControllerConfig, sm: SafetyModel, x, u, r, high_order):
    """(lambda_min H, [lambda_min Psi_1 .. Psi_{r-1}, lambda_min Psi_r(x, u)], Psi_r)."""
    lam_H = lambda_min(eval_H(sm, x))[0]
    vals = [lambda_min(eval_cascade(sm, x, q))[0] for q in range(1, r)]
    if u is None:
        return lam_H, vals + [math.nan], None
    P = psi_top(cfg, sm, x, u, high_order)
    return lam_H, vals + [lambda_min(P)[0]], P


def check_initial_state(sm: SafetyModel, x0, tol: float, high_order: bool):
    lam = lambda_min(eval_H(sm, x0))[0]
    if lam < -tol:
        raise InitialStateUnsafe(f"initial state is outside S: lambda_min(H) = {lam:.6g}")
    if high_order:
        for q in range(1, sm.relative_degree):
            lam_q = lambda_min(eval_cascade(sm, x0, q))[0]
            if lam_q < -tol:
                raise InitialStateUnsafe(
                    f"initial state is outside S_{q + 1}: lambda_min(Psi_{q}) = {lam_q:.6g}")


def run_simulation(sys: MultiAgentSystem, sm: SafetyModel, ctrl: ControllerConfig, x0,
                   cfg: SimConfig) -> Trace:
    """Closed-loop ZOH run over ``cfg.horizon`` intervals.

    Halts at the first solver failure or divergence and records the cause in
    ``trace.termination`` instead of raising.
    """
    if abs(ctrl.dt - cfg.dt) > 1e-15 * max(1.0, cfg.dt):
        raise InvalidParameter(f"controller dt {ctrl.dt} differs from simulation dt {cfg.dt}")
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != sys.n:
        raise InvalidParameter(f"initial state has length {x.size}, expected {sys.n}")
    # an unfiltered run on a high-order model is monitored on the cascade
    high_order = ctrl.mode == HIGH_ORDER or (ctrl.mode == PASSTHROUGH and sm.relative_degree > 1)
    if not high_order and sm.relative_degree > 1:
        raise InvalidParameter("this safety model needs the high-order filter")
    r = sm.relative_degree if high_order else 1
    check_initial_state(sm, x, cfg.monitor_tol, high_order)
    margin = filter_margin(ctrl, sm, high_order)
    trace = Trace(sys.n, sys.m, r, ctrl.mode, margin)
    h = cfg.dt / cfg.substeps
    u_last = None
    for k in range(cfg.horizon):
        tk = cfg.t0 + k * cfg.dt
        try:
            res = compute_control(ctrl, sys, sm, x)
        except SolverInfeasible as exc:
            trace.termination = {"k": k, "time": tk, "cause": type(exc).__name__,
                                 "message": str(exc)}
            break
        u = res.u
        try:
            x_next, pts = zoh_step(sys, x, u, cfg.dt, cfg.substeps)
        except DivergedError as exc:
            trace.termination = {"k": k, "time": tk, "cause": "DivergedError", "message": str(exc)}
            break
        _, _, P0 = _level_values(ctrl, sm, x, u, r, high_order)
        excursion = 0.0
        for i, z in enumerate(pts):
            lam_H, lam_psi, P = _level_values(ctrl, sm, z, u, r, high_order)
            excursion = max(excursion, spectral_norm(P - P0))
            if i < cfg.substeps:
                trace.times.append(tk + i * h)
                trace.interval_index.append(k)
                trace.states.append(z.copy())
                trace.inputs.append(u.copy())
                trace.lam_H.append(lam_H)
                trace.lam_psi.append(lam_psi)
        rep = res.report
        trace.intervals.append(IntervalRecord(k, tk, rep.status, rep.lambda_margin, rep.cuts_used,
                                              rep.solve_time, excursion, margin))
        x, u_last = x_next, u
    if cfg.horizon > 0:
        k_end = len(trace.intervals)
        lam_H, lam_psi, _ = _level_values(ctrl, sm, x, u_last, r, high_order)
        trace.times.append(cfg.t0 + k_end * cfg.dt)
        trace.interval_index.append(k_end)
        trace.states.append(x.copy())
        trace.inputs.append(np.full(sys.m, np.nan) if u_last is None else u_last.copy())
        trace.lam_H.append(lam_H)
        trace.lam_psi.append(lam_psi)
    return trace


@dataclass
class MonitorReport:
    min_lambda_H: float
    max_excursion_ratio: float
    excursion_violations: int
    min_lambda_psi_held: float
    min_lambda_S_Q: float
    intervals: int
    complete: bool
    termination: str
    all_optimal: bool
    tol: float
    filtered: bool
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.complete and all(self.checks.values())

    def to_text(self) -> str:
        items = [
            ("passed", self.passed),
            ("complete", self.complete),
            ("termination", self.termination or "none"),
            ("intervals", self.intervals),
            ("all_optimal", self.all_optimal),
            ("filtered", self.filtered),
            ("tol", self.tol),
            ("min_lambda_min_H", self.min_lambda_H),
            ("max_excursion_over_delta", self.max_excursion_ratio),
            ("excursion_violations", self.excursion_violations),
            ("min_lambda_min_Psi_held", self.min_lambda_psi_held),
            ("min_lambda_min_S_Q", self.min_lambda_S_Q),
        ] + [(f"check_{k}", v) for k, v in self.checks.items()]
        return "".join(f"{k}={_text(v)}\n" for k, v in items)


def _text(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt(v)
    return str(v)


def monitor_invariance(trace: Trace, tol: float = 1e-6) -> MonitorReport:
    """Check (a) H stays PSD, (b) excursion <= delta per interval,
    (c) the held-input barrier quantity stays PSD and (d) S_Q membership.

    Unfiltered (passthrough) runs are analysed the same way; their failures
    are reported, not raised.
    """
    _, _, _, lam_H, lam_psi = trace.arrays()
    min_H = float(np.min(lam_H)) if lam_H.size else math.inf
    held = lam_psi[:, -1] if lam_psi.size else np.zeros(0)
    held = held[np.isfinite(held)]
    min_held = float(np.min(held)) if held.size else math.inf
    if trace.r > 1 and lam_psi.size:
        min_SQ = float(min(min_H, np.min(lam_psi[:, :-1])))
    else:
        min_SQ = min_H
    exc = np.array([rec.excursion for rec in trace.intervals])
    dl = trace.delta
    violations = int(np.sum(exc > dl + tol)) if exc.size else 0
    ratio = float(np.max(exc) / dl) if exc.size and dl > 0 else (0.0 if not exc.size or not np.any(exc) else math.inf)
    checks = {
        "lambda_min_H": min_H >= -tol,
        "excursion_within_delta": violations == 0,
        "lambda_min_Psi_held": min_held >= -tol,
        "S_Q_membership": min_SQ >= -tol,
    }
    term = "" if trace.termination is None else trace.termination["cause"]
    return MonitorReport(
        min_lambda_H=min_H, max_excursion_ratio=ratio, excursion_violations=violations,
        min_lambda_psi_held=min_held, min_lambda_S_Q=min_SQ, intervals=len(trace.intervals),
        complete=trace.complete, termination=term,
        all_optimal=all(rec.status == "Optimal" for rec in trace.intervals) and trace.complete,
        tol=tol, filtered=trace.mode != PASSTHROUGH, checks=checks)
