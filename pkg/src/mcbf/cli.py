"""Command-line entry point: ``mcbf run | verify | sweep | report``.

Exit codes: 0 success, 1 usage or I/O error (including an unsafe initial
state), 2 solver failure (no admissible input, or cut limit), 3 monitor
failure or divergence.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .controller import (ADVERSARIAL, COOPERATIVE, HIGH_ORDER, MODES, PASSTHROUGH,
                         CutLimitReached, compute_control, filter_margin)
from .errors import InitialStateUnsafe, MCBFError, SolverInfeasible
from .scenarios import BUILTINS, Scenario, build_scenario, builtin_spec, load_scenario
from .sim import monitor_invariance, run_simulation
from .symmat import lambda_min
from .system import eval_cascade, eval_H

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_MONITOR = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _floats(text: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one number")
    return vals


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _scenario_args(p: argparse.ArgumentParser, overrides=True):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="path to a scenario JSON file")
    src.add_argument("--builtin", choices=BUILTINS, help="name of a shipped scenario")
    p.add_argument("--out", default=None, help="output directory (default: mcbf_out/<name>)")
    if overrides:
        p.add_argument("--dt", type=_positive_float, help="sampling interval override")
        p.add_argument("--c-alpha", type=_floats, help="class-K gain(s), comma separated")
        p.add_argument("--mode", choices=MODES, help="controller mode override")
        p.add_argument("--seed", type=int, help="random seed override")
        p.add_argument("--substeps", type=int, help="integration substeps per interval")
        p.add_argument("--horizon", type=int, help="number of sampling intervals")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcbf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and monitor invariance")
    _scenario_args(p)

    p = sub.add_parser("verify", help="sampled feasibility audit of the barrier condition")
    _scenario_args(p)
    p.add_argument("--samples", type=int, default=2000, help="number of sampled states in S")
    p.add_argument("--rtol", type=float, default=1e-3, help="relative tolerance of the dt bisection")

    p = sub.add_parser("sweep", help="batch runs over a dt x c_alpha grid")
    _scenario_args(p)
    p.add_argument("--dt-values", type=_floats, required=True)
    p.add_argument("--c-alpha-values", type=_floats, required=True)
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("report", help="summarize a trace or sweep output")
    p.add_argument("--input", required=True, help="trace CSV, aggregate CSV, or output directory")
    p.add_argument("--out", default=None, help="directory for summary.txt and plots")
    p.add_argument("--plot", action="store_true", help="also write margin-vs-time plots")
    return parser


def _source(args) -> str:
    return args.builtin if args.builtin else args.scenario


def _overrides(args) -> dict:
    out = {}
    for key in ("dt", "mode", "seed", "substeps", "horizon"):
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    if getattr(args, "c_alpha", None) is not None:
        out["c_alpha"] = args.c_alpha
    return out


def _load(source: str, overrides: dict) -> Scenario:
    if source in BUILTINS:
        spec = builtin_spec(source)
    else:
        path = Path(source)
        if not path.is_file():
            raise UsageError(f"scenario file not found: {source}")
        spec = load_scenario(path)
    return build_scenario(spec, **overrides)


def _outdir(args, sc: Scenario) -> Path:
    out = Path(args.out) if args.out else Path("mcbf_out") / sc.name
    out.mkdir(parents=True, exist_ok=True)
    return out


def simulate_to(sc: Scenario, out: Path) -> dict:
    """Run, write ``trace.csv`` and ``monitor.txt``, and return a result summary."""
    trace = run_simulation(sc.system, sc.safety, sc.controller, sc.x0, sc.sim)
    rep = monitor_invariance(trace, sc.sim.monitor_tol)
    trace.to_csv(out / "trace.csv")
    (out / "monitor.txt").write_text(rep.to_text())
    if trace.termination is not None:
        cause = trace.termination["cause"]
        code = EXIT_SOLVER if cause in (SolverInfeasible.__name__, CutLimitReached.__name__) \
            else EXIT_MONITOR
    else:
        code = EXIT_OK if rep.passed else EXIT_MONITOR
    return {"code": code, "report": rep, "trace": trace}


def cmd_run(args) -> int:
    sc = _load(_source(args), _overrides(args))
    out = _outdir(args, sc)
    res = simulate_to(sc, out)
    rep = res["report"]
    print(f"scenario={sc.name} mode={sc.controller.mode} intervals={rep.intervals} "
          f"min_lambda_min_H={rep.min_lambda_H:.6g} passed={rep.passed}")
    if rep.termination:
        print(f"terminated early: {res['trace'].termination['message']}")
    print(f"wrote {out / 'trace.csv'} and {out / 'monitor.txt'}")
    return res["code"]


# -- verify -----------------------------------------------------------------

def _audit_mode(sc: Scenario) -> str:
    mode = sc.controller.mode
    if mode == PASSTHROUGH:
        if sc.safety.relative_degree > 1:
            return HIGH_ORDER
        return ADVERSARIAL if sc.system.adversaries else COOPERATIVE
    return mode


def sample_safe_states(sc: Scenario, count: int, rng, high_order: bool, max_factor: int = 200):
    """Uniform samples of the domain box that lie in S (and S_Q when high-order)."""
    dom = sc.spec.domain
    kept, drawn = [], 0
    while len(kept) < count and drawn < max_factor * count:
        batch = dom.sample(rng, count)
        for x in batch:
            drawn += 1
            if lambda_min(eval_H(sc.safety, x))[0] < 0:
                continue
            if high_order and any(lambda_min(eval_cascade(sc.safety, x, q))[0] < 0
                                  for q in range(1, sc.safety.relative_degree)):
                continue
            kept.append(x)
            if len(kept) == count:
                break
    return np.array(kept).reshape(-1, dom.dim), drawn


def _feasible(cfg, sc, x) -> tuple:
    try:
        res = compute_control(cfg, sc.system, sc.safety, x)
    except SolverInfeasible:
        return False, math.nan
    return True, res.report.lambda_margin


def _all_feasible(cfg, sc, states, order):
    """Early exit at the first infeasible state, which moves to the front of ``order``."""
    for pos, i in enumerate(order):
        ok, _ = _feasible(cfg, sc, states[i])
        if not ok:
            order.insert(0, order.pop(pos))
            return False
    return True


def max_feasible_dt(sc: Scenario, states, dt0: float, rtol: float = 1e-3,
                    dt_min: float = 1e-9, dt_max: float = 1e6) -> float:
    """Largest dt (up to ``rtol``) keeping every state's barrier condition feasible."""
    base = replace(sc.controller, mode=_audit_mode(sc))
    order = list(range(len(states)))

    def ok(dt):
        return _all_feasible(replace(base, dt=dt), sc, states, order)

    if ok(dt0):
        lo, hi = dt0, dt0 * 10.0
        while hi < dt_max and ok(hi):
            lo, hi = hi, hi * 10.0
        if hi >= dt_max:
            return math.inf
    else:
        hi, lo = dt0, dt0 / 10.0
        while lo > dt_min and not ok(lo):
            hi, lo = lo, lo / 10.0
        if lo <= dt_min:
            return 0.0
    while hi / lo > 1.0 + rtol:
        mid = math.sqrt(lo * hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def cmd_verify(args) -> int:
    if args.samples < 1:
        raise UsageError("--samples must be at least 1")
    sc = _load(_source(args), _overrides(args))
    mode = _audit_mode(sc)
    cfg = replace(sc.controller, mode=mode)
    high_order = mode == HIGH_ORDER
    rng = np.random.default_rng(sc.sim.seed)
    states, drawn = sample_safe_states(sc, args.samples, rng, high_order)
    if len(states) == 0:
        raise UsageError("no sampled state fell inside the safe set")
    feas, margins = [], []
    for x in states:
        ok, lam = _feasible(cfg, sc, x)
        feas.append(ok)
        if ok:
            margins.append(lam)
    rate = float(np.mean(feas))
    dt_star = max_feasible_dt(sc, states, sc.sim.dt, args.rtol)
    margin = filter_margin(cfg, sc.safety, high_order)
    lines = {
        "scenario": sc.name,
        "mode": mode,
        "dt": repr(sc.sim.dt),
        "margin": repr(margin),
        "samples": len(states),
        "draws": drawn,
        "feasible": int(np.sum(feas)),
        "feasibility_rate": repr(rate),
        "worst_certified_margin": repr(float(min(margins))) if margins else "nan",
        "max_feasible_dt": repr(dt_star),
    }
    text = "".join(f"{k}={v}\n" for k, v in lines.items())
    out = _outdir(args, sc)
    (out / "verify.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if rate == 1.0 else EXIT_MONITOR


# -- sweep ------------------------------------------------------------------

AGG_FIELDS = ["dt", "c_alpha", "exit_code", "status", "intervals", "min_lambda_min_H",
              "max_excursion_over_delta", "excursion_violations", "termination"]


def _sweep_cell(source: str, base: dict, dt: float, c: float, cell_dir: str) -> dict:
    overrides = dict(base, dt=dt, c_alpha=[c])
    row = {"dt": repr(dt), "c_alpha": repr(c)}
    try:
        sc = _load(source, overrides)
        Path(cell_dir).mkdir(parents=True, exist_ok=True)
        res = simulate_to(sc, Path(cell_dir))
    except InitialStateUnsafe as exc:
        return dict(row, exit_code=EXIT_USAGE, status="unsafe-start", intervals=0,
                    min_lambda_min_H="nan", max_excursion_over_delta="nan",
                    excursion_violations=0, termination=str(exc))
    rep = res["report"]
    status = {EXIT_OK: "pass", EXIT_SOLVER: "infeasible", EXIT_MONITOR: "monitor-fail"}[res["code"]]
    return dict(row, exit_code=res["code"], status=status, intervals=rep.intervals,
                min_lambda_min_H=repr(rep.min_lambda_H),
                max_excursion_over_delta=repr(rep.max_excursion_ratio),
                excursion_violations=rep.excursion_violations,
                termination=rep.termination or "none")


def cmd_sweep(args) -> int:
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    source = _source(args)
    base = _overrides(args)
    base.pop("dt", None)
    base.pop("c_alpha", None)
    sc = _load(source, base)
    out = _outdir(args, sc)
    cells = [(dt, c) for dt in args.dt_values for c in args.c_alpha_values]
    jobs = [(source, base, dt, c, str(out / "cells" / f"dt={dt!r}_c={c!r}")) for dt, c in cells]
    if args.workers == 1:
        rows = [_sweep_cell(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_cell, *zip(*jobs)))
    with open(out / "aggregate.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=AGG_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for row in rows:
        print(f"dt={row['dt']} c_alpha={row['c_alpha']} status={row['status']} "
              f"min_lambda_min_H={row['min_lambda_min_H']} "
              f"excursion/delta={row['max_excursion_over_delta']}")
    print(f"wrote {out / 'aggregate.csv'}")
    return max(int(r["exit_code"]) for r in rows)


# -- report -----------------------------------------------------------------

def _read_csv(path: Path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _summarize_trace(rows) -> list:
    sub = [r for r in rows if r["row"] == "substep"]
    ivs = [r for r in rows if r["row"] == "interval"]
    term = [r for r in rows if r["row"] == "terminated"]
    lines = [f"intervals: {len(ivs)}"]
    if sub:
        lam = np.array([float(r["lambda_min_H"]) for r in sub])
        lines.append(f"min lambda_min(H): {np.nanmin(lam):.6g}")
        psi_cols = [c for c in sub[0] if c.startswith("lambda_min_Psi_")]
        for c in psi_cols:
            vals = np.array([float(r[c]) for r in sub])
            if np.any(np.isfinite(vals)):
                lines.append(f"min {c.replace('lambda_min_', 'lambda_min(')}): {np.nanmin(vals):.6g}")
    if ivs:
        exc = np.array([float(r["excursion"]) for r in ivs])
        dl = np.array([float(r["delta"]) for r in ivs])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dl > 0, exc / dl, np.where(exc > 0, np.inf, 0.0))
        lines.append(f"max excursion/delta: {np.max(ratio):.6g}")
        statuses = {}
        for r in ivs:
            statuses[r["status"]] = statuses.get(r["status"], 0) + 1
        lines.append("solver statuses: " + ", ".join(f"{k}={v}" for k, v in sorted(statuses.items())))
        cuts = [int(r["cuts_used"]) for r in ivs]
        lines.append(f"cuts per interval: max {max(cuts)}, mean {np.mean(cuts):.3g}")
    if term:
        t = term[0]
        lines.append(f"early termination: interval {t['k']} at t={float(t['time']):.6g}, "
                     f"cause {t['status']}")
    else:
        lines.append("early termination: none")
    return lines


def _summarize_aggregate(rows) -> list:
    head = f"{'dt':>10} {'c_alpha':>8} {'status':>13} {'min lambda_min(H)':>18} {'exc/delta':>10}"
    lines = [f"cells: {len(rows)}", head]
    for r in rows:
        lines.append(f"{float(r['dt']):>10.4g} {float(r['c_alpha']):>8.4g} {r['status']:>13} "
                     f"{float(r['min_lambda_min_H']):>18.6g} {float(r['max_excursion_over_delta']):>10.4g}")
    return lines


def _plot_trace(rows, path: Path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    sub = [r for r in rows if r["row"] == "substep"]
    t = np.array([float(r["time"]) for r in sub])
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(t, [float(r["lambda_min_H"]) for r in sub], label="lambda_min(H)")
    for c in [c for c in sub[0] if c.startswith("lambda_min_Psi_")]:
        ax.plot(t, [float(r[c]) for r in sub], label=c, alpha=0.7)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("time")
    ax.set_ylabel("smallest eigenvalue")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_report(args) -> int:
    src = Path(args.input)
    if src.is_dir():
        for name in ("trace.csv", "aggregate.csv"):
            if (src / name).is_file():
                src = src / name
                break
        else:
            raise UsageError(f"no trace.csv or aggregate.csv in {args.input}")
    if not src.is_file():
        raise UsageError(f"input not found: {args.input}")
    rows = _read_csv(src)
    if not rows:
        raise UsageError(f"{src} has no data rows")
    if "row" in rows[0]:
        lines = [f"trace: {src}"] + _summarize_trace(rows)
        kind = "trace"
    elif "exit_code" in rows[0]:
        lines = [f"sweep: {src}"] + _summarize_aggregate(rows)
        kind = "aggregate"
    else:
        raise UsageError(f"{src} is neither a trace nor a sweep aggregate")
    out = Path(args.out) if args.out else src.parent
    out.mkdir(parents=True, exist_ok=True)
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    sys.stdout.write(text)
    if args.plot and kind == "trace" and any(r["row"] == "substep" for r in rows):
        _plot_trace(rows, out / "margins.png")
        print(f"wrote {out / 'margins.png'}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "verify": cmd_verify, "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InitialStateUnsafe, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverInfeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except MCBFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
