"""Acceptance criteria, one test (or pair) per criterion.

Each test records a one-line PASS/FAIL verdict in ``RESULTS``; the
conftest prints them at the end of the session and each line is also
printed as the test runs (visible with ``-s``).
"""
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from mcbf.cli import main
from mcbf.controller import HIGH_ORDER, PASSTHROUGH, arze_mcbf_control, \
    compute_control, filter_margin, ho_control
from mcbf.errors import SolverInfeasible
from mcbf.scenarios import load
from mcbf.sets import Box
from mcbf.sim import monitor_invariance, run_simulation, zoh_step
from mcbf.solver import OPTIMAL, LmiQp, solve_safety_qp
from mcbf.symmat import lambda_min, spectral_norm

from helpers import random_sym, sample_in_S
from oracles import diag_scalar_control, grid_lmi_qp, linear_zoh_endpoint, random_feasible_lmi

RESULTS = {}


def record(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def simulate(sc, **sim_over):
    return run_simulation(sc.system, sc.safety, sc.controller, sc.x0, replace(sc.sim, **sim_over))


def test_criterion_1_weyl_suite():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst_sum = worst_pert = np.inf
    for _ in range(1000):
        p = int(rng.integers(1, 7))
        A, B = random_sym(rng, p, rng.uniform(0.1, 10)), random_sym(rng, p, rng.uniform(0.1, 10))
        lA, lB, lAB = lambda_min(A)[0], lambda_min(B)[0], lambda_min(A + B)[0]
        worst_sum = min(worst_sum, lAB - (lA + lB))
        worst_pert = min(worst_pert, lA - (lB - spectral_norm(A - B)))
    elapsed = time.perf_counter() - t0
    ok = worst_sum >= -1e-9 and worst_pert >= -1e-9 and elapsed < 5.0
    record(1, ok, f"min slack sum={worst_sum:.3g} perturbation={worst_pert:.3g} time={elapsed:.2f}s")
    assert ok


@pytest.fixture(scope="module")
def solver_vs_grid():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    rows = []
    for _ in range(200):
        A0, A, u_nom = random_feasible_lmi(rng)
        m = len(A)
        res = solve_safety_qp(LmiQp(A0, A, u_nom, Box(-np.ones(m), np.ones(m))))
        g = grid_lmi_qp(A0, A, u_nom, h=1e-3)
        lam = np.linalg.eigvalsh(A0 + sum(Aj * uj for Aj, uj in zip(A, res.u)))[0] \
            if res.status == OPTIMAL else np.nan
        f = lambda u: float(np.sum((u - u_nom) ** 2))
        rows.append(dict(status=res.status, lam=lam, err=float(np.linalg.norm(res.u - g)),
                         gap=f(g) - f(res.u)))
    return rows, time.perf_counter() - t0


def test_criterion_2_solver_sound_and_no_worse_than_grid(solver_vs_grid):
    rows, elapsed = solver_vs_grid
    all_opt = all(r["status"] == OPTIMAL for r in rows)
    sound = all(r["lam"] >= -1e-7 for r in rows)
    # every feasible grid point is a feasible candidate: the solver must not lose to it,
    # and strong convexity bounds the distance by the objective gap
    no_worse = all(r["gap"] >= -1e-9 for r in rows)
    bounded = all(r["err"] <= np.sqrt(max(r["gap"], 0.0)) + 2e-3 for r in rows)
    assert all_opt and sound and no_worse and bounded and elapsed < 60.0


@pytest.mark.xfail(strict=True, reason="a 1e-3 grid argmin resolves an active constraint only to "
                                       "about sqrt(2 * distance * step), not 2 * step")
def test_criterion_2_literal_position_tolerance(solver_vs_grid):
    rows, elapsed = solver_vs_grid
    within = sum(r["err"] <= 2e-3 for r in rows)
    sound = all(r["lam"] >= -1e-7 for r in rows)
    ok = within == len(rows) and sound and elapsed < 60.0
    record(2, ok, f"{within}/{len(rows)} within 2*step of the grid argmin "
                  f"(max {max(r['err'] for r in rows):.3g}); all Optimal lambda >= -1e-7: {sound}; "
                  f"solver never worse than grid: {all(r['gap'] >= -1e-9 for r in rows)}; "
                  f"time={elapsed:.1f}s")
    assert ok


def test_criterion_3_diagonal_reduction():
    worst, disagreements, counts = 0.0, 0, {}
    for name, adversarial in (("diag_coop", False), ("diag_adv", True)):
        sc = load(name)
        cfg = sc.controller
        margin = filter_margin(cfg, sc.safety, False)
        rng = np.random.default_rng(3)
        feasible = 0
        for x in sc.spec.domain.sample(rng, 500):
            st, u_ref = diag_scalar_control(sc.spec, x, cfg.nominal_policy(x), cfg.c_alpha[0],
                                            margin, adversarial)
            try:
                u = compute_control(cfg, sc.system, sc.safety, x).u
            except SolverInfeasible:
                disagreements += st != "Infeasible"
                continue
            if st != "Optimal":
                disagreements += 1
                continue
            feasible += 1
            worst = max(worst, float(np.max(np.abs(u - u_ref))))
        counts[name] = feasible
    ok = worst <= 1e-6 and disagreements == 0
    record(3, ok, f"max |u - u_scalar| = {worst:.3g}, status disagreements = {disagreements}, "
                  f"feasible states {counts} of 500 each")
    assert ok


def test_criterion_4_excursion_bound():
    parts, ok = [], True
    for dt in (0.005, 0.01, 0.02):
        sc = load("diag_coop", dt=dt)
        tr = simulate(sc, horizon=200)
        exc = np.array([rec.excursion for rec in tr.intervals])
        good = len(exc) == 200 and bool(np.all(exc <= tr.delta + 1e-6))
        ok &= good
        parts.append(f"dt={dt}: {int(np.sum(exc <= tr.delta + 1e-6))}/{len(exc)} "
                     f"(max ratio {np.max(exc) / tr.delta:.3f})")
    record(4, ok, "; ".join(parts))
    assert ok


def test_criterion_5_cooperative_invariance():
    parts, ok = [], True
    for name in ("diag_coop", "coupled_2x2"):
        sc = load(name)
        assert lambda_min(sc.safety.H(sc.x0))[0] >= 0
        tr = simulate(sc, horizon=200, dt=0.01)
        rep = monitor_invariance(tr, 1e-6)
        good = rep.complete and rep.all_optimal and rep.intervals == 200 and rep.min_lambda_H >= -1e-6
        ok &= good
        parts.append(f"{name}: min lambda_min(H)={rep.min_lambda_H:.4g} all Optimal={rep.all_optimal}")
    record(5, ok, "; ".join(parts))
    assert ok


def test_criterion_6_adversarial_invariance_and_negative_control():
    sc = load("diag_adv")
    rep = monitor_invariance(simulate(sc), 1e-6)
    raw = run_simulation(sc.system, sc.safety, replace(sc.controller, mode=PASSTHROUGH), sc.x0, sc.sim)
    neg = monitor_invariance(raw, 1e-6)
    ok = rep.complete and rep.all_optimal and rep.min_lambda_H >= -1e-6 and neg.min_lambda_H < 0
    record(6, ok, f"filtered min lambda_min(H)={rep.min_lambda_H:.4g}; "
                  f"passthrough min lambda_min(H)={neg.min_lambda_H:.4g}")
    assert ok


def test_criterion_7_high_order():
    sc = load("dbl_int_ho")
    rep = monitor_invariance(simulate(sc, horizon=200), 1e-6)
    ho_ok = rep.complete and rep.all_optimal and rep.min_lambda_S_Q >= -1e-6
    # relative degree one: the high-order filter must coincide with the adversarial one
    adv = load("diag_adv")
    cfg = adv.controller
    worst, states = 0.0, 0
    for x in sample_in_S(adv, np.random.default_rng(7), 200):
        try:
            a = arze_mcbf_control(cfg, adv.system, adv.safety, x)
        except SolverInfeasible:
            with pytest.raises(SolverInfeasible):
                ho_control(replace(cfg, mode=HIGH_ORDER), adv.system, adv.safety, x)
            continue
        b = ho_control(replace(cfg, mode=HIGH_ORDER), adv.system, adv.safety, x)
        worst = max(worst, float(np.max(np.abs(a.u - b.u))))
        states += 1
    tr_a = simulate(adv, horizon=100)
    tr_h = run_simulation(adv.system, adv.safety, replace(cfg, mode=HIGH_ORDER), adv.x0,
                          replace(adv.sim, horizon=100))
    traj = float(np.max(np.abs(tr_a.arrays()[2] - tr_h.arrays()[2])))
    r1_ok = worst <= 1e-9 and traj <= 1e-9
    ok = ho_ok and r1_ok
    record(7, ok, f"dbl_int_ho min_q lambda_min(Psi_q-1)={rep.min_lambda_S_Q:.4g}, "
                  f"all Optimal={rep.all_optimal}; r=1 max |u_ho - u_arze| = {max(worst, traj):.3g} "
                  f"over {states} states and a 100-interval run")
    assert ok


def test_criterion_8_rk4_order():
    sc = load("dbl_int_ho")
    x, u = sc.x0, np.array([0.7, -0.4, 0.2, 0.9])
    exact = linear_zoh_endpoint(sc.A, sc.B, x, u, 1.0)
    errs = [np.linalg.norm(zoh_step(sc.system, x, u, 1.0, s)[0] - exact) for s in (2, 4, 8, 16)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    ok = all(8 <= r <= 32 for r in ratios)
    record(8, ok, "step-halving error ratios " + ", ".join(f"{r:.2f}" for r in ratios))
    assert ok


def test_criterion_9_determinism(tmp_path):
    outs = []
    for tag in ("a", "b"):
        cmd = [sys.executable, "-m", "mcbf.cli", "run", "--builtin", "diag_adv", "--seed", "11",
               "--out", str(tmp_path / tag)]
        res = subprocess.run(cmd, capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        outs.append((tmp_path / tag / "trace.csv").read_bytes())
    ok = outs[0] == outs[1]
    record(9, ok, f"two runs, {len(outs[0])} bytes each, identical={ok}")
    assert ok


def _kv(path):
    return dict(line.split("=", 1) for line in path.read_text().splitlines())


def test_criterion_10_verify_bisection(tmp_path):
    code_small = main(["verify", "--builtin", "diag_coop", "--samples", "2000", "--dt", "0.01",
                       "--out", str(tmp_path / "small")])
    code_big = main(["verify", "--builtin", "diag_coop", "--samples", "2000", "--dt", "10",
                     "--out", str(tmp_path / "big")])
    small, big = _kv(tmp_path / "small" / "verify.txt"), _kv(tmp_path / "big" / "verify.txt")
    dt_star = float(small["max_feasible_dt"])
    ok = (code_small == 0 and float(small["feasibility_rate"]) == 1.0
          and float(big["feasibility_rate"]) < 1.0 and code_big != 0 and 0.01 < dt_star < 10)
    record(10, ok, f"rate(dt=0.01)={small['feasibility_rate']} rate(dt=10)={big['feasibility_rate']} "
                   f"max feasible dt={dt_star:.4g}")
    assert ok
