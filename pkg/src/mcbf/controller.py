"""Sampled-data safety filters: cooperative, adversarially robust and high-order.

All three build the same kind of problem.  At the sampled state ``x_k`` the
barrier constraint ``Psi(x_k, u) >= margin * I`` is affine in the free
inputs, so it becomes an ``LmiQp`` whose constant term collects the drift
part, the class-K term, any adversarial contribution and ``-margin * I``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bounds import BoundSet, delta, delta_r
from .errors import InvalidParameter, ModelError, SolverInfeasible
from .solver import (ADV_VERTEX_ENUM, ADV_WORST_DIRECTION, CUT_LIMIT, INFEASIBLE, OPTIMAL,
                     LmiQp, SolveResult, adversary_input, solve_safety_qp)
from .symmat import as_symmat, lambda_min
from .system import MultiAgentSystem, SafetyModel, eval_cascade, eval_H

COOPERATIVE = "cooperative"
ADVERSARIAL = "adversarial"
HIGH_ORDER = "high-order"
PASSTHROUGH = "passthrough"
MODES = (COOPERATIVE, ADVERSARIAL, HIGH_ORDER, PASSTHROUGH)


class CutLimitReached(SolverInfeasible):
    """The cutting-plane loop ran out of cuts before certifying the LMI."""


@dataclass(frozen=True)
class ControllerConfig:
    """Filter settings.

    ``c_alpha`` holds the class-K gains ``c_1 .. c_r``; a single value is
    used for every level.  ``passthrough`` applies the nominal input of the
    normal agents (projected onto their input sets) with no safety filter.
    """

    mode: str
    c_alpha: tuple
    dt: float
    bound_set: BoundSet
    nominal_policy: Callable[[np.ndarray], np.ndarray]
    tol_feas: float = 1e-7
    max_cuts: int = 200
    adversary_strategy: str = ADV_WORST_DIRECTION

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidParameter(f"unknown controller mode {self.mode!r}")
        c = tuple(float(v) for v in np.atleast_1d(self.c_alpha))
        if not c or any(not (v > 0 and np.isfinite(v)) for v in c):
            raise InvalidParameter(f"c_alpha entries must be strictly positive, got {c}")
        object.__setattr__(self, "c_alpha", c)
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise InvalidParameter(f"dt must be positive, got {self.dt}")
        if self.adversary_strategy not in (ADV_WORST_DIRECTION, ADV_VERTEX_ENUM):
            raise InvalidParameter(f"unknown adversary strategy {self.adversary_strategy!r}")

    def gain(self, level: int, r: int) -> float:
        """Gain ``c_level`` (1-based) for a cascade of relative degree ``r``."""
        if len(self.c_alpha) == 1:
            return self.c_alpha[0]
        if len(self.c_alpha) != r:
            raise InvalidParameter(f"{len(self.c_alpha)} gains given for relative degree {r}")
        return self.c_alpha[level - 1]


@dataclass
class ControlReport:
    mode: str
    status: str
    lambda_margin: float
    margin: float
    cuts_used: int
    solve_time: float
    A0: Optional[np.ndarray] = None
    solve: Optional[SolveResult] = field(default=None, repr=False)


@dataclass
class ControlResult:
    u: np.ndarray
    uN: np.ndarray
    uA: np.ndarray
    report: ControlReport


def _check_cascade_gains(cfg: ControllerConfig, sm: SafetyModel):
    casc = sm.top()
    for q in range(1, casc.r):
        if abs(cfg.gain(q, casc.r) - casc.c_alpha[q - 1]) > 1e-12 * (1 + casc.c_alpha[q - 1]):
            raise InvalidParameter(
                f"gain c_{q} = {cfg.gain(q, casc.r)} differs from the one built into the "
                f"cascade ({casc.c_alpha[q - 1]}); rebuild the safety model")
    return casc


def filter_margin(cfg: ControllerConfig, sm: SafetyModel, high_order: bool) -> float:
    """delta for relative degree one, delta_r for the high-order filter with r > 1."""
    r = sm.relative_degree
    if high_order and r > 1:
        return delta_r(cfg.bound_set, cfg.dt, cfg.gain(r, r))
    return delta(cfg.bound_set, cfg.dt, cfg.c_alpha[0])


def _pieces(cfg, sm, x, high_order):
    """(drift term, input columns, class-K term) of the top constraint at x."""
    if high_order:
        casc = _check_cascade_gains(cfg, sm)
        r = casc.r
        top = eval_cascade(sm, x, r - 1)
        drift = as_symmat(casc.lie_F_top(x))
        cols = [as_symmat(M) for M in casc.lie_G_top(x)]
        return drift, cols, cfg.gain(r, r) * top
    if sm.relative_degree != 1:
        raise ModelError("inputs do not appear in the first derivative of H; use the high-order filter")
    return (as_symmat(sm.lie_F_H(x)), [as_symmat(M) for M in sm.lie_G_H(x)],
            cfg.c_alpha[0] * eval_H(sm, x))


def _solve(cfg, sys, sm, x, high_order, adversarial):
    x = np.asarray(x, dtype=float).reshape(-1)
    t0 = time.perf_counter()
    drift, cols, classk = _pieces(cfg, sm, x, high_order)
    if len(cols) != sys.m:
        raise ModelError(f"safety model has {len(cols)} input columns, system has m = {sys.m}")
    margin = filter_margin(cfg, sm, high_order)
    p = drift.shape[0]
    ids_N = sys.normal if adversarial else list(range(len(sys.agents)))
    ids_A = sys.adversarial if adversarial else []
    idx_N, idx_A = sys.input_indices(ids_N), sys.input_indices(ids_A)
    uA = np.concatenate([adversary_input(sys, sm, x, j, cfg.adversary_strategy) for j in ids_A]) \
        if ids_A else np.zeros(0)
    adv_term = np.zeros((p, p))
    for i, ui in zip(idx_A, uA):
        adv_term = adv_term + cols[i] * ui
    A0 = as_symmat(drift + adv_term + classk - margin * np.eye(p))
    u_nom_full = np.asarray(cfg.nominal_policy(x), dtype=float).reshape(-1)
    if u_nom_full.size != sys.m:
        raise ModelError(f"nominal policy returned {u_nom_full.size} inputs, expected {sys.m}")
    prob = LmiQp(A0, [cols[i] for i in idx_N], u_nom_full[idx_N], sys.input_set(ids_N),
                 tol_feas=cfg.tol_feas, max_cuts=cfg.max_cuts)
    res = solve_safety_qp(prob)
    elapsed = time.perf_counter() - t0
    mode = cfg.mode
    report = ControlReport(mode, res.status, res.lambda_margin, margin, res.cuts_used, elapsed,
                           A0, res)
    if res.status == INFEASIBLE:
        raise SolverInfeasible(f"no admissible input satisfies the barrier condition at x = "
                               f"{np.round(x, 6).tolist()}", report)
    if res.status == CUT_LIMIT:
        raise CutLimitReached(f"cut limit {cfg.max_cuts} reached without certifying the LMI",
                              report)
    uN = res.u
    u = sys.stack_inputs(uN, uA) if adversarial else uN.copy()
    return ControlResult(u, uN, uA, report)


def ze_mcbf_control(cfg: ControllerConfig, sys: MultiAgentSystem, sm: SafetyModel, x) -> ControlResult:
    """Cooperative filter: every agent's input is a decision variable."""
    return _solve(cfg, sys, sm, x, high_order=False, adversarial=False)


def arze_mcbf_control(cfg: ControllerConfig, sys: MultiAgentSystem, sm: SafetyModel, x) -> ControlResult:
    """Adversarially robust filter: adversaries play ``u_min``, normal agents are filtered."""
    return _solve(cfg, sys, sm, x, high_order=False, adversarial=True)


def ho_control(cfg: ControllerConfig, sys: MultiAgentSystem, sm: SafetyModel, x) -> ControlResult:
    """High-order adversarially robust filter on the top cascade level."""
    return _solve(cfg, sys, sm, x, high_order=True, adversarial=True)


def passthrough_control(cfg: ControllerConfig, sys: MultiAgentSystem, sm: SafetyModel, x) -> ControlResult:
    """No filter: normal agents apply their nominal input, adversaries ``u_min``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    t0 = time.perf_counter()
    ids_N, ids_A = sys.normal, sys.adversarial
    uA = np.concatenate([adversary_input(sys, sm, x, j, cfg.adversary_strategy) for j in ids_A]) \
        if ids_A else np.zeros(0)
    u_nom = np.asarray(cfg.nominal_policy(x), dtype=float).reshape(-1)[sys.input_indices(ids_N)]
    uset = sys.input_set(ids_N)
    if uset.contains(u_nom):
        uN = u_nom
    else:
        # projection onto the input set: trivial LMI, no cuts needed
        prob = LmiQp(np.eye(1), [np.zeros((1, 1))] * u_nom.size, u_nom, uset)
        uN = solve_safety_qp(prob).u
    report = ControlReport(PASSTHROUGH, OPTIMAL, float("nan"), float("nan"), 0,
                           time.perf_counter() - t0)
    return ControlResult(sys.stack_inputs(uN, uA), uN, uA, report)


_DISPATCH = {
    COOPERATIVE: ze_mcbf_control,
    ADVERSARIAL: arze_mcbf_control,
    HIGH_ORDER: ho_control,
    PASSTHROUGH: passthrough_control,
}


def compute_control(cfg: ControllerConfig, sys: MultiAgentSystem, sm: SafetyModel, x) -> ControlResult:
    """Run the filter selected by ``cfg.mode``.

    In cooperative mode adversarial agents, if any, still apply ``u_min``:
    the filter simply does not know about them.
    """
    res = _DISPATCH[cfg.mode](cfg, sys, sm, x)
    if cfg.mode == COOPERATIVE and sys.adversaries:
        ids_A = sys.adversarial
        idx_A = sys.input_indices(ids_A)
        uA = np.concatenate([adversary_input(sys, sm, x, j, cfg.adversary_strategy) for j in ids_A])
        u = res.u.copy()
        u[idx_A] = uA
        idx_N = sys.input_indices(sys.normal)
        res = ControlResult(u, u[idx_N], uA, res.report)
    return res


def psi_top(cfg: ControllerConfig, sm: SafetyModel, x, u, high_order: Optional[bool] = None) -> np.ndarray:
    """The constrained quantity ``Psi(x, u)`` (or ``Psi_r``) with the configured top gain."""
    if high_order is None:
        high_order = cfg.mode == HIGH_ORDER
    x = np.asarray(x, dtype=float).reshape(-1)
    drift, cols, classk = _pieces(cfg, sm, x, high_order)
    out = drift + classk
    for Mj, uj in zip(cols, np.asarray(u, dtype=float).reshape(-1)):
        out = out + Mj * uj
    return as_symmat(out)


def membership_S_q(sm: SafetyModel, x, q: int, tol: float = 0.0) -> bool:
    """Whether ``x`` lies in ``S_q = {Psi_{q-1}(x) >= 0}`` (1 <= q <= r)."""
    r = sm.relative_degree
    if not 1 <= q <= r:
        raise InvalidParameter(f"q must lie in 1..{r}, got {q}")
    return lambda_min(eval_cascade(sm, x, q - 1))[0] >= -tol


def membership_S_Q(sm: SafetyModel, x, tol: float = 0.0) -> bool:
    return all(membership_S_q(sm, x, q, tol) for q in range(1, sm.relative_degree + 1))
