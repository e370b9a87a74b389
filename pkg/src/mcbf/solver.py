"""Projection QP under an affine LMI, solved by eigenvector cutting planes.

The outer loop keeps a polyhedral outer approximation of
``{u : A0 + sum_j A_j u_j >= 0}``.  Each infeasible iterate ``u`` with
minimum eigenvector ``w`` contributes the cut ``w' M(u') w >= 0``, which is
valid because ``M`` is affine in ``u``.  The inner problem, projecting
``u_nom`` onto the cuts intersected with the linear part of the input set,
is a least-distance program solved through Lawson-Hanson NNLS.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidParameter, ModelError, UnsupportedStrategy
from .sets import InputSet, ProductSet
from .symmat import as_symmat, lambda_min
from .system import MultiAgentSystem, SafetyModel, eval_cascade

log = logging.getLogger(__name__)

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
CUT_LIMIT = "CutLimit"

_EPS = np.finfo(float).eps


def nnls(E: np.ndarray, f: np.ndarray, max_iter: Optional[int] = None) -> np.ndarray:
    """Lawson-Hanson active-set NNLS: ``min ||E y - f||`` subject to ``y >= 0``.

    Entering index ties go to the smallest index.
    """
    E = np.asarray(E, dtype=float)
    f = np.asarray(f, dtype=float)
    m, n = E.shape
    y = np.zeros(n)
    if n == 0:
        return y
    passive = np.zeros(n, dtype=bool)
    blocked = np.zeros(n, dtype=bool)
    tol = 10.0 * _EPS * max(np.abs(E).sum(axis=0).max(), 1.0) * max(m, n)
    max_iter = 30 * n + 30 if max_iter is None else max_iter
    w = E.T @ (f - E @ y)
    it = 0
    while it < max_iter:
        score = np.where(passive | blocked, -np.inf, w)
        j = int(np.argmax(score))
        if score[j] <= tol:
            break
        passive[j] = True
        first = True
        while it < max_iter:
            it += 1
            idx = np.flatnonzero(passive)
            z = np.zeros(n)
            z[idx] = np.linalg.lstsq(E[:, idx], f, rcond=None)[0]
            if first and z[j] <= 0:
                # roundoff made the entering column useless at this point
                passive[j] = False
                blocked[j] = True
                break
            first = False
            if np.all(z[idx] > 0):
                y = z
                blocked[:] = False
                break
            neg = idx[z[idx] <= 0]
            alpha = np.min(y[neg] / (y[neg] - z[neg]))
            y = y + alpha * (z - y)
            drop = passive & (y <= tol)
            y[drop] = 0.0
            passive &= ~drop
        w = E.T @ (f - E @ y)
    return y


@dataclass
class QPResult:
    status: str
    u: Optional[np.ndarray]
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    active: list = field(default_factory=list)
    iis: list = field(default_factory=list)
    kkt_residual: float = 0.0
    labels: list = field(default_factory=list)


def _assemble_rows(cuts, input_set, m):
    rows, rhs, labels = [], [], []
    for k, (a, b) in enumerate(cuts):
        a = np.asarray(a, dtype=float).reshape(-1)
        if a.size != m:
            raise InvalidParameter(f"cut {k} has length {a.size}, expected {m}")
        rows.append(a)
        rhs.append(float(b))
        labels.append(("cut", k))
    if input_set is not None:
        C, d = input_set.linear_constraints()
        for i in range(C.shape[0]):
            rows.append(-C[i])
            rhs.append(-float(d[i]))
            labels.append(("set", i))
    G = np.array(rows, dtype=float).reshape(-1, m)
    return G, np.array(rhs, dtype=float), labels


def qp_with_linear_cuts(u_nom, cuts: Sequence, input_set: Optional[InputSet] = None,
                        feas_tol: float = 1e-10) -> QPResult:
    """Minimize ``||u - u_nom||^2`` s.t. ``a_k . u >= b_k`` and the linear part of ``input_set``.

    Curved (ball) parts of ``input_set`` are ignored here; the cutting-plane
    loop handles them.  On infeasibility ``iis`` lists an irreducible
    infeasible subset of the constraint labels.
    """
    u_nom = np.asarray(u_nom, dtype=float).reshape(-1)
    m = u_nom.size
    G, h, labels = _assemble_rows(cuts, input_set, m)
    h = h - G @ u_nom
    norms = np.linalg.norm(G, axis=1) if G.size else np.zeros(len(labels))
    keep = []
    for i, nrm in enumerate(norms):
        if nrm <= 1e-14:
            if h[i] > feas_tol:
                return QPResult(INFEASIBLE, None, iis=[labels[i]], labels=labels)
            continue
        keep.append(i)
    Gn = G[keep] / norms[keep, None] if keep else np.zeros((0, m))
    hn = h[keep] / norms[keep] if keep else np.zeros(0)
    klabels = [labels[i] for i in keep]
    if hn.size == 0 or np.all(hn <= 0):
        return QPResult(OPTIMAL, u_nom.copy(), np.zeros(hn.size), [], [], 0.0, klabels)

    # least-distance program via NNLS
    E = np.vstack([Gn.T, hn[None, :]])
    f = np.zeros(m + 1)
    f[m] = 1.0
    y = nnls(E, f)
    r = E @ y - f
    if np.linalg.norm(r) <= 1e-10 or -r[m] <= 1e-12:
        support = np.flatnonzero(y > 0)
        return QPResult(INFEASIBLE, None, iis=[klabels[i] for i in support], labels=klabels)
    x = -r[:m] / r[m]
    mu = y / (-r[m])

    # polish on the identified active set
    act = np.flatnonzero(y > 0)
    if act.size:
        GA = Gn[act]
        muA = np.linalg.lstsq(GA @ GA.T, hn[act], rcond=None)[0]
        x_ref = GA.T @ muA
        if np.all(muA >= -1e-12) and np.all(Gn @ x_ref >= hn - 1e-12):
            x = x_ref
            mu = np.zeros_like(mu)
            mu[act] = np.maximum(muA, 0.0)
    slack = Gn @ x - hn
    kkt = max(
        float(np.max(np.maximum(-slack, 0.0), initial=0.0)),
        float(np.max(np.maximum(-mu, 0.0), initial=0.0)),
        float(np.max(np.abs(mu * slack), initial=0.0)),
        float(np.linalg.norm(x - Gn.T @ mu)),
    )
    if np.any(slack < -max(feas_tol, 1e-8)):
        return QPResult(INFEASIBLE, None, iis=[klabels[i] for i in np.flatnonzero(y > 0)],
                        labels=klabels)
    active = [klabels[i] for i in np.flatnonzero(mu > 0)]
    return QPResult(OPTIMAL, u_nom + x, mu, active, [], kkt, klabels)


@dataclass
class LmiQp:
    """``min ||u - u_nom||^2  s.t.  A0 + sum_j A_j u_j >= 0,  u in input_set``."""

    A0: np.ndarray
    A: list
    u_nom: np.ndarray
    input_set: Optional[InputSet] = None
    tol_feas: float = 1e-7
    max_cuts: int = 200

    def __post_init__(self):
        self.A0 = as_symmat(self.A0)
        self.A = [as_symmat(Aj) for Aj in self.A]
        self.u_nom = np.asarray(self.u_nom, dtype=float).reshape(-1)
        p = self.A0.shape[0]
        if any(Aj.shape != (p, p) for Aj in self.A):
            raise InvalidParameter("all LMI coefficient matrices must share dimension p")
        if len(self.A) != self.u_nom.size:
            raise InvalidParameter(
                f"{len(self.A)} coefficient matrices for an input of length {self.u_nom.size}")
        if self.input_set is not None and self.input_set.dim != self.u_nom.size:
            raise InvalidParameter("input set dimension does not match the input length")
        if self.tol_feas < 0 or self.max_cuts < 0:
            raise InvalidParameter("tol_feas and max_cuts must be nonnegative")

    @property
    def m(self) -> int:
        return self.u_nom.size

    def matrix(self, u) -> np.ndarray:
        M = np.array(self.A0)
        for Aj, uj in zip(self.A, np.asarray(u, dtype=float)):
            M = M + Aj * uj
        return as_symmat(M)


@dataclass
class SolveResult:
    status: str
    u: Optional[np.ndarray]
    lambda_margin: float
    cuts_used: int
    certificate: list = field(default_factory=list)
    log: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _ball_list(input_set, m):
    if input_set is None:
        return []
    if isinstance(input_set, ProductSet):
        return input_set.ball_blocks()
    return [(np.arange(m), c, r) for c, r in input_set.balls()]


def solve_safety_qp(prob: LmiQp) -> SolveResult:
    """Cutting-plane solve of an ``LmiQp``.

    ``log`` holds one entry per outer iteration: the iterate, its minimum
    eigenvalue, and the cut added (if any).
    """
    m = prob.m
    balls = _ball_list(prob.input_set, m)
    cuts: list = []
    lmi_cuts = 0
    history: list = []
    ball_budget = max(prob.max_cuts, 50)
    ball_cuts = 0
    while True:
        qp = qp_with_linear_cuts(prob.u_nom, cuts, prob.input_set)
        if qp.status != OPTIMAL:
            cert = [cuts[k] for kind, k in qp.iis if kind == "cut"]
            log.debug("cut QP infeasible after %d cuts", lmi_cuts)
            return SolveResult(INFEASIBLE, None, float("nan"), lmi_cuts, cert, history)
        u = qp.u
        violated = None
        for idx, c, r in balls:
            dist = np.linalg.norm(u[idx] - c)
            if dist > r + 1e-9 * (1.0 + r):
                violated = (idx, c, r, dist)
                break
        if violated is not None:
            if ball_cuts >= ball_budget:
                return SolveResult(CUT_LIMIT, u, float("nan"), lmi_cuts, [], history)
            idx, c, r, dist = violated
            nvec = (u[idx] - c) / dist
            a = np.zeros(m)
            a[idx] = -nvec
            cuts.append((a, -r - float(nvec @ c)))
            ball_cuts += 1
            continue
        lam, w = lambda_min(prob.matrix(u))
        entry = {"u": u.copy(), "lambda_min": lam, "cut": None}
        history.append(entry)
        if lam >= -prob.tol_feas:
            return SolveResult(OPTIMAL, u, lam, lmi_cuts, [], history)
        if lmi_cuts >= prob.max_cuts:
            return SolveResult(CUT_LIMIT, u, lam, lmi_cuts, [], history)
        a = np.array([w @ Aj @ w for Aj in prob.A])
        b = -float(w @ prob.A0 @ w)
        cuts.append((a, b))
        entry["cut"] = (a.copy(), b)
        lmi_cuts += 1
        log.debug("cut %d: lambda_min=%.3e a=%s b=%.3e", lmi_cuts, lam, a, b)


ADV_WORST_DIRECTION = "worst-direction"
ADV_VERTEX_ENUM = "vertex-enum"


def adversary_input(sys: MultiAgentSystem, sm: SafetyModel, x, j: int,
                    strategy: str = ADV_WORST_DIRECTION) -> np.ndarray:
    """Input applied by adversarial agent ``j`` at state ``x``.

    Uses the lowest cascade level in which inputs appear (H itself when the
    relative degree is one).  ``worst-direction`` minimizes the quadratic
    form along the minimum eigenvector of that level; ``vertex-enum``
    picks the input-set vertex that minimizes the smallest eigenvalue of the
    adversary's own contribution.
    """
    if j not in sys.adversaries:
        raise ModelError(f"agent {j} is not adversarial")
    casc = sm.top()
    x = np.asarray(x, dtype=float).reshape(-1)
    cols = [as_symmat(M) for M in casc.lie_G_top(x)]
    sl = sys.input_slices()[j]
    mine = cols[sl]
    uset = sys.agents[j].input_set
    if strategy == ADV_WORST_DIRECTION:
        _, w = lambda_min(eval_cascade(sm, x, casc.r - 1))
        c = np.array([w @ M @ w for M in mine])
        scale = np.array([1.0 + np.abs(M).max() for M in mine])
        c[np.abs(c) <= 1e-13 * scale] = 0.0
        return uset.argmin_linear(c)
    if strategy == ADV_VERTEX_ENUM:
        if not uset.is_linear:
            raise UnsupportedStrategy("vertex-enum adversary needs a box or polytope input set")
        if all(not np.any(M) for M in mine):
            return uset.center()
        verts = uset.vertices()
        scores = []
        for v in verts:
            S = np.zeros_like(mine[0])
            for M, vl in zip(mine, v):
                S = S + M * vl
            scores.append(lambda_min(S)[0])
        return verts[int(np.argmin(scores))].copy()
    raise UnsupportedStrategy(f"unknown adversary strategy {strategy!r}")
