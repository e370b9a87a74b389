"""Matrix barriers with quadratic entries over linear agent dynamics.

Each entry of H is ``x'Qx + q'x + k``.  Along a linear drift ``xdot = A x``
the entry-wise Lie derivative is again quadratic, and along an input column
``B_j`` it is affine, so the whole Psi cascade stays in closed form.  The
same structure gives exact Lipschitz constants over a box domain: the
gradient norm of a quadratic is convex, so its maximum sits at a vertex.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bounds import ANALYTIC, BoundSet, DomainBox, input_norm_bound
from .errors import ModelError
from .symmat import matrix_2norm
from .system import Cascade, SafetyModel

_MAX_VERTEX_DIM = 16


@dataclass(frozen=True)
class Quadratic:
    Q: np.ndarray
    q: np.ndarray
    k: float = 0.0

    @classmethod
    def constant(cls, n: int, k: float) -> "Quadratic":
        return cls(np.zeros((n, n)), np.zeros(n), float(k))

    def __call__(self, x):
        return float(x @ self.Q @ x + self.q @ x + self.k)

    def grad(self, x):
        return 2.0 * self.Q @ x + self.q

    def lie_drift(self, A) -> "Quadratic":
        QA = self.Q @ A
        return Quadratic(QA + QA.T, A.T @ self.q, 0.0)

    def input_coefficients(self, B):
        """(K, c) with ``L_{B_j} h(x) = K[j] @ x + c[j]``."""
        return 2.0 * B.T @ self.Q, B.T @ self.q

    def depends_on_input(self, B, tol=1e-14) -> bool:
        K, c = self.input_coefficients(B)
        return bool(np.any(np.abs(K) > tol) or np.any(np.abs(c) > tol))

    def is_constant(self) -> bool:
        return not (np.any(self.Q) or np.any(self.q))

    def __add__(self, other):
        return Quadratic(self.Q + other.Q, self.q + other.q, self.k + other.k)

    def scaled(self, s):
        return Quadratic(s * self.Q, s * self.q, s * self.k)


class QuadraticMatrixBarrier:
    """p-by-p symmetric matrix function with quadratic entries."""

    def __init__(self, entries: dict, p: int, n: int):
        self.p, self.n = p, n
        self.entries = {}
        for (a, b), form in entries.items():
            a, b = min(a, b), max(a, b)
            if not (0 <= a < p and 0 <= b < p):
                raise ModelError(f"entry ({a}, {b}) outside a {p}x{p} matrix")
            self.entries[(a, b)] = form

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        M = np.zeros((self.p, self.p))
        for (a, b), form in self.entries.items():
            M[a, b] = M[b, a] = form(x)
        return M

    def map(self, fn) -> "QuadraticMatrixBarrier":
        return QuadraticMatrixBarrier({ab: fn(f) for ab, f in self.entries.items()}, self.p, self.n)

    def lie_drift(self, A):
        return self.map(lambda f: f.lie_drift(A))

    def input_columns(self, x, B) -> list:
        x = np.asarray(x, dtype=float)
        cols = [np.zeros((self.p, self.p)) for _ in range(B.shape[1])]
        for (a, b), form in self.entries.items():
            K, c = form.input_coefficients(B)
            vals = K @ x + c
            for j, v in enumerate(vals):
                cols[j][a, b] = cols[j][b, a] = v
        return cols

    def depends_on_input(self, B) -> bool:
        return any(f.depends_on_input(B) for f in self.entries.values())

    def combine(self, other, c) -> "QuadraticMatrixBarrier":
        """``self + c * other`` entry-wise."""
        keys = set(self.entries) | set(other.entries)
        zero = Quadratic.constant(self.n, 0.0)
        return QuadraticMatrixBarrier(
            {ab: self.entries.get(ab, zero) + other.entries.get(ab, zero).scaled(c) for ab in keys},
            self.p, self.n)

    def varies_off_diagonal(self) -> bool:
        return any(a != b and not f.is_constant() for (a, b), f in self.entries.items())


def linear_system_matrices(sys_A: Sequence[np.ndarray], sys_B: Sequence[np.ndarray]):
    """Block-diagonal combined (A, B) from per-agent matrices."""
    n = sum(a.shape[0] for a in sys_A)
    m = sum(b.shape[1] for b in sys_B)
    A, B = np.zeros((n, n)), np.zeros((n, m))
    r = c = 0
    for Ai, Bi in zip(sys_A, sys_B):
        ni, mi = Bi.shape
        A[r:r + ni, r:r + ni] = Ai
        B[r:r + ni, c:c + mi] = Bi
        r, c = r + ni, c + mi
    return A, B


def cascade_levels(H: QuadraticMatrixBarrier, A, B, c_alpha: Sequence[float], max_r: int = 6):
    """Psi_0 .. Psi_{r-1} as quadratic barriers, and the relative degree r."""
    levels = [H]
    while not levels[-1].depends_on_input(B):
        if len(levels) >= max_r:
            raise ModelError(f"inputs do not appear within {max_r} derivatives of H")
        q = len(levels)
        if len(c_alpha) > 1 and q > len(c_alpha) - 1:
            raise ModelError(f"need at least {q + 1} class-K gains for this cascade")
        c = c_alpha[0] if len(c_alpha) == 1 else c_alpha[q - 1]
        levels.append(levels[-1].lie_drift(A).combine(levels[-1], c))
    return levels


def build_safety_model(H: QuadraticMatrixBarrier, A, B, c_alpha, name="") -> SafetyModel:
    """SafetyModel (with a cascade when the relative degree exceeds one)."""
    c_alpha = tuple(float(c) for c in np.atleast_1d(c_alpha))
    levels = cascade_levels(H, A, B, c_alpha)
    r = len(levels)
    if len(c_alpha) == 1:
        c_alpha = c_alpha * r
    elif len(c_alpha) != r:
        raise ModelError(f"relative degree is {r} but {len(c_alpha)} gains were given")
    lie_F = H.lie_drift(A)
    sm_kwargs = dict(p=H.p, H=H, lie_F_H=lie_F, lie_G_H=lambda x: H.input_columns(x, B),
                     c_alpha=c_alpha[0], name=name)
    if r == 1:
        return SafetyModel(**sm_kwargs)
    top = levels[-1]
    top_F = top.lie_drift(A)
    casc = Cascade(r, tuple(levels), top_F, lambda x: top.input_columns(x, B), c_alpha)
    return SafetyModel(**sm_kwargs, cascade=casc)


def _grad_norm_max(form: Quadratic, dom: DomainBox, verts) -> float:
    if form.is_constant():
        return 0.0
    if verts is not None:
        G = 2.0 * verts @ form.Q.T + form.q
        return float(np.max(np.linalg.norm(G, axis=1)))
    radius = float(np.linalg.norm(np.maximum(np.abs(dom.lo), np.abs(dom.hi))))
    return 2.0 * matrix_2norm(form.Q) * radius + float(np.linalg.norm(form.q))


def matrix_lipschitz(Hq: QuadraticMatrixBarrier, dom: DomainBox, verts=None) -> float:
    """Lipschitz constant of x -> Hq(x) in the spectral norm over ``dom``.

    Exact per entry; diagonal-only variation uses the max over entries,
    otherwise the Frobenius combination of all p^2 entries.
    """
    L = {ab: _grad_norm_max(f, dom, verts) for ab, f in Hq.entries.items()}
    if not Hq.varies_off_diagonal():
        return max(L.values(), default=0.0)
    return float(np.sqrt(sum((1 if a == b else 2) * v * v for (a, b), v in L.items())))


def input_map_lipschitz(Hq: QuadraticMatrixBarrier, B) -> float:
    """Lipschitz constant of x -> (L_{B_j} Hq(x))_j in the stacked norm."""
    total = 0.0
    for (a, b), f in Hq.entries.items():
        K, _ = f.input_coefficients(B)
        total += (1 if a == b else 2) * matrix_2norm(K) ** 2
    return float(np.sqrt(total))


def analytic_bounds(H: QuadraticMatrixBarrier, A, B, input_sets, dom: DomainBox,
                    c_alpha) -> BoundSet:
    c_alpha = tuple(np.atleast_1d(c_alpha).astype(float))
    verts = dom.vertices() if dom.dim <= _MAX_VERTEX_DIM else None
    if verts is not None:
        b_F = float(np.max(np.linalg.norm(verts @ A.T, axis=1)))
    else:
        b_F = matrix_2norm(A) * float(np.linalg.norm(np.maximum(np.abs(dom.lo), np.abs(dom.hi))))
    vals = dict(
        L_H=matrix_lipschitz(H, dom, verts),
        L_FH=matrix_lipschitz(H.lie_drift(A), dom, verts),
        L_GH=input_map_lipschitz(H, B),
        b_F=b_F,
        b_G=matrix_2norm(B),
        b_u=input_norm_bound(input_sets),
    )
    levels = cascade_levels(H, A, B, c_alpha)
    top = levels[-1]
    vals["Lhat_FH"] = matrix_lipschitz(top.lie_drift(A), dom, verts)
    vals["Lhat_GH"] = input_map_lipschitz(top, B)
    return BoundSet(**vals, provenance={k: ANALYTIC for k in vals})


def obstacle_entry(n: int, pos_idx, center, radius) -> Quadratic:
    """``||x[pos_idx] - center||^2 - radius^2``."""
    P = np.zeros((len(pos_idx), n))
    P[np.arange(len(pos_idx)), pos_idx] = 1.0
    o = np.asarray(center, dtype=float)
    return Quadratic(P.T @ P, -2.0 * P.T @ o, float(o @ o - radius ** 2))


def separation_entry(n: int, pos_a, pos_b, distance) -> Quadratic:
    """``||x[pos_a] - x[pos_b]||^2 - distance^2``."""
    if len(pos_a) != len(pos_b):
        raise ModelError("separated agents must have positions of equal dimension")
    S = np.zeros((len(pos_a), n))
    S[np.arange(len(pos_a)), pos_a] += 1.0
    S[np.arange(len(pos_b)), pos_b] -= 1.0
    return Quadratic(S.T @ S, np.zeros(n), -float(distance) ** 2)
