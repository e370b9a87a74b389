"""Multi-agent control-affine dynamics and matrix-valued safety functions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ModelError
from .sets import InputSet, ProductSet
from .symmat import as_symmat

Vector = np.ndarray
MatFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AgentModel:
    """One agent: ``xdot = f(x) + g(x) u`` with ``u`` in ``input_set``."""

    state_dim: int
    input_dim: int
    f: Callable[[Vector], Vector]
    g: Callable[[Vector], np.ndarray]
    input_set: InputSet
    name: str = ""

    def __post_init__(self):
        if self.input_set.dim != self.input_dim:
            raise ModelError(
                f"agent {self.name or '?'}: input set has dimension {self.input_set.dim}, "
                f"expected {self.input_dim}")

    def drift(self, x):
        out = np.asarray(self.f(x), dtype=float).reshape(-1)
        if out.shape != (self.state_dim,):
            raise ModelError(f"drift returned shape {out.shape}, expected ({self.state_dim},)")
        return out

    def input_matrix(self, x):
        out = np.asarray(self.g(x), dtype=float).reshape(self.state_dim, -1)
        if out.shape != (self.state_dim, self.input_dim):
            raise ModelError(
                f"input matrix has shape {out.shape}, expected ({self.state_dim}, {self.input_dim})")
        return out


@dataclass(frozen=True)
class MultiAgentSystem:
    agents: tuple
    adversaries: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        adv = frozenset(int(j) for j in self.adversaries)
        if any(j < 0 or j >= len(self.agents) for j in adv):
            raise ModelError(f"adversary indices {sorted(adv)} out of range for {len(self.agents)} agents")
        object.__setattr__(self, "adversaries", adv)

    @property
    def n(self) -> int:
        return sum(a.state_dim for a in self.agents)

    @property
    def m(self) -> int:
        return sum(a.input_dim for a in self.agents)

    @property
    def normal(self) -> list[int]:
        return [i for i in range(len(self.agents)) if i not in self.adversaries]

    @property
    def adversarial(self) -> list[int]:
        return sorted(self.adversaries)

    def state_slices(self) -> list[slice]:
        off = np.concatenate([[0], np.cumsum([a.state_dim for a in self.agents])]).astype(int)
        return [slice(a, b) for a, b in zip(off[:-1], off[1:])]

    def input_slices(self) -> list[slice]:
        off = np.concatenate([[0], np.cumsum([a.input_dim for a in self.agents])]).astype(int)
        return [slice(a, b) for a, b in zip(off[:-1], off[1:])]

    def input_indices(self, agent_ids: Sequence[int]) -> np.ndarray:
        sl = self.input_slices()
        idx = [np.arange(sl[i].start, sl[i].stop) for i in agent_ids]
        return np.concatenate(idx).astype(int) if idx else np.zeros(0, dtype=int)

    def input_set(self, agent_ids: Optional[Sequence[int]] = None) -> ProductSet:
        ids = range(len(self.agents)) if agent_ids is None else agent_ids
        return ProductSet([self.agents[i].input_set for i in ids])

    def split_state(self, x) -> list[np.ndarray]:
        x = self._check_state(x)
        return [x[s] for s in self.state_slices()]

    def _check_state(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.n:
            raise ModelError(f"state has length {x.size}, expected {self.n}")
        return x

    def _check_input(self, u):
        u = np.asarray(u, dtype=float).reshape(-1)
        if u.size != self.m:
            raise ModelError(f"input has length {u.size}, expected {self.m}")
        return u

    def drift(self, x) -> np.ndarray:
        return np.concatenate([a.drift(xi) for a, xi in zip(self.agents, self.split_state(x))])

    def input_matrix(self, x) -> np.ndarray:
        """Block-diagonal G(x)."""
        G = np.zeros((self.n, self.m))
        for a, xi, rs, cs in zip(self.agents, self.split_state(x), self.state_slices(),
                                 self.input_slices()):
            G[rs, cs] = a.input_matrix(xi)
        return G

    def stack_inputs(self, uN, uA) -> np.ndarray:
        """Assemble the full input from normal and adversarial parts (ascending agent order)."""
        u = np.zeros(self.m)
        uN = np.asarray(uN, dtype=float).reshape(-1)
        uA = np.asarray(uA, dtype=float).reshape(-1)
        iN, iA = self.input_indices(self.normal), self.input_indices(self.adversarial)
        if uN.size != iN.size or uA.size != iA.size:
            raise ModelError(
                f"normal/adversarial inputs have lengths {uN.size}/{uA.size}, "
                f"expected {iN.size}/{iA.size}")
        u[iN], u[iA] = uN, uA
        return u


def combined_vector_field(sys: MultiAgentSystem, x, u) -> np.ndarray:
    """``F(x) + G(x) u`` assembled agent by agent."""
    xs = sys.split_state(x)
    u = sys._check_input(u)
    parts = []
    for a, xi, cs in zip(sys.agents, xs, sys.input_slices()):
        parts.append(a.drift(xi) + a.input_matrix(xi) @ u[cs])
    return np.concatenate(parts)


@dataclass(frozen=True)
class Cascade:
    """Psi_0 .. Psi_{r-1} (input free) plus the Lie pieces of Psi_{r-1}.

    ``psi[0]`` is H.  ``c_alpha`` has length r; the first r-1 gains are
    already baked into ``psi[1:]``.
    """

    r: int
    psi: tuple
    lie_F_top: MatFn
    lie_G_top: Callable[[np.ndarray], Sequence[np.ndarray]]
    c_alpha: tuple

    def __post_init__(self):
        if self.r < 1 or len(self.psi) != self.r or len(self.c_alpha) != self.r:
            raise ModelError("cascade needs r >= 1 with r psi functions and r gains")
        if any(c <= 0 for c in self.c_alpha):
            raise ModelError("cascade gains must be strictly positive")


@dataclass(frozen=True)
class SafetyModel:
    """Matrix-valued safety function ``H`` with its entry-wise Lie derivatives.

    ``lie_G_H(x)`` returns one p-by-p matrix per input column of the
    combined system.  ``c_alpha`` is the class-K gain used by ``eval_psi``.
    """

    p: int
    H: MatFn
    lie_F_H: MatFn
    lie_G_H: Callable[[np.ndarray], Sequence[np.ndarray]]
    c_alpha: float = 1.0
    cascade: Optional[Cascade] = None
    name: str = ""

    def __post_init__(self):
        if self.p < 1:
            raise ModelError("matrix dimension p must be >= 1")
        if not self.c_alpha > 0:
            raise ModelError("c_alpha must be strictly positive")

    @property
    def relative_degree(self) -> int:
        return 1 if self.cascade is None else self.cascade.r

    def top(self) -> Cascade:
        """The cascade, or the trivial r = 1 cascade built from H itself."""
        if self.cascade is not None:
            return self.cascade
        return Cascade(1, (self.H,), self.lie_F_H, self.lie_G_H, (self.c_alpha,))


def _mat(sm: SafetyModel, value, what: str) -> np.ndarray:
    try:
        M = as_symmat(value)
    except Exception as exc:
        raise ModelError(f"{what}: {exc}") from exc
    if M.shape != (sm.p, sm.p):
        raise ModelError(f"{what} has shape {M.shape}, expected ({sm.p}, {sm.p})")
    return M


def _lie_columns(sm, mats, m, what):
    mats = [_mat(sm, M, what) for M in mats]
    if m is not None and len(mats) != m:
        raise ModelError(f"{what}: got {len(mats)} input columns, expected {m}")
    return mats


def eval_H(sm: SafetyModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ModelError("state has non-finite entries")
    return _mat(sm, sm.H(x), "H(x)")


def _affine(sm, drift_term, cols, u, shift):
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != len(cols):
        raise ModelError(f"input has length {u.size}, expected {len(cols)}")
    out = drift_term + shift
    for Mj, uj in zip(cols, u):
        out = out + Mj * uj
    return as_symmat(out)


def eval_psi(sm: SafetyModel, x, u, c_alpha: Optional[float] = None) -> np.ndarray:
    """``L_F H(x) + sum_j L_{G_j} H(x) u_j + c_alpha H(x)``."""
    c = sm.c_alpha if c_alpha is None else c_alpha
    x = np.asarray(x, dtype=float).reshape(-1)
    cols = _lie_columns(sm, sm.lie_G_H(x), None, "L_G H(x)")
    return _affine(sm, _mat(sm, sm.lie_F_H(x), "L_F H(x)"), cols, u, c * eval_H(sm, x))


def eval_psi_adversarial(sm: SafetyModel, sys: MultiAgentSystem, x, uN, uA,
                         c_alpha: Optional[float] = None) -> np.ndarray:
    """Psi with the normal and adversarial input contributions summed separately."""
    return eval_psi(sm, x, sys.stack_inputs(uN, uA), c_alpha)


def eval_cascade(sm: SafetyModel, x, q: int) -> np.ndarray:
    """Psi_q(x) for 0 <= q < r."""
    casc = sm.top()
    if not 0 <= q < casc.r:
        raise ModelError(f"cascade level {q} outside 0..{casc.r - 1}")
    x = np.asarray(x, dtype=float).reshape(-1)
    return _mat(sm, casc.psi[q](x), f"Psi_{q}(x)")


def eval_psi_r(sm: SafetyModel, x, u) -> np.ndarray:
    """Top-level Psi_r(x, u); equals ``eval_psi`` when r = 1."""
    casc = sm.top()
    x = np.asarray(x, dtype=float).reshape(-1)
    cols = _lie_columns(sm, casc.lie_G_top(x), None, "L_G Psi_{r-1}(x)")
    prev = eval_cascade(sm, x, casc.r - 1)
    return _affine(sm, _mat(sm, casc.lie_F_top(x), "L_F Psi_{r-1}(x)"), cols, u,
                   casc.c_alpha[-1] * prev)
