"""Smoothness and norm constants, and the sampled-data margins delta / delta_r.

Norm convention for the input-coefficient map ``u -> sum_j L_{G_j} H u_j``:
constants are taken with respect to ``sqrt(sum_j ||L_{G_j} H||_2^2)``, which
upper-bounds the induced (2 -> spectral) operator norm by Cauchy-Schwarz.
Analytic and estimated constants both use it, so they are comparable.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidParameter, ModelError
from .sets import InputSet
from .symmat import matrix_2norm, spectral_norm
from .system import MultiAgentSystem, SafetyModel, eval_H

ANALYTIC = "analytic"
ESTIMATED = "estimated"
DEFAULT_INFLATION = 1.5

_CONSTANTS = ("L_H", "L_FH", "L_GH", "b_F", "b_G", "b_u", "Lhat_FH", "Lhat_GH")


@dataclass(frozen=True)
class BoundSet:
    L_H: float
    L_FH: float
    L_GH: float
    b_F: float
    b_G: float
    b_u: float
    Lhat_FH: Optional[float] = None
    Lhat_GH: Optional[float] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in _CONSTANTS:
            v = getattr(self, name)
            if v is None:
                continue
            if not np.isfinite(v) or v < 0:
                raise InvalidParameter(f"{name} must be finite and nonnegative, got {v}")
            object.__setattr__(self, name, float(v))
        prov = {k: self.provenance.get(k, ANALYTIC) for k in _CONSTANTS
                if getattr(self, k) is not None}
        if any(p not in (ANALYTIC, ESTIMATED) for p in prov.values()):
            raise InvalidParameter(f"unknown provenance in {prov}")
        object.__setattr__(self, "provenance", prov)

    @property
    def has_high_order(self) -> bool:
        return self.Lhat_FH is not None and self.Lhat_GH is not None

    def to_dict(self) -> dict:
        return {k: {"value": getattr(self, k), "provenance": self.provenance[k]}
                for k in _CONSTANTS if getattr(self, k) is not None}

    @classmethod
    def from_dict(cls, data: dict) -> "BoundSet":
        values, prov = {}, {}
        for k, v in data.items():
            if k not in _CONSTANTS:
                raise InvalidParameter(f"unknown bound constant {k!r}")
            if isinstance(v, dict):
                values[k] = v["value"]
                prov[k] = v.get("provenance", ANALYTIC)
            else:
                values[k] = v
        missing = [k for k in _CONSTANTS[:6] if k not in values]
        if missing:
            raise InvalidParameter(f"bound set is missing {missing}")
        return cls(**values, provenance=prov)

    def with_input_bound(self, b_u: float) -> "BoundSet":
        return replace(self, b_u=b_u)


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned compact domain D containing the safe set."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise InvalidParameter("domain box requires lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, n: int, half_width: float) -> "DomainBox":
        return cls(-half_width * np.ones(n), half_width * np.ones(n))

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, x, tol=0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random((count, self.dim))

    def vertices(self):
        import itertools
        return np.array(list(itertools.product(*zip(self.lo, self.hi))), dtype=float)


def input_norm_bound(sets: Sequence[InputSet]) -> float:
    """Upper bound on the stacked input norm: root-sum-square of per-set sups."""
    return float(np.sqrt(sum(s.sup_norm() ** 2 for s in sets)))


def _check_margin_args(dt, c_alpha):
    if not dt > 0:
        raise InvalidParameter(f"sampling interval must be positive, got {dt}")
    if not c_alpha > 0:
        raise InvalidParameter(f"c_alpha must be positive, got {c_alpha}")


def delta(b: BoundSet, dt: float, c_alpha: float) -> float:
    """Worst-case drift of Psi over one hold interval."""
    _check_margin_args(dt, c_alpha)
    return dt * (b.L_FH + b.L_GH * b.b_u + c_alpha * b.L_H) * (b.b_F + b.b_G * b.b_u)


def delta_r(b: BoundSet, dt: float, c_alpha_r: float) -> float:
    """High-order analogue of ``delta`` using the hatted constants."""
    _check_margin_args(dt, c_alpha_r)
    if not b.has_high_order:
        raise InvalidParameter("delta_r needs Lhat_FH and Lhat_GH")
    return dt * (b.Lhat_FH + b.Lhat_GH * b.b_u + c_alpha_r * b.L_H) * (b.b_F + b.b_G * b.b_u)


def stacked_norm(mats) -> float:
    """``sqrt(sum_j ||M_j||_2^2)``; the norm used for input-coefficient maps."""
    return float(np.sqrt(sum(spectral_norm(M) ** 2 for M in mats))) if len(mats) else 0.0


def _safe(fn, x, what):
    try:
        return fn(x)
    except ModelError:
        raise
    except Exception as exc:
        raise ModelError(f"{what} failed at x={np.round(x, 6).tolist()}: {exc}") from exc


def _pairs(dom: DomainBox, rng: np.random.Generator, samples: int, local_scale: float):
    # one draw per sample keeps the sample set a prefix of any larger run
    raw = rng.random((samples, 2, dom.dim))
    width = dom.hi - dom.lo
    xs = dom.lo + width * raw[:, 0]
    partners = np.clip(xs + local_scale * width * (2.0 * raw[:, 1] - 1.0), dom.lo, dom.hi)
    return xs, partners


def estimate_constants(sys: MultiAgentSystem, sm: SafetyModel, dom: DomainBox,
                       samples: int = 2000, inflation: float = DEFAULT_INFLATION,
                       rng=None, local_scale: float = 0.05) -> BoundSet:
    """Monte-Carlo estimates of every constant on ``dom``, multiplied by ``inflation``.

    Lipschitz constants are maximal difference quotients over sampled pairs:
    each sample with a nearby partner, and consecutive samples with each other.
    """
    if samples < 2:
        raise InvalidParameter("need at least two samples")
    if inflation < 1:
        raise InvalidParameter("inflation must be >= 1")
    if dom.dim != sys.n:
        raise InvalidParameter(f"domain has dimension {dom.dim}, system has n = {sys.n}")
    rng = np.random.default_rng(rng)
    xs, partners = _pairs(dom, rng, samples, local_scale)
    casc = sm.cascade

    def features(x):
        out = {
            "H": eval_H(sm, x),
            "FH": np.asarray(_safe(sm.lie_F_H, x, "L_F H"), dtype=float),
            "GH": [np.asarray(M, dtype=float) for M in _safe(sm.lie_G_H, x, "L_G H")],
            "F": _safe(sys.drift, x, "F"),
            "G": _safe(sys.input_matrix, x, "G"),
        }
        if casc is not None:
            out["FP"] = np.asarray(_safe(casc.lie_F_top, x, "L_F Psi"), dtype=float)
            out["GP"] = [np.asarray(M, dtype=float) for M in _safe(casc.lie_G_top, x, "L_G Psi")]
        return out

    def diff(a, b, key):
        if key in ("GH", "GP"):
            return stacked_norm([Ma - Mb for Ma, Mb in zip(a[key], b[key])])
        return spectral_norm(a[key] - b[key])

    keys = ["H", "FH", "GH"] + (["FP", "GP"] if casc is not None else [])
    lips = dict.fromkeys(keys, 0.0)
    b_F = b_G = 0.0
    feats = [features(x) for x in xs]
    for fa, x in zip(feats, xs):
        b_F = max(b_F, float(np.linalg.norm(fa["F"])))
        b_G = max(b_G, matrix_2norm(fa["G"]))
    pair_list = [(i, None) for i in range(samples)] + [(i, i + 1) for i in range(samples - 1)]
    for i, j in pair_list:
        x, fa = xs[i], feats[i]
        if j is None:
            y, fb = partners[i], features(partners[i])
        else:
            y, fb = xs[j], feats[j]
        dist = float(np.linalg.norm(x - y))
        if dist < 1e-12:
            continue
        for k in keys:
            lips[k] = max(lips[k], diff(fa, fb, k) / dist)

    b_u = input_norm_bound([a.input_set for a in sys.agents])
    vals = dict(L_H=lips["H"], L_FH=lips["FH"], L_GH=lips["GH"], b_F=b_F, b_G=b_G)
    if casc is not None:
        vals.update(Lhat_FH=lips["FP"], Lhat_GH=lips["GP"])
    vals = {k: inflation * v for k, v in vals.items()}
    prov = {k: ESTIMATED for k in vals}
    prov["b_u"] = ANALYTIC
    return BoundSet(**vals, b_u=b_u, provenance=prov)


