"""Admissible input sets: boxes, polytopes, balls and intersections of these.

Every set exposes its linear part as ``C u <= d`` and its curved part as a
list of balls, which is all the cutting-plane solver needs.  Support
functions and vertex enumeration back the adversary and the input-norm bound.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog, minimize

from .errors import InvalidParameter, UnboundedSet, UnsupportedStrategy

_FEAS_TOL = 1e-9


class InputSet:
    """Common interface of the convex compact input sets."""

    kind = "abstract"
    dim: int

    def linear_constraints(self) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros((0, self.dim)), np.zeros(0)

    def balls(self) -> list[tuple[np.ndarray, float]]:
        return []

    def contains(self, u, tol: float = _FEAS_TOL) -> bool:
        u = np.asarray(u, dtype=float)
        C, d = self.linear_constraints()
        if C.size and np.any(C @ u > d + tol):
            return False
        return all(np.linalg.norm(u - c) <= r + tol for c, r in self.balls())

    def vertices(self) -> np.ndarray:
        raise UnsupportedStrategy(f"vertex enumeration is not available for {self.kind} sets")

    @property
    def is_linear(self) -> bool:
        return not self.balls()

    def center(self) -> np.ndarray:
        raise NotImplementedError

    def sup_norm(self) -> float:
        raise NotImplementedError

    def argmin_linear(self, c) -> np.ndarray:
        """A minimizer of ``c @ u`` over the set; the center when ``c`` is zero."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class Box(InputSet):
    kind = "box"

    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise InvalidParameter("box bounds must be vectors of equal length")
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise UnboundedSet("box bounds must be finite")
        if np.any(self.lo > self.hi):
            raise InvalidParameter("box requires lo <= hi")
        self.dim = self.lo.size

    def linear_constraints(self):
        eye = np.eye(self.dim)
        return np.vstack([eye, -eye]), np.concatenate([self.hi, -self.lo])

    def contains(self, u, tol=_FEAS_TOL):
        u = np.asarray(u, dtype=float)
        return bool(np.all(u <= self.hi + tol) and np.all(u >= self.lo - tol))

    def vertices(self):
        return np.array(list(itertools.product(*zip(self.lo, self.hi))), dtype=float)

    def center(self):
        return 0.5 * (self.lo + self.hi)

    def sup_norm(self):
        return float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))

    def argmin_linear(self, c):
        c = np.asarray(c, dtype=float)
        return np.where(c > 0, self.lo, np.where(c < 0, self.hi, self.center()))

    def to_dict(self):
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}

    def __repr__(self):
        return f"Box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


class Ball(InputSet):
    kind = "ball"

    def __init__(self, center, radius):
        self._center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        if not self.radius > 0 or not np.isfinite(self.radius):
            raise InvalidParameter("ball radius must be positive and finite")
        self.dim = self._center.size

    def balls(self):
        return [(self._center, self.radius)]

    def center(self):
        return self._center.copy()

    def sup_norm(self):
        return float(np.linalg.norm(self._center) + self.radius)

    def argmin_linear(self, c):
        c = np.asarray(c, dtype=float)
        nc = np.linalg.norm(c)
        if nc == 0:
            return self.center()
        return self._center - self.radius * c / nc

    def to_dict(self):
        return {"kind": "ball", "center": self._center.tolist(), "radius": self.radius}

    def __repr__(self):
        return f"Ball(center={self._center.tolist()}, radius={self.radius})"


def _enumerate_vertices(C, d, tol=1e-9):
    m = C.shape[1]
    verts = []
    for rows in itertools.combinations(range(C.shape[0]), m):
        sub = C[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, d[list(rows)])
        if np.all(C @ v <= d + tol * (1 + np.abs(d))):
            if not any(np.allclose(v, w, atol=1e-10) for w in verts):
                verts.append(v)
    return np.array(verts, dtype=float).reshape(-1, m)


class Polytope(InputSet):
    """Bounded polyhedron ``{u : C u <= d}``."""

    kind = "polytope"

    def __init__(self, C, d):
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        self.d = np.atleast_1d(np.asarray(d, dtype=float))
        if self.C.shape[0] != self.d.size:
            raise InvalidParameter("polytope needs one right-hand side per row of C")
        self.dim = self.C.shape[1]
        self._check_bounded()
        self._verts = None

    def _check_bounded(self):
        bounds = [(None, None)] * self.dim
        for j in range(self.dim):
            for sgn in (1.0, -1.0):
                c = np.zeros(self.dim)
                c[j] = -sgn
                res = linprog(c, A_ub=self.C, b_ub=self.d, bounds=bounds, method="highs")
                if res.status == 2:
                    raise InvalidParameter("polytope is empty")
                if res.status == 3:
                    raise UnboundedSet(f"polytope is unbounded along {'+' if sgn > 0 else '-'}e_{j}")
                if res.status != 0:
                    raise InvalidParameter(f"support-function check failed: {res.message}")

    def linear_constraints(self):
        return self.C.copy(), self.d.copy()

    def vertices(self):
        if self._verts is None:
            self._verts = _enumerate_vertices(self.C, self.d)
        return self._verts.copy()

    def center(self):
        return self.vertices().mean(axis=0)

    def sup_norm(self):
        return float(np.max(np.linalg.norm(self.vertices(), axis=1)))

    def argmin_linear(self, c):
        c = np.asarray(c, dtype=float)
        if not np.any(c):
            return self.center()
        verts = self.vertices()
        return verts[int(np.argmin(verts @ c))].copy()

    def to_dict(self):
        return {"kind": "polytope", "C": self.C.tolist(), "d": self.d.tolist()}


class Intersection(InputSet):
    kind = "intersection"

    def __init__(self, parts):
        parts = list(parts)
        if not parts:
            raise InvalidParameter("intersection needs at least one set")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise InvalidParameter("intersected sets must share a dimension")
        self.parts = parts
        self.dim = dims.pop()
        self._center = None
        if not self.contains(self.center(), tol=1e-6):
            raise InvalidParameter("intersection is empty")

    def linear_constraints(self):
        Cs, ds = zip(*(p.linear_constraints() for p in self.parts))
        return np.vstack(Cs), np.concatenate(ds)

    def balls(self):
        return [b for p in self.parts for b in p.balls()]

    def _as_polytope(self):
        return Polytope(*self.linear_constraints())

    def vertices(self):
        if not self.is_linear:
            raise UnsupportedStrategy("vertex enumeration is not available for sets with a ball")
        return self._as_polytope().vertices()

    def _minimize(self, fun, x0):
        C, d = self.linear_constraints()
        cons = []
        if C.size:
            cons.append({"type": "ineq", "fun": lambda u: d - C @ u, "jac": lambda u: -C})
        for c, r in self.balls():
            cons.append({"type": "ineq", "fun": lambda u, c=c, r=r: r * r - np.sum((u - c) ** 2),
                         "jac": lambda u, c=c: -2.0 * (u - c)})
        res = minimize(fun, x0, jac=True, constraints=cons, method="SLSQP",
                       options={"ftol": 1e-12, "maxiter": 500})
        return res.x

    def center(self):
        if self._center is None:
            if self.is_linear:
                self._center = self._as_polytope().center()
            else:
                target = np.mean([p.center() for p in self.parts], axis=0)
                self._center = self._minimize(
                    lambda u: (np.sum((u - target) ** 2), 2.0 * (u - target)), target)
        return self._center.copy()

    def sup_norm(self):
        if self.is_linear:
            return self._as_polytope().sup_norm()
        return min(p.sup_norm() for p in self.parts)

    def argmin_linear(self, c):
        c = np.asarray(c, dtype=float)
        if not np.any(c):
            return self.center()
        if self.is_linear:
            return self._as_polytope().argmin_linear(c)
        return self._minimize(lambda u: (float(c @ u), c), self.center())

    def to_dict(self):
        return {"kind": "intersection", "parts": [p.to_dict() for p in self.parts]}


class ProductSet(InputSet):
    """Cartesian product of per-agent sets, stacked in the given order."""

    kind = "product"

    def __init__(self, sets):
        self.sets = list(sets)
        self.dims = [s.dim for s in self.sets]
        self.offsets = np.concatenate([[0], np.cumsum(self.dims)]).astype(int)
        self.dim = int(self.offsets[-1])

    def blocks(self, u):
        u = np.asarray(u, dtype=float)
        return [u[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def linear_constraints(self):
        rows, rhs = [], []
        for s, off in zip(self.sets, self.offsets):
            C, d = s.linear_constraints()
            if C.size:
                block = np.zeros((C.shape[0], self.dim))
                block[:, off:off + s.dim] = C
                rows.append(block)
                rhs.append(d)
        if not rows:
            return np.zeros((0, self.dim)), np.zeros(0)
        return np.vstack(rows), np.concatenate(rhs)

    def balls(self):
        # balls live in sub-blocks; the solver expands them with the index map
        raise TypeError("use ball_blocks() on a product set")

    def ball_blocks(self):
        out = []
        for s, off in zip(self.sets, self.offsets):
            for c, r in s.balls():
                out.append((np.arange(off, off + s.dim), c, r))
        return out

    @property
    def is_linear(self):
        return all(s.is_linear for s in self.sets)

    def contains(self, u, tol=_FEAS_TOL):
        return all(s.contains(b, tol) for s, b in zip(self.sets, self.blocks(u)))

    def center(self):
        return np.concatenate([s.center() for s in self.sets]) if self.sets else np.zeros(0)

    def sup_norm(self):
        return float(np.sqrt(sum(s.sup_norm() ** 2 for s in self.sets)))

    def argmin_linear(self, c):
        return np.concatenate([s.argmin_linear(b) for s, b in zip(self.sets, self.blocks(c))])

    def vertices(self):
        per = [s.vertices() for s in self.sets]
        return np.array([np.concatenate(v) for v in itertools.product(*per)], dtype=float)

    def to_dict(self):
        return {"kind": "product", "sets": [s.to_dict() for s in self.sets]}


def as_product(input_set) -> ProductSet:
    return input_set if isinstance(input_set, ProductSet) else ProductSet([input_set])


def input_set_from_dict(data: dict) -> InputSet:
    kind = data.get("kind")
    if kind == "box":
        return Box(data["lo"], data["hi"])
    if kind == "ball":
        return Ball(data["center"], data["radius"])
    if kind == "polytope":
        return Polytope(data["C"], data["d"])
    if kind == "intersection":
        return Intersection([input_set_from_dict(p) for p in data["parts"]])
    if kind == "product":
        return ProductSet([input_set_from_dict(p) for p in data["sets"]])
    raise InvalidParameter(f"unknown input-set kind {kind!r}")
