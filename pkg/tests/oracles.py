"""Independent reference computations used by the tests.

Nothing here calls into the package's solver or eigensolver: eigenvalues
come from closed forms or LAPACK, QPs from KKT enumeration or grids, and
trajectories of linear systems from the matrix exponential.
"""
import numpy as np
from scipy.linalg import expm


def lam_min_batch(M):
    """Smallest eigenvalue of a stack of symmetric 1x1, 2x2 or 3x3 matrices (closed form)."""
    M = np.asarray(M, dtype=float)
    p = M.shape[-1]
    if p == 1:
        return M[..., 0, 0]
    if p == 2:
        a, b, c = M[..., 0, 0], M[..., 0, 1], M[..., 1, 1]
        return 0.5 * (a + c) - np.hypot(0.5 * (a - c), b)
    if p != 3:
        return np.linalg.eigvalsh(M)[..., 0]
    off = M[..., 0, 1] ** 2 + M[..., 0, 2] ** 2 + M[..., 1, 2] ** 2
    q = np.trace(M, axis1=-2, axis2=-1) / 3.0
    d = np.stack([M[..., i, i] - q for i in range(3)], axis=-1)
    s = np.sqrt((np.sum(d ** 2, axis=-1) + 2.0 * off) / 6.0)
    safe = np.where(s > 0, s, 1.0)
    Bm = (M - q[..., None, None] * np.eye(3)) / safe[..., None, None]
    r = np.clip(np.linalg.det(Bm) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    return np.where(s > 0, q + 2.0 * s * np.cos(phi + 2.0 * np.pi / 3.0), q)


def random_feasible_lmi(rng, m=None, p=None):
    """Random instance ``(A0, [A_j], u_nom)`` over the box [-1, 1]^m with a strictly feasible point."""
    m = int(rng.integers(1, 3)) if m is None else m
    p = int(rng.integers(1, 4)) if p is None else p

    def sym():
        X = rng.normal(size=(p, p))
        return 0.5 * (X + X.T)
    A = [sym() for _ in range(m)]
    u_feas = rng.uniform(-0.8, 0.8, m)
    B = sym()
    M = B + sum(Aj * uj for Aj, uj in zip(A, u_feas))
    A0 = B - (np.linalg.eigvalsh(M)[0] - rng.uniform(0.05, 0.3)) * np.eye(p)
    u_nom = rng.uniform(-1.5, 1.5, m)
    return A0, A, u_nom


def grid_lmi_qp(A0, A, u_nom, h=1e-3, ring=0.02, tol=0.0, coarse=0.02):
    """Closest point to ``u_nom`` on the h-grid of [-1, 1]^m where the LMI holds.

    Grid points are scanned in rings of growing distance.  A coarse pass
    first rules out cells: lambda_min(A0 + sum A_j u_j) is Lipschitz in u
    with constant sqrt(sum ||A_j||^2), so a coarse point far enough below
    zero proves its whole cell infeasible.  The scan starts at the nearest
    cell that survives.
    """
    m = len(A)
    axis = np.round(np.arange(-1.0, 1.0 + h / 2, h), 12)
    Astack = np.stack(A)
    if m == 1:
        pts = axis[:, None]
        vals = lam_min_batch(A0 + np.tensordot(pts, Astack, axes=1))
        ok = vals >= -tol
        if not ok.any():
            return None
        d = np.abs(pts[:, 0] - u_nom[0])
        d[~ok] = np.inf
        return pts[int(np.argmin(d))]
    lip = float(np.sqrt(sum(np.linalg.norm(Aj, 2) ** 2 for Aj in A)))
    cax = np.arange(-1.0, 1.0 + coarse / 2, coarse)
    c0, c1 = np.meshgrid(cax, cax, indexing="ij")
    cpts = np.column_stack([c0.ravel(), c1.ravel()])
    half = coarse / np.sqrt(2.0)
    alive = lam_min_batch(A0 + np.tensordot(cpts, Astack, axes=1)) >= -tol - lip * half
    if not alive.any():
        return None
    d_cells = float(np.min(np.linalg.norm(cpts[alive] - u_nom, axis=1))) - half
    d_box = float(np.linalg.norm(u_nom - np.clip(u_nom, -1.0, 1.0)))
    r_lo = max(d_box, d_cells, 0.0)
    r_hi = r_lo + ring
    reach = d_box + 2.0 * np.sqrt(2.0) + ring
    while r_lo <= reach:
        sel = [axis[(axis >= u_nom[k] - r_hi) & (axis <= u_nom[k] + r_hi)] for k in range(2)]
        g0, g1 = np.meshgrid(sel[0], sel[1], indexing="ij")
        pts = np.column_stack([g0.ravel(), g1.ravel()])
        dist = np.linalg.norm(pts - u_nom, axis=1)
        band = (dist >= r_lo) & (dist < r_hi)
        pts, dist = pts[band], dist[band]
        if len(pts):
            vals = lam_min_batch(A0 + np.tensordot(pts, Astack, axes=1))
            ok = vals >= -tol
            if ok.any():
                i = np.flatnonzero(ok)[int(np.argmin(dist[ok]))]
                return pts[i]
        r_lo, r_hi = r_hi, r_hi + ring
    return None


def box_halfspace_qp(u_nom, a, b, lo, hi, iters=200):
    """``min ||u - u_nom||^2  s.t.  a.u >= b, lo <= u <= hi`` by KKT (None if infeasible).

    With the constraint active the minimizer is ``clip(u_nom + nu a)`` for the
    multiplier ``nu >= 0`` solving ``a.u(nu) = b``; that map is monotone in nu.
    """
    u_nom, a = np.asarray(u_nom, float), np.asarray(a, float)
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    u0 = np.clip(u_nom, lo, hi)
    if a @ u0 >= b:
        return u0
    best = float(np.sum(np.where(a > 0, a * hi, a * lo)))
    if best < b:
        return None
    def u_of(nu):
        return np.clip(u_nom + nu * a, lo, hi)
    lo_nu, hi_nu = 0.0, 1.0
    while a @ u_of(hi_nu) < b:
        hi_nu *= 2.0
        if hi_nu > 1e12:
            break
    for _ in range(iters):
        mid = 0.5 * (lo_nu + hi_nu)
        if a @ u_of(mid) < b:
            lo_nu = mid
        else:
            hi_nu = mid
    return u_of(hi_nu)


def linear_zoh_endpoint(A, B, x0, u, T):
    """Exact endpoint of ``xdot = A x + B u`` with u held for time T."""
    n, m = B.shape
    Z = np.zeros((n + m, n + m))
    Z[:n, :n], Z[:n, n:] = A, B
    E = expm(Z * T)
    z0 = np.concatenate([x0, u])
    return (E @ z0)[:n]


def diag_scalar_control(spec, x, u_nom, c_alpha, margin, adversarial):
    """Per-entry scalar sampled-data CBF filter for a diagonal obstacle scenario.

    Single-integrator agents with ``h_i = ||x_i - o_i||^2 - r_i^2`` and box
    input sets.  Each normal agent solves its own one-constraint QP
    ``2 (x_i - o_i) . u_i + c h_i >= margin``.  For a diagonal H the minimum
    eigenvector is the unit vector of the smallest entry, so an adversary
    pushes against its own entry only when that entry is the smallest; it
    otherwise sits at the box center.  Returns (status, u).
    """
    ents = spec.safety["entries"]
    agents = spec.agents
    for a in agents:
        if a.kind != "single_integrator":
            raise ValueError("scalar oracle covers single integrators only")
    offs = np.cumsum([0] + [a.state_dim for a in agents])
    h, grad = [], []
    for i, e in enumerate(ents):
        j = e["agent"]
        xi = x[offs[j]:offs[j + 1]]
        o = np.asarray(e["center"], float)
        h.append(float((xi - o) @ (xi - o) - e["radius"] ** 2))
        grad.append((j, 2.0 * (xi - o)))
    k_min = int(np.argmin(h))
    adv = set(spec.adversaries) if adversarial else set()
    u = np.array(u_nom, dtype=float)
    for i, (j, g) in enumerate(grad):
        lo, hi = agents[j].input_set.lo, agents[j].input_set.hi
        sl = slice(offs[j], offs[j + 1])
        if j in adv:
            if i == k_min:
                u[sl] = np.where(g > 0, lo, np.where(g < 0, hi, 0.5 * (lo + hi)))
            else:
                u[sl] = 0.5 * (lo + hi)
            if g @ u[sl] + c_alpha * h[i] < margin - 1e-12:
                return "Infeasible", None
            continue
        ui = box_halfspace_qp(u_nom[sl], g, margin - c_alpha * h[i], lo, hi)
        if ui is None:
            return "Infeasible", None
        u[sl] = ui
    return "Optimal", u
