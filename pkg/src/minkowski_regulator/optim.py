"""Dense LP (two-phase simplex) and min-norm QP (least-distance via NNLS).

Both solvers target the small, dense instances produced by the polytope
algebra: a handful of variables and at most a few thousand constraints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, Infeasible

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_PIVOT_TOL = 1e-11
_BLAND_AFTER = 12  # consecutive degenerate pivots before switching to Bland's rule


@dataclass(frozen=True)
class LinearProgram:
    """maximize objective @ x subject to G @ x <= h, x free."""

    objective: np.ndarray
    G: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.objective, dtype=float))
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if G.shape[0] == 0:
            raise ValueError("a linear program needs at least one constraint")
        if G.shape != (h.size, c.size):
            raise DimensionMismatch(
                f"G has shape {G.shape}, expected ({h.size}, {c.size})")
        if not (np.isfinite(c).all() and np.isfinite(G).all() and np.isfinite(h).all()):
            raise ValueError("linear program coefficients must be finite")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)


@dataclass(frozen=True)
class LPResult:
    status: str
    x: np.ndarray | None = None
    value: float | None = None
    dual: np.ndarray | None = None  # y >= 0 with G.T @ y = objective
    dual_value: float | None = None

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def duality_gap(self) -> float:
        return float(self.value - self.dual_value)


@dataclass(frozen=True)
class QuadraticProgram:
    """minimize u @ u subject to G @ u <= h."""

    G: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if G.shape[0] != h.size:
            raise DimensionMismatch(f"G has {G.shape[0]} rows but h has {h.size} entries")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)


# ---------------------------------------------------------------------------
# standard-form simplex: min c @ y  s.t.  A @ y = b, y >= 0


def _pivot(T, obj, basis, i, j):
    T[i] /= T[i, j]
    col = T[:, j].copy()
    col[i] = 0.0
    T -= np.outer(col, T[i])
    obj -= obj[j] * T[i]
    basis[i] = j


def _run_phase(T, obj, basis, ncols, tol, max_iter):
    """Pivot until optimal; returns OPTIMAL or UNBOUNDED."""
    degenerate = 0
    for _ in range(max_iter):
        reduced = obj[:ncols]
        if degenerate >= _BLAND_AFTER:
            candidates = np.flatnonzero(reduced < -tol)
            if candidates.size == 0:
                return OPTIMAL
            j = int(candidates[0])
        else:
            j = int(np.argmin(reduced))
            if reduced[j] >= -tol:
                return OPTIMAL
        column = T[:, j]
        rows = np.flatnonzero(column > _PIVOT_TOL)
        if rows.size == 0:
            return UNBOUNDED
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
        i = int(tied[np.argmin(basis[tied])])
        degenerate = degenerate + 1 if best <= 1e-12 else 0
        _pivot(T, obj, basis, i, j)
    raise RuntimeError("simplex iteration limit reached")


def standard_simplex(A, b, c, tol=1e-10, feas_tol=None):
    """Solve ``min c @ y`` s.t. ``A @ y = b``, ``y >= 0`` by the two-phase method.

    Returns ``(status, y, pi)`` where ``pi`` are the simplex multipliers
    (``A.T @ pi <= c`` at optimality). Both are recomputed from the final
    basis with the original data, so they carry no accumulated pivot error.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    p, q = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    T = np.zeros((p, q + p + 1))
    T[:, :q] = A * sign[:, None]
    T[:, q:q + p] = np.eye(p)
    T[:, -1] = b * sign
    basis = np.arange(q, q + p)
    max_iter = 50 * (p + q) + 100
    scale = 1.0 + np.abs(T[:, -1]).max(initial=0.0)

    obj = np.zeros(q + p + 1)
    obj[:q] = -T[:, :q].sum(axis=0)
    obj[-1] = -T[:, -1].sum()
    _run_phase(T, obj, basis, q + p, tol, max_iter)
    if -obj[-1] > (feas_tol if feas_tol is not None else 1e-9 * scale):
        return INFEASIBLE, None, None

    # drive zero-level artificials out of the basis; drop rows where impossible
    keep = np.ones(p, dtype=bool)
    for i in range(p):
        if basis[i] >= q:
            row = np.abs(T[i, :q])
            j = int(np.argmax(row)) if q else 0
            if q and row[j] > 1e-9:
                _pivot(T, obj, basis, i, j)
            else:
                keep[i] = False
    kept_rows = np.flatnonzero(keep)
    # tableau rows stay aligned with the original constraint rows
    T = np.hstack([T[keep][:, :q], T[keep][:, -1:]])
    basis = basis[keep]
    obj = np.zeros(q + 1)
    obj[:q] = c - c[basis] @ T[:, :q]
    obj[-1] = -c[basis] @ T[:, -1]
    status = _run_phase(T, obj, basis, q, tol * (1.0 + np.abs(c).max(initial=0.0)), max_iter)
    if status == UNBOUNDED:
        return UNBOUNDED, None, None

    y = np.zeros(q)
    pi = np.zeros(p)
    B = A[kept_rows][:, basis]
    try:
        y[basis] = np.linalg.solve(B, b[kept_rows])
        pi[kept_rows] = np.linalg.solve(B.T, c[basis])
    except np.linalg.LinAlgError:
        y[basis] = T[:, -1]
        pi[kept_rows] = np.linalg.lstsq(B.T, c[basis], rcond=None)[0]
    y = np.maximum(y, 0.0)
    return OPTIMAL, y, pi


def lp_solve(lp: LinearProgram, tol: float = 1e-10) -> LPResult:
    """Maximize ``c @ x`` subject to ``G @ x <= h`` through its dual.

    The dual ``min h @ y, G.T @ y = c, y >= 0`` has only ``len(x)`` equality
    rows, which keeps the tableau small when there are many constraints.
    """
    c, G, h = lp.objective, lp.G, lp.h
    status, y, pi = standard_simplex(G.T, c, h, tol)
    if status == OPTIMAL:
        x = pi
        return LPResult(OPTIMAL, x=x, value=float(c @ x), dual=y, dual_value=float(h @ y))
    if status == UNBOUNDED:
        return LPResult(INFEASIBLE)
    # dual infeasible: primal is unbounded if it is feasible at all
    status0, _, _ = standard_simplex(G.T, np.zeros_like(c), h, tol)
    return LPResult(UNBOUNDED if status0 == OPTIMAL else INFEASIBLE)


def hull_gauge(points, x, tol: float = 1e-10) -> float:
    """Gauge of ``conv(points ∪ {0})`` at ``x``; ``inf`` if ``x`` is outside its cone.

    By LP duality this is also the support value of ``{z : points @ z <= 1}``
    in direction ``x``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    x = np.asarray(x, dtype=float).ravel()
    if not np.any(x):
        return 0.0
    status, y, _ = standard_simplex(points.T, x, np.ones(points.shape[0]), tol)
    if status != OPTIMAL:
        return np.inf
    return float(y.sum())


def in_convex_hull(points, x, eps: float) -> bool:
    """True when ``x`` lies in ``conv(points)`` up to an L1 residual of ``eps``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    A = np.vstack([points.T, np.ones(points.shape[0])])
    b = np.append(np.asarray(x, dtype=float).ravel(), 1.0)
    status, _, _ = standard_simplex(A, b, np.zeros(points.shape[0]), feas_tol=eps)
    return status == OPTIMAL


# ---------------------------------------------------------------------------
# quadratic kernel


def nnls(E, f, max_iter: int | None = None):
    """Lawson-Hanson active-set solver for ``min ||E x - f||, x >= 0``."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    f = np.asarray(f, dtype=float).ravel()
    n = E.shape[1]
    max_iter = max_iter or 3 * n + 30
    tol = 10 * np.finfo(float).eps * np.abs(E).sum(axis=0).max(initial=1.0) * max(E.shape)
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = E.T @ (f - E @ x)
    for _ in range(max_iter):
        free = ~passive & (w > tol)
        if not free.any():
            break
        candidates = np.where(free, w, -np.inf)
        passive[int(np.argmax(candidates))] = True
        while True:
            z = np.zeros(n)
            z[passive] = np.linalg.lstsq(E[:, passive], f, rcond=None)[0]
            if (z[passive] > tol).all():
                x = z
                break
            blocking = passive & (z <= tol)
            alpha = np.min(x[blocking] / (x[blocking] - z[blocking]))
            x = x + alpha * (z - x)
            passive &= x > tol
            x[~passive] = 0.0
        w = E.T @ (f - E @ x)
    return x


def qp_min_norm(qp: QuadraticProgram, tol: float = 1e-9) -> np.ndarray:
    """Projection of the origin onto ``{u : G u <= h}``.

    Solved as a least-distance program: NNLS on ``[-G.T; -h]`` against the last
    unit vector, then polished on the active constraints.
    """
    G, h = qp.G, qp.h
    m = G.shape[1]
    if G.shape[0] == 0 or (h >= 0).all():
        return np.zeros(m)
    # the solution is homogeneous in h; work at unit scale so tolerances are relative
    size = np.abs(h).max()
    return size * _min_norm_unit(G, h / size, tol)


def _min_norm_unit(G: np.ndarray, h: np.ndarray, tol: float) -> np.ndarray:
    m = G.shape[1]
    scale = 2.0
    if (h >= -tol * 1e-3).all():
        return np.zeros(m)
    E = np.vstack([-G.T, -h[None, :]])
    f = np.zeros(m + 1)
    f[-1] = 1.0
    lam = nnls(E, f)
    r = E @ lam - f
    if np.linalg.norm(r) < 1e-12 or abs(r[-1]) < 1e-14:
        raise Infeasible("the constraint set {u : G u <= h} is empty")
    u = -r[:m] / r[-1]

    active = lam > 1e-12 * max(1.0, lam.max())
    if active.any():
        polished = np.linalg.lstsq(G[active], h[active], rcond=None)[0]
        if (G @ polished - h).max() <= tol * scale and np.linalg.norm(polished - u) <= 1e-6 * (1.0 + np.linalg.norm(u)):
            u = polished
    if (G @ u - h).max() > 1e3 * tol * scale:
        raise Infeasible("the constraint set {u : G u <= h} is empty")
    return u
