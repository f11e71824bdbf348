"""Independent brute-force oracles (no LP, no qhull) for small dimensions."""

from __future__ import annotations

import itertools

import numpy as np


def brute_vertices(rows: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Vertices of ``{x : rows @ x <= 1}`` by solving every d-subset of rows.

    Applied to a point list it returns the facet normals of the hull of the
    points (the polar vertex set), so it doubles as a facet oracle.
    """
    rows = np.asarray(rows, dtype=float)
    d = rows.shape[1]
    pts = []
    for idx in itertools.combinations(range(rows.shape[0]), d):
        sub = rows[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, np.ones(d))
        if (rows @ x <= 1 + tol * (1 + np.abs(x).sum())).all():
            pts.append(x)
    pts = np.array(pts)
    if pts.size == 0:
        return pts.reshape(0, d)
    keys = np.round(pts, 8)
    _, first = np.unique(keys, axis=0, return_index=True)
    return pts[np.sort(first)]


def brute_support(rows: np.ndarray, d: np.ndarray) -> float:
    return float((brute_vertices(rows) @ d).max())


def brute_inclusion(x_rows: np.ndarray, y_rows: np.ndarray) -> float:
    """``min{lam : X ⊆ lam Y}`` as the largest Y-gauge over the vertices of X."""
    V = brute_vertices(x_rows)
    return float((V @ np.asarray(y_rows).T).max())


def brute_rho(x_rows, y_rows) -> float:
    return max(brute_inclusion(x_rows, y_rows), brute_inclusion(y_rows, x_rows)) - 1.0


def gauge_rows(rows, x) -> float:
    return float(max(0.0, (np.asarray(rows) @ np.asarray(x, dtype=float)).max()))


def random_proper_rows(rng: np.random.Generator, d: int, k: int | None = None) -> np.ndarray:
    """Random facet normals of a bounded set around the origin (rejection sampling)."""
    k = k or 2 * d + 2
    while True:
        dirs = rng.normal(size=(k, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        rows = dirs / rng.uniform(0.5, 2.0, size=(k, 1))
        # bounded iff the origin is interior to conv(rows)
        if np.linalg.matrix_rank(rows) == d and _origin_interior(rows):
            return rows


def _origin_interior(points: np.ndarray) -> bool:
    """0 in the interior of conv(points): no halfspace through 0 contains all points."""
    d = points.shape[1]
    for idx in itertools.combinations(range(points.shape[0]), d - 1):
        sub = points[list(idx)]
        if d == 1:
            normals = [np.array([1.0])]
        else:
            _, _, vt = np.linalg.svd(sub)
            if np.linalg.matrix_rank(sub) < d - 1:
                continue
            normals = [vt[-1]]
        for nrm in normals:
            s = points @ nrm
            if (s >= -1e-12).all() or (s <= 1e-12).all():
                return False
    return True


# ---------------------------------------------------------------------------
# grid minimization over the control


def _u_radius(C_rows: np.ndarray, n: int, x: np.ndarray, V, Ax: np.ndarray) -> float:
    """Box radius containing every minimizer of ℓ(x, u) + V(Ax + Bu)."""
    m = C_rows.shape[1] - n
    z = np.concatenate([x, np.zeros(m)])
    J0 = gauge_rows(C_rows, z) + V(Ax)
    lx = gauge_rows(C_rows, -z)
    # ℓ(0, u) >= ||u||_inf / r, with r the largest |u_i| over C
    Vc = brute_vertices(C_rows)
    r = np.abs(Vc[:, n:]).max()
    return 1.05 * r * (J0 + lx) + 1e-9


def _zoom(f, k: int, radius: float, points: int, rounds: int):
    """Minimize ``k`` convex scalar functions at once by shrinking grids.

    ``f(T)`` maps a ``(k, points)`` array of abscissae to values. For a convex
    function the minimizer stays within one cell of the best node, so each
    round keeps a two-cell window around it.
    """
    center = np.zeros(k)
    half = np.full(k, radius)
    best = np.full(k, np.inf)
    rows = np.arange(k)
    ticks = np.linspace(-1.0, 1.0, points)
    for _ in range(rounds):
        T = center[:, None] + half[:, None] * ticks[None, :]
        vals = f(T)
        j = np.argmin(vals, axis=1)
        best = np.minimum(best, vals[rows, j])
        center = T[rows, j]
        half = half * 4.0 / (points - 1)
    return best, center


def grid_min(C_rows, A, B, x, V, points: int = 2001) -> tuple[float, np.ndarray]:
    """``min_u ℓ(x, u) + V(A x + B u)`` by zoomed grids, one control at a time.

    With two controls the inner minimum over ``u_2`` is convex in ``u_1``, so
    nesting one-dimensional zooms keeps each level sound up to grid resolution.
    """
    C_rows = np.asarray(C_rows, dtype=float)
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n, m = B.shape
    Ax = A @ x
    R = _u_radius(C_rows, n, x, V, Ax)

    def objective(U):
        Z = np.hstack([np.tile(x, (U.shape[0], 1)), U])
        stage = np.maximum((Z @ C_rows.T).max(axis=1), 0.0)
        nxt = Ax[None, :] + U @ B.T
        return stage + (V.batch(nxt) if hasattr(V, "batch") else np.array([V(y) for y in nxt]))

    if m == 1:
        val, u = _zoom(lambda T: objective(T.reshape(-1, 1)).reshape(T.shape), 1, R, points, 6)
        return float(val[0]), u
    if m != 2:
        raise ValueError("grid oracle handles at most two controls")
    inner_pts = 41

    def outer(T1):
        k = T1.size
        u1 = T1.ravel()

        def inner(T2):
            U = np.column_stack([np.repeat(u1, inner_pts), T2.ravel()])
            return objective(U).reshape(k, inner_pts)

        vals, _ = _zoom(inner, k, R, inner_pts, 9)
        return vals.reshape(T1.shape)

    val, u1 = _zoom(outer, 1, R, inner_pts, 9)
    _, u2 = _zoom(
        lambda T: objective(np.column_stack([np.full(T.size, u1[0]), T.ravel()])).reshape(T.shape), 1, R, inner_pts, 9
    )
    return float(val[0]), np.array([u1[0], u2[0]])


class GaugeFn:
    """Callable gauge with a vectorized path for the grid oracle."""

    def __init__(self, rows):
        self.rows = np.asarray(rows, dtype=float)

    def __call__(self, y):
        return gauge_rows(self.rows, y)

    def batch(self, Y):
        return np.maximum((Y @ self.rows.T).max(axis=1), 0.0)


class ZeroFn:
    def __call__(self, y):
        return 0.0

    def batch(self, Y):
        return np.zeros(Y.shape[0])


def value_iteration_1d(a: float, b: float, C_rows, steps: int = 30) -> list[tuple[float, float]]:
    """Scalar value iteration from ``V_0 = 0`` using positive homogeneity.

    ``V_k(x) = p_k x`` for ``x >= 0`` and ``q_k |x|`` for ``x < 0``; returns
    the list of ``(p_k, q_k)`` for ``k = 1..steps``.
    """
    out = []
    p = q = 0.0
    for _ in range(steps):

        class Pw:
            def __call__(self, y, p=p, q=q):
                y = float(np.atleast_1d(y)[0])
                return p * y if y >= 0 else -q * y

            def batch(self, Y, p=p, q=q):
                y = Y[:, 0]
                return np.where(y >= 0, p * y, -q * y)

        V = Pw()
        p_new, _ = grid_min(C_rows, [[a]], [[b]], [1.0], V)
        q_new, _ = grid_min(C_rows, [[a]], [[b]], [-1.0], V)
        p, q = p_new, q_new
        out.append((p, q))
    return out
