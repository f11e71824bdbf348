"""Polytope algebra for proper C-polytopes.

An :class:`HPolytope` is stored in normalized facet form ``{x : a_i @ x <= 1}``;
a :class:`VPolytope` is the convex hull of finitely many points. For proper
C-polytopes the two are exchanged by polarity without any computation: the
facet normals of ``P`` are the vertices of ``P*``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DimensionMismatch, NotProper
from .optim import hull_gauge, in_convex_hull


@dataclass(frozen=True)
class Tolerances:
    eps_geom: float = 1e-9
    eps_inclusion: float = 1e-8
    eps_fixpoint: float = 1e-7

    def __post_init__(self):
        values = (self.eps_geom, self.eps_inclusion, self.eps_fixpoint)
        if min(values) <= 0:
            raise ValueError("tolerances must be strictly positive")
        if not self.eps_geom <= self.eps_inclusion <= self.eps_fixpoint:
            raise ValueError("tolerances must satisfy eps_geom <= eps_inclusion <= eps_fixpoint")


DEFAULT_TOL = Tolerances()


def _as_rows(data, dim=None) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError("expected a list of vectors")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionMismatch(f"expected vectors of length {dim}, got {arr.shape[1]}")
    if not np.isfinite(arr).all():
        raise ValueError("coefficients must be finite")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


def _is_bounded(rows: np.ndarray) -> bool:
    """Whether ``{x : rows @ x <= 1}`` is bounded (finite support along every ±e_i)."""
    if rows.shape[0] <= rows.shape[1]:
        return False
    for i in range(rows.shape[1]):
        for s in (1.0, -1.0):
            e = np.zeros(rows.shape[1])
            e[i] = s
            if not np.isfinite(hull_gauge(rows, e)):
                return False
    return True


class HPolytope:
    """Proper C-polytope ``{x : normals @ x <= 1}``.

    Construction rejects unbounded sets with :class:`NotProper`; the origin is
    interior by construction since every offset is 1.
    """

    __slots__ = ("_normals", "_reduced")

    def __init__(self, normals, dim: int | None = None, *, check: bool = True, reduced: bool = False):
        rows = _as_rows(normals, dim)
        if rows.shape[0] == 0:
            raise NotProper("an H-polytope needs at least one facet")
        if check and not _is_bounded(rows):
            raise NotProper("facet normals do not describe a bounded set around the origin")
        self._normals = rows
        self._reduced = reduced

    @classmethod
    def from_inequalities(cls, A, b) -> "HPolytope":
        """Build from ``A x <= b``; every ``b_i`` must be strictly positive."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise DimensionMismatch("A and b have different row counts")
        if (b <= 0).any():
            raise NotProper("origin must satisfy every inequality strictly (b > 0)")
        return cls(A / b[:, None])

    @classmethod
    def box(cls, radii) -> "HPolytope":
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        eye = np.diag(1.0 / radii)
        return cls(np.vstack([eye, -eye]), reduced=True)

    @property
    def normals(self) -> np.ndarray:
        return self._normals

    @property
    def dim(self) -> int:
        return self._normals.shape[1]

    @property
    def n_facets(self) -> int:
        return self._normals.shape[0]

    def scaled(self, factor: float) -> "HPolytope":
        """The set ``factor * self`` for ``factor > 0``."""
        if factor <= 0:
            raise ValueError("scaling factor must be positive")
        return HPolytope(self._normals / factor, check=False, reduced=self._reduced)

    def __neg__(self) -> "HPolytope":
        return HPolytope(-self._normals, check=False, reduced=self._reduced)

    def gauge(self, x):
        return gauge(self, x)

    def contains(self, x, tol: float = DEFAULT_TOL.eps_geom) -> bool:
        return bool(gauge(self, x) <= 1.0 + tol)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "normals": self._normals.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "HPolytope":
        return cls(data["normals"], dim=int(data["dim"]))

    def __repr__(self):
        return f"HPolytope(dim={self.dim}, n_facets={self.n_facets})"


class VPolytope:
    """Convex hull of ``vertices`` (a nonempty finite point list)."""

    __slots__ = ("_vertices", "_reduced")

    def __init__(self, vertices, dim: int | None = None, *, reduced: bool = False):
        rows = _as_rows(vertices, dim)
        if rows.shape[0] == 0:
            raise ValueError("a V-polytope needs at least one point")
        self._vertices = rows
        self._reduced = reduced

    @classmethod
    def origin(cls, dim: int) -> "VPolytope":
        return cls(np.zeros((1, dim)))

    @property
    def vertices(self) -> np.ndarray:
        return self._vertices

    @property
    def dim(self) -> int:
        return self._vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self._vertices.shape[0]

    def support(self, d):
        return support(self, d)

    def reduce(self, tol: Tolerances = DEFAULT_TOL) -> "VPolytope":
        if self._reduced:
            return self
        keep = reduce_points(self._vertices, include_origin=False, eps=tol.eps_geom)
        return VPolytope(self._vertices[keep], reduced=True)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "vertices": self._vertices.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "VPolytope":
        return cls(data["vertices"], dim=int(data["dim"]))

    def __repr__(self):
        return f"VPolytope(dim={self.dim}, n_vertices={self.n_vertices})"


# ---------------------------------------------------------------------------
# redundancy removal


def _dedupe(points: np.ndarray) -> np.ndarray:
    """Indices of first occurrences after collapsing near-identical points."""
    scale = max(1.0, float(np.abs(points).max(initial=0.0)))
    keys = np.round(points / (scale * 1e-11))
    _, first = np.unique(keys, axis=0, return_index=True)
    return np.sort(first)


def _hull_candidates(points: np.ndarray, include_origin: bool, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Possible extreme points (a qhull superset) and a mask of those already certified.

    A candidate is certified when the averaged normal of its incident qhull
    facets separates it from every other point by more than the LP threshold;
    that normal is a feasible point of the certifying LP.
    """
    n, d = points.shape
    cloud = np.vstack([points, np.zeros((1, d))]) if include_origin else points
    center = cloud.mean(axis=0)
    _, s, vt = np.linalg.svd(cloud - center, full_matrices=False)
    rank = int((s > 1e-10 * max(1.0, s[0] if s.size else 0.0)).sum())
    none = np.zeros(0, dtype=bool)
    if rank == 0:
        return np.arange(min(n, 1)), np.zeros(min(n, 1), dtype=bool)
    coords = (cloud - center) @ vt[:rank].T
    if rank == 1:
        t = coords[:, 0]
        hull = sorted({int(np.argmin(t)), int(np.argmax(t))} - {n})
        return np.array(hull, dtype=int), np.zeros(len(hull), dtype=bool)
    if cloud.shape[0] <= rank + 1:
        return np.arange(n), np.zeros(n, dtype=bool)
    try:
        qh = ConvexHull(coords)
    except QhullError:
        return np.arange(n), np.zeros(n, dtype=bool)
    cand = np.array(sorted(i for i in qh.vertices.tolist() if i < n), dtype=int)
    if cand.size == 0:
        return cand, none
    # averaged incident facet normals as candidate separating directions
    normals = np.zeros((cloud.shape[0], rank))
    for k in range(qh.simplices.shape[1]):
        np.add.at(normals, qh.simplices[:, k], qh.equations[:, :-1])
    dirs = normals[cand]
    ref = coords[n] if include_origin else np.zeros(rank)
    # the candidates span the hull, so separating from them suffices
    pts = coords[cand] - ref
    own = np.einsum("ij,ij->i", pts, dirs)
    rival = np.empty(cand.size)
    step = max(1, 2_000_000 // cand.size)
    for lo in range(0, cand.size, step):
        block = pts @ dirs[lo:lo + step].T
        block[np.arange(lo, min(lo + step, cand.size)), np.arange(block.shape[1])] = -np.inf
        rival[lo:lo + step] = block.max(axis=0)
    if include_origin:
        ok = (own > 0) & (own > (1.0 + eps) * np.maximum(rival, 0.0))
    else:
        scale = max(1.0, float(np.abs(points).max()))
        ok = own - rival > eps * scale * np.abs(dirs @ vt[:rank]).max(axis=1) * 1.01
    return cand, ok


def reduce_points(points, *, include_origin: bool, eps: float = DEFAULT_TOL.eps_geom) -> np.ndarray:
    """Indices (ascending) of the extreme points of ``conv(points)``.

    With ``include_origin`` the hull is ``conv(points ∪ {0})``; a point ``p_i``
    is then dropped exactly when the facet ``p_i @ x <= 1`` is redundant in
    ``{x : points @ x <= 1}``. Every survivor is certified against the other
    survivors, by a separating direction from qhull or else by an LP. Among
    duplicates the first occurrence survives.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    idx = _dedupe(points)
    if include_origin:
        scale = max(1.0, float(np.abs(points).max(initial=0.0)))
        idx = idx[np.abs(points[idx]).max(axis=1) > eps * scale]
    if idx.size <= 1:
        return idx
    local, certified = _hull_candidates(points[idx], include_origin, eps)
    candidates = idx[local]
    sure = set(candidates[certified].tolist())
    alive = list(candidates)
    scale = max(1.0, float(np.abs(points[candidates]).max()))
    # scan from the back so that the earliest of (near-)duplicates is kept
    for i in reversed(list(candidates)):
        if i in sure:
            continue
        others = [j for j in alive if j != i]
        if not others:
            break
        if include_origin:
            redundant = hull_gauge(points[others], points[i]) <= 1.0 + eps
        else:
            redundant = in_convex_hull(points[others], points[i], eps * scale)
        if redundant:
            alive.remove(i)
    return np.array(sorted(alive), dtype=int)


# ---------------------------------------------------------------------------
# operations


def irreducible(p: HPolytope, tol: Tolerances = DEFAULT_TOL) -> HPolytope:
    """Drop redundant facets; retained rows keep their stored order."""
    if p._reduced:
        return p
    keep = reduce_points(p.normals, include_origin=True, eps=tol.eps_geom)
    return HPolytope(p.normals[keep], check=False, reduced=True)


def polar_h_to_v(p: HPolytope, tol: Tolerances = DEFAULT_TOL) -> VPolytope:
    """Polar set of ``p`` as the hull of its (irredundant) facet normals."""
    return VPolytope(irreducible(p, tol).normals, reduced=True)


def polar_v_to_h(q: VPolytope, tol: Tolerances = DEFAULT_TOL) -> HPolytope:
    """Polar set of ``conv(q)``; requires the origin in the interior of ``q``."""
    if q._reduced:
        # extreme points of conv(q) stay extreme once the interior origin is added
        rows = q.vertices
    else:
        rows = q.vertices[reduce_points(q.vertices, include_origin=True, eps=tol.eps_geom)]
    if rows.shape[0] == 0 or not _is_bounded(rows):
        raise NotProper("origin is not in the interior of the point hull")
    return HPolytope(rows, check=False, reduced=True)


def minkowski_sum(x: VPolytope, y: VPolytope, tol: Tolerances = DEFAULT_TOL) -> VPolytope:
    if x.dim != y.dim:
        raise DimensionMismatch(f"cannot add sets of dimension {x.dim} and {y.dim}")
    sums = (x.vertices[:, None, :] + y.vertices[None, :, :]).reshape(-1, x.dim)
    return VPolytope(sums[reduce_points(sums, include_origin=False, eps=tol.eps_geom)], reduced=True)


def linear_image(m, x: VPolytope, tol: Tolerances = DEFAULT_TOL) -> VPolytope:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[1] != x.dim:
        raise DimensionMismatch(f"matrix has {m.shape[1]} columns, set has dimension {x.dim}")
    pts = x.vertices @ m.T
    return VPolytope(pts[reduce_points(pts, include_origin=False, eps=tol.eps_geom)], reduced=True)


def _adjacent_pairs(rows: np.ndarray) -> np.ndarray | None:
    """Index pairs of rows joined by an edge of a triangulation of ``conv(rows)``.

    Those include every pair of adjacent facets of ``{z : rows @ z <= 1}``.
    Returns None when qhull cannot help.
    """
    k, d = rows.shape
    if d < 2 or k <= d + 1:
        return None
    try:
        simp = ConvexHull(rows).simplices
    except QhullError:
        return None
    a, b = np.triu_indices(d, 1)
    lo = np.minimum(simp[:, a], simp[:, b]).ravel().astype(np.int64)
    hi = np.maximum(simp[:, a], simp[:, b]).ravel().astype(np.int64)
    codes = np.unique(lo * k + hi)
    return np.column_stack([codes // k, codes % k])


def _eliminate(rows: np.ndarray, j: int, eps: float) -> np.ndarray:
    """One Fourier-Motzkin step on ``{z : rows @ z <= 1}``, removing coordinate ``j``.

    ``rows`` must be irredundant; only adjacent facet pairs are combined.
    """
    gamma = rows[:, j]
    thr = eps * np.abs(rows).max(axis=1)
    pos, neg = gamma > thr, gamma < -thr
    zero = ~(pos | neg)
    pairs = _adjacent_pairs(rows) if pos.sum() * neg.sum() > 4096 else None
    if pairs is None:
        ip, in_ = np.meshgrid(np.flatnonzero(pos), np.flatnonzero(neg), indexing="ij")
        ip, in_ = ip.ravel(), in_.ravel()
    else:
        p0, p1 = pairs[:, 0], pairs[:, 1]
        fwd = pos[p0] & neg[p1]
        bwd = neg[p0] & pos[p1]
        ip = np.concatenate([p0[fwd], p1[bwd]])
        in_ = np.concatenate([p1[fwd], p0[bwd]])
    cp, cn = gamma[ip], gamma[in_]
    combos = (cp[:, None] * rows[in_] - cn[:, None] * rows[ip]) / (cp - cn)[:, None]
    out = np.vstack([rows[zero], combos])
    return np.delete(out, j, axis=1)


def project_fm(p: HPolytope, keep: Sequence[int], tol: Tolerances = DEFAULT_TOL) -> HPolytope:
    """Orthogonal projection onto the coordinates ``keep`` by Fourier-Motzkin.

    Redundant rows are removed after every eliminated coordinate.
    """
    keep = list(keep)
    if len(set(keep)) != len(keep) or not all(0 <= k < p.dim for k in keep):
        raise DimensionMismatch(f"invalid coordinate selection {keep} for dimension {p.dim}")
    rows = irreducible(p, tol).normals.copy()
    cols = list(range(p.dim))
    for j in sorted(set(cols) - set(keep), reverse=True):
        rows = _eliminate(rows, cols.index(j), tol.eps_geom)
        cols.remove(j)
        rows = rows[reduce_points(rows, include_origin=True, eps=tol.eps_geom)]
    rows = rows[:, [cols.index(k) for k in keep]]
    if rows.shape[0] == 0 or not _is_bounded(rows):
        raise NotProper("projection is not a proper C-polytope")
    return HPolytope(rows, check=False, reduced=True)


def gauge(p: HPolytope, x):
    """Minkowski function of ``p``; vectorized over the rows of a 2-D ``x``."""
    x = np.asarray(x, dtype=float)
    vals = x @ p.normals.T
    out = np.maximum(vals.max(axis=-1), 0.0)
    return float(out) if out.ndim == 0 else out


def support(q: VPolytope, d):
    d = np.asarray(d, dtype=float)
    out = (d @ q.vertices.T).max(axis=-1)
    return float(out) if out.ndim == 0 else out


def support_h(p: HPolytope, d) -> float:
    """Support function of an H-polytope, by LP."""
    return hull_gauge(p.normals, d)


def inclusion_factor(x: HPolytope, y: HPolytope) -> float:
    """Smallest ``lam > 0`` with ``x ⊆ lam * y``."""
    if x.dim != y.dim:
        raise DimensionMismatch(f"dimensions {x.dim} and {y.dim} differ")
    try:
        verts = _vertex_cloud(x)
    except QhullError:
        return max(support_h(x, b) for b in y.normals)
    return float((verts @ y.normals.T).max())


def _vertex_cloud(p: HPolytope) -> np.ndarray:
    """Vertices of ``p`` (possibly repeated) from the facets of ``conv(normals)``."""
    normals = p.normals
    if p.dim == 1:
        return np.array([[1.0 / normals.max()], [1.0 / normals.min()]])
    eq = ConvexHull(normals).equations
    return -eq[:, :-1] / eq[:, -1:]


def set_distance(x: HPolytope, y: HPolytope) -> float:
    """Scaled-inclusion distance ``max(lam(x, y), lam(y, x)) - 1``."""
    return max(inclusion_factor(x, y), inclusion_factor(y, x)) - 1.0


def includes(outer: HPolytope, inner: HPolytope, tol: Tolerances = DEFAULT_TOL) -> bool:
    return inclusion_factor(inner, outer) <= 1.0 + tol.eps_inclusion


def vertices(p: HPolytope) -> np.ndarray:
    """Vertex list of an H-polytope, from the facets of its polar hull."""
    normals = irreducible(p).normals
    if p.dim == 1:
        return np.array([[1.0 / normals.max()], [1.0 / normals.min()]])
    hull = ConvexHull(normals)
    eq = hull.equations
    pts = -eq[:, :-1] / eq[:, -1:]
    return pts[_dedupe(pts)]


def hull_facets(points, tol: Tolerances = DEFAULT_TOL) -> HPolytope:
    """H-form of ``conv(points)``, which must contain the origin in its interior."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = points.shape[1]
    if d == 1:
        hi, lo = points.max(), points.min()
        if not (hi > 0 > lo):
            raise NotProper("origin is not interior to the point hull")
        return HPolytope([[1.0 / hi], [1.0 / lo]], check=False, reduced=True)
    try:
        eq = ConvexHull(points).equations
    except QhullError as exc:
        raise NotProper("point hull is not full-dimensional") from exc
    offsets = -eq[:, -1]
    if (offsets <= tol.eps_geom * max(1.0, np.abs(points).max())).any():
        raise NotProper("origin is not interior to the point hull")
    rows = eq[:, :-1] / offsets[:, None]
    return irreducible(HPolytope(rows, check=False), tol)


def embed(points: np.ndarray, dim: int, coords: Iterable[int]) -> np.ndarray:
    """Place ``points`` into ``dim``-space at the coordinates ``coords``."""
    out = np.zeros((points.shape[0], dim))
    out[:, list(coords)] = points
    return out
