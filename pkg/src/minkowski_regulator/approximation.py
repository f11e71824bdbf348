"""Inner/outer polytopes for smooth proper C-sets.

For a body ``K`` with support function ``σ`` and a direction set ``D``:

* ``inner`` is the hull of the boundary points touched by the directions;
* ``outer`` is cut by the tangent halfspaces ``d @ x <= σ(d)`` for ``d`` in
  ``D`` together with the tangent halfspaces parallel to the facets of every
  inner polytope built so far.

Hence ``inner ⊆ K ⊆ outer ⊆ (1 + ratio) inner`` where ``ratio`` is measured
by LP as ``inclusion_factor(outer, inner) - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import norm, qmc

from .bellman import SystemData
from .errors import BudgetExceeded, DimensionMismatch, NotProper
from .geometry import DEFAULT_TOL, HPolytope, Tolerances, hull_facets, inclusion_factor, support_h
from .optim import LinearProgram, lp_solve


class SmoothBody:
    """Proper C-set known through its support function.

    ``kind`` is ``"ellipsoid"`` (``shape`` M, the set ``M^{1/2} B``),
    ``"pball"`` (``{x : ||x||_p <= scale}``) or ``"oracle"`` (user callables).
    """

    def __init__(
        self,
        kind: str,
        dim: int,
        *,
        shape=None,
        p: float | None = None,
        scale: float = 1.0,
        support_fn: Callable[[np.ndarray], float] | None = None,
        touch_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    ):
        self.kind = kind
        self.dim = int(dim)
        self.shape = None
        self.p = p
        self.scale = float(scale)
        self._support = support_fn
        self._touch = touch_fn
        if kind == "ellipsoid":
            M = np.atleast_2d(np.asarray(shape, dtype=float))
            if M.shape != (self.dim, self.dim):
                raise DimensionMismatch(f"shape must be {self.dim}x{self.dim}, got {M.shape}")
            if not np.allclose(M, M.T) or np.linalg.eigvalsh(M).min() <= 0:
                raise NotProper("ellipsoid shape matrix must be symmetric positive definite")
            self.shape = M
        elif kind == "pball":
            if p is None or p < 1:
                raise ValueError("p-norm ball needs p >= 1")
            if self.scale <= 0:
                raise NotProper("p-norm ball needs a positive scale")
        elif kind == "oracle":
            if support_fn is None:
                raise ValueError("oracle body needs a support function")
        else:
            raise ValueError(f"unknown body kind {kind!r}")

    @classmethod
    def ellipsoid(cls, shape) -> "SmoothBody":
        M = np.atleast_2d(np.asarray(shape, dtype=float))
        return cls("ellipsoid", M.shape[0], shape=M)

    @classmethod
    def ball(cls, dim: int, radius: float = 1.0) -> "SmoothBody":
        return cls("pball", dim, p=2.0, scale=radius)

    @classmethod
    def pball(cls, p: float, scale: float, dim: int) -> "SmoothBody":
        return cls("pball", dim, p=p, scale=scale)

    @classmethod
    def from_polytope(cls, P: HPolytope) -> "SmoothBody":
        """Wrap a polytope as a support oracle; touch points are LP maximizers."""

        def touch(d):
            res = lp_solve(LinearProgram(d, P.normals, np.ones(P.n_facets)))
            return res.x

        return cls("oracle", P.dim, support_fn=lambda d: support_h(P, d), touch_fn=touch)

    def _dual_exponent(self) -> float:
        p = self.p
        if np.isinf(p):
            return 1.0
        return np.inf if p == 1 else p / (p - 1.0)

    def support(self, d) -> float:
        d = np.asarray(d, dtype=float)
        if self.kind == "ellipsoid":
            return float(np.sqrt(d @ self.shape @ d))
        if self.kind == "pball":
            return self.scale * float(np.linalg.norm(d, ord=self._dual_exponent()))
        return float(self._support(d))

    def touch(self, d) -> np.ndarray:
        """A boundary point ``x`` with ``d @ x = σ(d)``."""
        d = np.asarray(d, dtype=float)
        if self.kind == "ellipsoid":
            Md = self.shape @ d
            return Md / np.sqrt(d @ Md)
        if self.kind == "pball":
            q = self._dual_exponent()
            if np.isinf(q):
                x = np.zeros_like(d)
                i = int(np.argmax(np.abs(d)))
                x[i] = np.sign(d[i])
            elif q == 1.0:
                x = np.sign(d)
            else:
                nq = np.linalg.norm(d, ord=q)
                x = np.sign(d) * (np.abs(d) / nq) ** (q - 1.0)
            return self.scale * x
        if self._touch is not None:
            return np.asarray(self._touch(d), dtype=float)
        return self._numeric_gradient(d)

    def _numeric_gradient(self, d: np.ndarray) -> np.ndarray:
        h = 1e-6 * max(1.0, float(np.linalg.norm(d)))
        g = np.empty_like(d)
        for i in range(d.size):
            e = np.zeros_like(d)
            e[i] = h
            g[i] = (self.support(d + e) - self.support(d - e)) / (2 * h)
        # land exactly on the supporting hyperplane
        s, dg = self.support(d), float(d @ g)
        return g * (s / dg) if dg > 0 else g

    def to_dict(self) -> dict:
        if self.kind == "ellipsoid":
            return {"kind": "ellipsoid", "dim": self.dim, "shape": self.shape.tolist()}
        if self.kind == "pball":
            p = self.p if np.isfinite(self.p) else "inf"
            return {"kind": "pball", "dim": self.dim, "p": p, "scale": self.scale}
        raise ValueError("oracle bodies cannot be serialized")

    @classmethod
    def from_dict(cls, data: dict) -> "SmoothBody":
        kind = data.get("kind")
        if kind == "ellipsoid":
            shape = np.atleast_2d(np.asarray(data["shape"], dtype=float))
            return cls("ellipsoid", int(data.get("dim", shape.shape[0])), shape=shape)
        if kind == "pball":
            p = data.get("p", 2.0)
            p = np.inf if p in ("inf", "Infinity") else float(p)
            return cls("pball", int(data["dim"]), p=p, scale=float(data.get("scale", 1.0)))
        raise ValueError(f"unknown body kind {kind!r}")

    def __repr__(self):
        return f"SmoothBody({self.kind!r}, dim={self.dim})"


# ---------------------------------------------------------------------------
# directions


def equiangular(count: int, offset: float = 0.0) -> np.ndarray:
    t = offset + 2 * np.pi * np.arange(count) / count
    return np.column_stack([np.cos(t), np.sin(t)])


def refinement_directions(dim: int, level: int, seed: int = 0) -> np.ndarray:
    """Unit directions for refinement round ``level``; rounds are nested.

    In the plane, round 0 is four axis-like directions and every later round
    cuts each angular gap at one third of its width, so the count doubles and
    the widest gap shrinks by 2/3. In higher dimensions, ``±e_i`` followed by
    a scrambled Halton sequence mapped to the sphere, doubling per round.
    """
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        offset = 0.0 if not seed else np.random.default_rng(seed).uniform(0.0, np.pi / 2)
        ang = offset + np.pi / 2 * np.arange(4)
        for _ in range(level):
            srt = np.sort(ang)
            gaps = np.diff(np.append(srt, srt[0] + 2 * np.pi))
            ang = np.concatenate([ang, srt + gaps * (2.0 / 3.0)])
        return np.column_stack([np.cos(ang), np.sin(ang)])
    axes = np.vstack([np.eye(dim), -np.eye(dim)])
    extra = axes.shape[0] * (2**level - 1)
    if extra == 0:
        return axes
    u = qmc.Halton(d=dim, scramble=True, seed=seed).random(extra)
    g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return np.vstack([axes, g])


@dataclass(frozen=True)
class Sandwich:
    inner: HPolytope
    outer: HPolytope
    ratio: float
    directions: int


def _build(body: SmoothBody, dirs: np.ndarray, extra_normals: list[np.ndarray], tol: Tolerances):
    touches = np.array([body.touch(d) for d in dirs])
    inner = hull_facets(touches, tol)
    normals = [inner.normals] + extra_normals
    cuts = np.vstack([dirs] + normals)
    sig = np.array([body.support(c) for c in cuts])
    outer = HPolytope(cuts / sig[:, None])
    ratio = max(inclusion_factor(outer, inner) - 1.0, 0.0)
    return inner, outer, ratio, normals


def sandwich(
    body: SmoothBody,
    delta: float | None = None,
    *,
    directions=None,
    seed: int = 0,
    max_directions: int = 100_000,
    tol: Tolerances = DEFAULT_TOL,
) -> Sandwich:
    """Certified pair ``inner ⊆ body ⊆ outer ⊆ (1 + ratio) inner``.

    With explicit ``directions`` a single construction is returned; otherwise
    the direction count doubles until ``ratio <= delta``.
    """
    if directions is not None:
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        if dirs.shape[1] != body.dim:
            raise DimensionMismatch(f"directions must have length {body.dim}")
        inner, outer, ratio, _ = _build(body, dirs, [], tol)
        return Sandwich(inner, outer, ratio, dirs.shape[0])
    if delta is None or not delta > 0:
        raise ValueError("delta must be positive")
    kept: list[np.ndarray] = []
    level = 0
    while True:
        dirs = refinement_directions(body.dim, level, seed)
        if dirs.shape[0] > max_directions:
            break
        level += 1
        try:
            inner, outer, ratio, kept = _build(body, dirs, kept, tol)
        except NotProper:
            continue
        if ratio <= delta or body.dim == 1:
            return Sandwich(inner, outer, ratio, dirs.shape[0])
    raise BudgetExceeded(f"ratio above {delta} with {max_directions} directions")


def approximate_problem(
    A,
    B,
    stage: HPolytope | SmoothBody,
    terminal: HPolytope | SmoothBody | None,
    delta: float,
    *,
    K="auto",
    seed: int = 0,
    tol: Tolerances = DEFAULT_TOL,
) -> tuple[SystemData, SystemData, dict]:
    """Polytopic problems bracketing the value function.

    The lower problem uses outer polytopes (smaller gauges), the upper one
    inner polytopes. Polytopic data passes through unchanged.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    report: dict = {}

    def split(name, s):
        if s is None or isinstance(s, HPolytope):
            return s, s
        sw = sandwich(s, delta, seed=seed, tol=tol)
        report[name] = {"ratio": sw.ratio, "directions": sw.directions}
        return sw.outer, sw.inner

    C_lo, C_up = split("stage", stage)
    Q_lo, Q_up = split("terminal", terminal)
    lower = SystemData(A, B, C_lo, Q_lo, K, tol)
    upper = SystemData(A, B, C_up, Q_up, K, tol)
    return lower, upper, report
