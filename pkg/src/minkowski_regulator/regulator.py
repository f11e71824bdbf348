"""Value functions, optimizer maps, min-norm feedback and closed-loop runs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, TextIO

import numpy as np

from .bellman import SystemData
from .errors import DimensionMismatch, Infeasible
from .geometry import DEFAULT_TOL, HPolytope, VPolytope, embed, minkowski_sum, polar_h_to_v, polar_v_to_h
from .optim import QuadraticProgram, qp_min_norm
from .serialize import fmt


@dataclass(frozen=True)
class PWLValueFunction:
    """``V(x) = max_i alpha_i @ x``, the gauge of the generator set with normals ``alphas``."""

    alphas: np.ndarray
    k: int | None = None  # None stands for the limit

    @classmethod
    def from_polytope(cls, P: HPolytope, k: int | None = None) -> "PWLValueFunction":
        return cls(np.array(P.normals), k)

    @property
    def dim(self) -> int:
        return self.alphas.shape[1]

    def __call__(self, x):
        return value_eval(self, x)

    def partition(self) -> "ConicalPartition":
        return ConicalPartition(self.alphas)

    def to_dict(self) -> dict:
        return {"alphas": self.alphas.tolist(), "regions": self.partition().to_list()}


def value_eval(vf: PWLValueFunction, x):
    x = np.asarray(x, dtype=float)
    out = np.maximum((x @ vf.alphas.T).max(axis=-1), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ConicalPartition:
    """Cones ``R_i = {x : (alpha_j - alpha_i) @ x <= 0 for all j}``."""

    alphas: np.ndarray

    def __len__(self):
        return self.alphas.shape[0]

    def region(self, i: int) -> np.ndarray:
        rows = self.alphas - self.alphas[i]
        return np.delete(rows, i, axis=0)

    def contains(self, i: int, x, tol: float = DEFAULT_TOL.eps_geom) -> bool:
        x = np.asarray(x, dtype=float)
        vals = self.alphas @ x
        return bool(vals[i] >= vals.max() - tol * np.abs(x).sum())

    def to_list(self) -> list:
        return [{"index": i, "normals": self.region(i).tolist()} for i in range(len(self))]


def active_region(part: ConicalPartition, x, tol: float = DEFAULT_TOL.eps_geom) -> int:
    """Lowest index whose cone contains ``x`` (all cones contain 0)."""
    x = np.asarray(x, dtype=float)
    vals = part.alphas @ x
    hits = np.flatnonzero(vals >= vals.max() - tol * np.abs(x).sum())
    return int(hits[0]) if hits.size else int(np.argmax(vals))


@dataclass(frozen=True)
class OptimizerSlice:
    """The set ``{u : G @ u <= h}``."""

    G: np.ndarray
    h: np.ndarray

    def contains(self, u, tol: float = DEFAULT_TOL.eps_geom) -> bool:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        scale = 1.0 + np.abs(self.h).max(initial=0.0)
        return bool((self.G @ u - self.h).max(initial=-np.inf) <= tol * scale)


@dataclass(frozen=True)
class OptimizerMapData:
    """Rows ``(beta_j, gamma_j)`` of ``T`` with the matching value function."""

    betas: np.ndarray
    gammas: np.ndarray
    value: PWLValueFunction

    @classmethod
    def from_sets(cls, P: HPolytope, T: HPolytope, k: int | None = None) -> "OptimizerMapData":
        n = P.dim
        if T.dim <= n:
            raise DimensionMismatch(f"T must live in dimension > {n}, got {T.dim}")
        N = np.array(T.normals)
        return cls(N[:, :n], N[:, n:], PWLValueFunction.from_polytope(P, k))

    @property
    def n(self) -> int:
        return self.betas.shape[1]

    @property
    def m(self) -> int:
        return self.gammas.shape[1]

    @property
    def partition(self) -> ConicalPartition:
        return self.value.partition()


def optimizer_slice(om: OptimizerMapData, x) -> OptimizerSlice:
    """Minimizers of ``ℓ(x, u) + V_prev(A x + B u)`` as a constraint list in ``u``."""
    x = np.asarray(x, dtype=float)
    i = active_region(om.partition, x)
    rhs = om.value.alphas[i] @ x - om.betas @ x
    return OptimizerSlice(om.gammas, rhs)


def min_norm_selection(om: OptimizerMapData, x) -> np.ndarray:
    """Least-norm point of the optimizer slice; positively homogeneous in ``x``."""
    x = np.asarray(x, dtype=float)
    size = np.abs(x).sum()
    if size == 0.0:
        return np.zeros(om.m)
    # solve at unit scale so every tolerance below is relative to x
    return size * _min_norm_unit(om, x / size)


def _min_norm_unit(om: OptimizerMapData, x: np.ndarray) -> np.ndarray:
    sl = optimizer_slice(om, x)
    try:
        return qp_min_norm(QuadraticProgram(sl.G, sl.h))
    except Infeasible:
        # single-point slices can be empty by rounding; retry with a homogeneous slack
        slack = 1e-12 * np.abs(x).sum() * (1.0 + np.abs(om.betas).sum(axis=1) + np.abs(om.gammas).sum(axis=1))
        return qp_min_norm(QuadraticProgram(sl.G, sl.h + slack))


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (T+1, n)
    controls: np.ndarray  # (T, m)
    stage_costs: np.ndarray  # (T,)
    value_start: float
    value_end: float
    optimal: bool  # built from a fixed point; otherwise costs are only bounds

    @property
    def steps(self) -> int:
        return self.controls.shape[0]

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.stage_costs)

    @property
    def total_cost(self) -> float:
        return float(self.stage_costs.sum())

    @property
    def telescoping_residual(self) -> float:
        """``|sum of stage costs + V(z_T) - V(z_0)|``; meaningful only when ``optimal``."""
        return abs(self.total_cost + self.value_end - self.value_start)

    def to_csv(self, stream: TextIO) -> None:
        n, m = self.states.shape[1], self.controls.shape[1]
        head = ["step"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
        stream.write(",".join(head + ["stage_cost", "cumulative_cost"]) + "\n")
        cum = self.cumulative
        for j in range(self.steps):
            cells = [str(j)] + [fmt(v) for v in self.states[j]] + [fmt(v) for v in self.controls[j]]
            cells += [fmt(self.stage_costs[j]), fmt(cum[j])]
            stream.write(",".join(cells) + "\n")
        if self.steps:
            stream.write(f"# telescoping_residual,{fmt(self.telescoping_residual)}\n")


def simulate(
    sys: SystemData,
    om: OptimizerMapData,
    x0,
    T: int,
    selection: str | Callable[[np.ndarray], np.ndarray] = "min-norm",
) -> Trajectory:
    """Closed loop ``z+ = A z + B v`` with ``v`` drawn from the optimizer slice."""
    if T < 0:
        raise ValueError("number of steps must be nonnegative")
    z = np.atleast_1d(np.asarray(x0, dtype=float))
    if z.shape != (sys.n,):
        raise DimensionMismatch(f"x0 must have length {sys.n}")
    if selection == "min-norm":
        pick = lambda x: min_norm_selection(om, x)  # noqa: E731
    elif callable(selection):
        pick = selection
    else:
        raise ValueError(f"unknown selection {selection!r}")
    states = [z]
    controls, costs = [], []
    for _ in range(T):
        v = np.atleast_1d(np.asarray(pick(z), dtype=float))
        costs.append(sys.stage_cost(z, v))
        controls.append(v)
        z = sys.A @ z + sys.B @ v
        states.append(z)
    V = om.value
    return Trajectory(
        np.array(states),
        np.array(controls).reshape(T, sys.m),
        np.array(costs, dtype=float),
        value_eval(V, states[0]),
        value_eval(V, states[-1]),
        V.k is None,
    )


def compose_stage_cost(Q: HPolytope, S: HPolytope | None, R: HPolytope) -> HPolytope:
    """Generator of ``(x, u) ↦ ψ_Q(x) + ψ_S(x, u) + ψ_R(u)``."""
    n, m = Q.dim, R.dim
    if S is not None and S.dim != n + m:
        raise DimensionMismatch(f"S must live in dimension {n + m}, got {S.dim}")
    parts = [
        VPolytope(embed(polar_h_to_v(Q).vertices, n + m, range(n))),
        VPolytope(embed(polar_h_to_v(R).vertices, n + m, range(n, n + m))),
    ]
    if S is not None:
        parts.append(polar_h_to_v(S))
    total = parts[0]
    for part in parts[1:]:
        total = minkowski_sum(total, part)
    return polar_v_to_h(total)
