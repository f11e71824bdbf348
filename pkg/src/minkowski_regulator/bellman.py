"""Set dynamics of the generator sets ``P_k`` and their fixed point.

The value function ``V_k`` is the gauge of ``P_k``. One Bellman step maps
``P`` to ``P_x (C* ⊕ (A B)^T P*)*``; everything here is that map plus the
bookkeeping around it (start sets, stopping rule, monitors, logs).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Literal

import numpy as np
import scipy.linalg

from .errors import CertificationFailed, DimensionMismatch, NonConvergence, NotStabilizing
from .geometry import (
    DEFAULT_TOL,
    HPolytope,
    Tolerances,
    VPolytope,
    inclusion_factor,
    irreducible,
    linear_image,
    minkowski_sum,
    polar_h_to_v,
    polar_v_to_h,
    project_fm,
    set_distance,
    support_h,
)
from .serialize import dumps

Mode = Literal["lower", "upper", "terminal"]


def _spectral_radius(M: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvals(M)).max(initial=0.0))


def is_stabilizable(A: np.ndarray, B: np.ndarray, tol: float = 1e-9) -> bool:
    """PBH test restricted to eigenvalues on or outside the unit circle."""
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1.0 - tol:
            M = np.hstack([A - lam * np.eye(n), B.astype(complex)])
            if np.linalg.matrix_rank(M, tol=1e-9 * max(1.0, np.abs(M).max())) < n:
                return False
    return True


def riccati_gain(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Stabilizing gain ``K`` (``u = K x``) from the identity-weight discrete Riccati equation."""
    n, m = B.shape
    X = scipy.linalg.solve_discrete_are(A, B, np.eye(n), np.eye(m))
    return -np.linalg.solve(np.eye(m) + B.T @ X @ B, B.T @ X @ A)


@dataclass(frozen=True, eq=False)
class SystemData:
    """``x+ = A x + B u`` with stage cost ``ψ_C(x, u)`` and optional terminal cost ``ψ_Qf(x)``.

    ``K`` is either a feedback matrix or ``"auto"``; it only matters for the
    Lyapunov set used by the upper iteration.
    """

    A: np.ndarray
    B: np.ndarray
    C: HPolytope
    Qf: HPolytope | None = None
    K: np.ndarray | str = "auto"
    tol: Tolerances = DEFAULT_TOL

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        if B.ndim == 1:
            B = B.reshape(n, -1) if B.size % n == 0 and B.size else B
        B = np.atleast_2d(B)
        if B.shape[0] != n:
            raise DimensionMismatch(f"B must have {n} rows, got shape {B.shape}")
        if not (np.isfinite(A).all() and np.isfinite(B).all()):
            raise ValueError("A and B must be finite")
        m = B.shape[1]
        if self.C.dim != n + m:
            raise DimensionMismatch(f"C must live in dimension {n + m}, got {self.C.dim}")
        if self.Qf is not None and self.Qf.dim != n:
            raise DimensionMismatch(f"Qf must live in dimension {n}, got {self.Qf.dim}")
        K = self.K
        if not isinstance(K, str):
            K = np.atleast_2d(np.asarray(K, dtype=float))
            if K.shape != (m, n):
                raise DimensionMismatch(f"K must have shape {(m, n)}, got {K.shape}")
        elif K != "auto":
            raise ValueError("K must be a matrix or 'auto'")
        if not is_stabilizable(A, B):
            raise NotStabilizing("(A, B) is not stabilizable")
        A.flags.writeable = False
        B.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "K", K)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def AB(self) -> np.ndarray:
        return np.hstack([self.A, self.B])

    def gain(self) -> np.ndarray:
        """The configured feedback, resolving ``"auto"``."""
        if not isinstance(self.K, str):
            return self.K
        if _spectral_radius(self.A) < 1.0:
            return np.zeros((self.m, self.n))
        return riccati_gain(self.A, self.B)

    def stage_cost(self, x, u) -> float:
        z = np.concatenate([np.atleast_1d(x), np.atleast_1d(u)])
        return float(max(0.0, (self.C.normals @ z).max()))

    def with_terminal(self, Qf: HPolytope | None) -> "SystemData":
        return SystemData(self.A, self.B, self.C, Qf, self.K, self.tol)

    @property
    def D_plus(self) -> HPolytope:
        """Projection of ``C`` onto the state coordinates; contains every iterate."""
        return project_fm(self.C, range(self.n), self.tol)


@dataclass(frozen=True)
class StepResult:
    T_next: HPolytope
    P_next: HPolytope


def one_step_polar(sys: SystemData, P_star: VPolytope) -> StepResult:
    """Bellman step from the polar of the current generator set."""
    if P_star.dim != sys.n:
        raise DimensionMismatch(f"generator set has dimension {P_star.dim}, expected {sys.n}")
    tol = sys.tol
    C_star = polar_h_to_v(sys.C, tol)
    if not P_star.vertices.any():
        T = irreducible(sys.C, tol)
    else:
        image = linear_image(sys.AB.T, P_star, tol)
        T = polar_v_to_h(minkowski_sum(C_star, image, tol), tol)
    return StepResult(T, project_fm(T, range(sys.n), tol))


def one_step(sys: SystemData, P: HPolytope) -> StepResult:
    if P.dim != sys.n:
        raise DimensionMismatch(f"P has dimension {P.dim}, expected {sys.n}")
    return one_step_polar(sys, polar_h_to_v(P, sys.tol))


@dataclass(frozen=True)
class IterateRecord:
    k: int
    P: HPolytope
    T: HPolytope
    rho_prev: float | None  # None when the predecessor is the whole space
    monotone_up: bool  # P_{k-1} ⊆ P_k
    monotone_down: bool  # P_k ⊆ P_{k-1}
    within_bounds: bool  # L ⊆ P_k ⊆ D+ (L only when known)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "P": self.P.to_dict(),
            "T": self.T.to_dict(),
            "rho_prev": self.rho_prev,
            "monotone_up": self.monotone_up,
            "monotone_down": self.monotone_down,
            "within_bounds": self.within_bounds,
        }


def write_log(records, stream) -> None:
    """One JSON object per line."""
    for rec in records:
        stream.write(dumps(rec.to_dict()) + "\n")


# ---------------------------------------------------------------------------
# Lyapunov set


@dataclass(frozen=True)
class LyapunovResult:
    L: HPolytope
    K: np.ndarray
    truncation_depth: int
    certified: bool
    inclusion: float  # λ with L ⊆ λ ((A+BK)^T L* ⊕ C_x*)*


def closed_loop_stage(sys: SystemData, K: np.ndarray) -> HPolytope:
    """``C_x`` with gauge ``x ↦ ψ_C(x, K x)``."""
    N = sys.C.normals
    rows = N[:, : sys.n] + N[:, sys.n:] @ K
    return HPolytope(rows)


def lyapunov_decrease_factor(sys: SystemData, L: HPolytope, K: np.ndarray, C_x: HPolytope | None = None) -> float:
    """Smallest λ with ``L ⊆ λ ((A+BK)^T L* ⊕ C_x*)*``; the decrease holds iff λ ≤ 1."""
    tol = sys.tol
    C_x = C_x if C_x is not None else closed_loop_stage(sys, K)
    M = (sys.A + sys.B @ K).T
    grown = minkowski_sum(linear_image(M, polar_h_to_v(L, tol), tol), polar_h_to_v(C_x, tol), tol)
    return inclusion_factor(L, polar_v_to_h(grown, tol))


def lyapunov_set(sys: SystemData, K=None, eps_trunc: float = 0.1, max_depth: int = 500, retries: int = 3) -> LyapunovResult:
    """Polytopic control-Lyapunov set for the feedback ``K``.

    Partial sums ``S_J = ⊕_{j≤J} M^j C_x*`` (``M = (A+BK)^T``) are grown until
    successive ones are ``eps_trunc``-close and ``M^{J+1} C_x* ⊆ λ C_x*`` with
    ``λ < 1``. Then ``L = (1-λ) S_J*`` satisfies the decrease condition; it is
    still verified by an explicit inclusion check, deepening on failure.
    """
    tol = sys.tol
    K = sys.gain() if K is None or isinstance(K, str) else np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (sys.m, sys.n):
        raise DimensionMismatch(f"K must have shape {(sys.m, sys.n)}, got {K.shape}")
    Acl = sys.A + sys.B @ K
    if _spectral_radius(Acl) >= 1.0:
        raise NotStabilizing("A + B K is not strictly stable")
    M = Acl.T
    C_x = closed_loop_stage(sys, K)
    Cx_star = polar_h_to_v(C_x, tol)

    S = Cx_star
    term = Cx_star.vertices
    prev_h = polar_v_to_h(S, tol)
    depth = 0
    attempt = 0
    target = eps_trunc
    while depth < max_depth:
        depth += 1
        term = term @ M.T
        S = minkowski_sum(S, VPolytope(term), tol)
        S_h = polar_v_to_h(S, tol)
        # tail bound: the next summand lies in lam * C_x*
        lam = max(support_h(C_x, v) for v in term @ M.T)
        close = set_distance(S_h, prev_h) <= target
        prev_h = S_h
        if not (close and lam < 1.0):
            continue
        L = S_h.scaled(1.0 - lam)
        factor = lyapunov_decrease_factor(sys, L, K, C_x)
        if factor <= 1.0 + tol.eps_inclusion:
            return LyapunovResult(L, K, depth, True, factor)
        attempt += 1
        if attempt > retries:
            break
        target /= 10.0
    raise CertificationFailed(f"no certified Lyapunov set up to truncation depth {depth}")


def scale_into_terminal(L: HPolytope, Qf: HPolytope) -> HPolytope:
    """``L / max(μ*, 1)`` with ``μ* = min{η : L ⊆ η Qf}``."""
    mu = max(inclusion_factor(L, Qf), 1.0)
    return L if mu == 1.0 else L.scaled(1.0 / mu)


# ---------------------------------------------------------------------------
# iteration


def _start(sys: SystemData, mode: str, lyapunov: LyapunovResult | None) -> HPolytope | None:
    if mode == "lower":
        return None
    if mode == "upper":
        if lyapunov is None or not lyapunov.certified:
            raise ValueError("upper mode needs a certified Lyapunov set")
        return lyapunov.L
    if mode == "terminal":
        if sys.Qf is None:
            raise ValueError("terminal mode needs a terminal set Qf")
        return sys.Qf
    raise ValueError(f"unknown mode {mode!r}")


def iter_records(sys: SystemData, P0: HPolytope | None, L: HPolytope | None = None) -> Iterator[IterateRecord]:
    """Endless record stream from ``P0`` (``None`` means the whole space, i.e. ``V_0 = 0``)."""
    tol = sys.tol
    D_plus = sys.D_plus
    prev = P0
    k = 0
    while True:
        k += 1
        step = one_step_polar(sys, VPolytope.origin(sys.n) if prev is None else polar_h_to_v(prev, tol))
        P = step.P_next
        if prev is None:
            rho, up, down = None, False, True
        else:
            lam_down = inclusion_factor(P, prev)
            lam_up = inclusion_factor(prev, P)
            rho = max(lam_down, lam_up) - 1.0
            up = lam_up <= 1.0 + tol.eps_inclusion
            down = lam_down <= 1.0 + tol.eps_inclusion
        bounded = inclusion_factor(P, D_plus) <= 1.0 + tol.eps_inclusion
        if L is not None:
            bounded = bounded and inclusion_factor(L, P) <= 1.0 + tol.eps_inclusion
        yield IterateRecord(k, P, step.T_next, rho, up, down, bounded)
        prev = P


def iterate(
    sys: SystemData,
    mode: Mode = "lower",
    N: int | None = None,
    lyapunov: LyapunovResult | None = None,
    max_iter: int = 1000,
) -> list[IterateRecord]:
    """Records for ``k = 1..N``; with ``N=None`` stop once ``ρ(P_k, P_{k-1}) <= eps_fixpoint``.

    In upper mode the bound flag also checks ``L ⊆ P_k``.
    """
    if mode == "upper" and lyapunov is None:
        lyapunov = lyapunov_set(sys)
    P0 = _start(sys, mode, lyapunov)
    L = lyapunov.L if (mode == "upper" and lyapunov is not None) else None
    records: list[IterateRecord] = []
    if N is not None and N < 1:
        return records
    for rec in iter_records(sys, P0, L):
        records.append(rec)
        if N is not None:
            if rec.k >= N:
                return records
            continue
        if rec.rho_prev is not None and rec.rho_prev <= sys.tol.eps_fixpoint:
            return records
        if rec.k >= max_iter:
            raise NonConvergence(f"no convergence within {max_iter} iterations", records)


@dataclass(frozen=True)
class FixedPoint:
    P_inf: HPolytope
    T_inf: HPolytope
    k_star: int | None
    residual: float
    iterations: int
    records: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "P_inf": self.P_inf.to_dict(),
            "T_inf": self.T_inf.to_dict(),
            "alphas": self.P_inf.normals.tolist(),
            "k_star": self.k_star,
            "residual": self.residual,
            "iterations": self.iterations,
        }


def fixed_point(sys: SystemData, max_iter: int = 1000) -> FixedPoint:
    """Lower iteration to tolerance.

    ``k_star`` is reported when two consecutive iterates coincide to
    ``eps_inclusion`` (finite determination); plain ρ-convergence leaves it
    ``None``.
    """
    records = iterate(sys, "lower", None, max_iter=max_iter)
    last = records[-1]
    k_star = None
    for rec in records:
        if rec.rho_prev is not None and rec.rho_prev <= sys.tol.eps_inclusion:
            k_star = rec.k - 2
            break
    if k_star is not None:
        final = records[k_star + 1]  # P_{k*+2}
    else:
        final = last
    P_inf, T_inf = final.P, final.T
    residual = set_distance(P_inf, one_step(sys, P_inf).P_next)
    return FixedPoint(P_inf, T_inf, k_star, residual, last.k, records)


@dataclass(frozen=True)
class CrossCheck:
    rho_lower_upper: float
    rho_lower_terminal: float | None
    rho_upper_terminal: float | None
    sandwich_ok: bool
    lower: list = field(repr=False, default_factory=list)
    upper: list = field(repr=False, default_factory=list)
    terminal: list | None = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "rho_lower_upper": self.rho_lower_upper,
            "rho_lower_terminal": self.rho_lower_terminal,
            "rho_upper_terminal": self.rho_upper_terminal,
            "sandwich_ok": self.sandwich_ok,
        }


def _extend(records: list[IterateRecord], stream: Iterator[IterateRecord], n: int) -> list[IterateRecord]:
    while len(records) < n:
        records.append(next(stream))
    return records


def cross_check_limits(sys: SystemData, lyapunov: LyapunovResult | None = None, max_iter: int = 1000) -> CrossCheck:
    """Run lower, upper and (with ``Qf``) terminal iterations to tolerance and compare limits.

    When ``Qf`` is present the upper run starts from ``L`` scaled into ``Qf``
    so that the three initial polars are nested and the per-step sandwich
    ``P_upper ⊆ P_terminal ⊆ P_lower`` applies.
    """
    tol = sys.tol
    lyapunov = lyapunov or lyapunov_set(sys)
    L = lyapunov.L if sys.Qf is None else scale_into_terminal(lyapunov.L, sys.Qf)

    def run(P0):
        stream = iter_records(sys, P0, None)
        recs = []
        for rec in stream:
            recs.append(rec)
            if rec.rho_prev is not None and rec.rho_prev <= tol.eps_fixpoint:
                return recs, stream
            if rec.k >= max_iter:
                raise NonConvergence(f"no convergence within {max_iter} iterations", recs)

    lower, s_lo = run(None)
    upper, s_up = run(L)
    terminal = s_te = None
    if sys.Qf is not None:
        terminal, s_te = run(sys.Qf)
    n = max(len(lower), len(upper), len(terminal or []))
    _extend(lower, s_lo, n)
    _extend(upper, s_up, n)
    if terminal is not None:
        _extend(terminal, s_te, n)

    slack = 1.0 + tol.eps_inclusion
    ok = True
    for k in range(n):
        mid = terminal[k].P if terminal is not None else None
        if mid is not None:
            ok &= inclusion_factor(upper[k].P, mid) <= slack and inclusion_factor(mid, lower[k].P) <= slack
        else:
            ok &= inclusion_factor(upper[k].P, lower[k].P) <= slack
    P_lo, P_up = lower[-1].P, upper[-1].P
    rho_lt = rho_ut = None
    if terminal is not None:
        rho_lt = set_distance(P_lo, terminal[-1].P)
        rho_ut = set_distance(P_up, terminal[-1].P)
    return CrossCheck(set_distance(P_lo, P_up), rho_lt, rho_ut, bool(ok), lower, upper, terminal)


__all__ = [
    "SystemData",
    "StepResult",
    "IterateRecord",
    "LyapunovResult",
    "FixedPoint",
    "CrossCheck",
    "one_step",
    "one_step_polar",
    "iterate",
    "iter_records",
    "fixed_point",
    "lyapunov_set",
    "lyapunov_decrease_factor",
    "closed_loop_stage",
    "scale_into_terminal",
    "cross_check_limits",
    "write_log",
    "is_stabilizable",
    "riccati_gain",
]
