"""Command-line front end.

Exit codes: 0 success, 1 bad input or violated assumption, 2 non-convergence.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .approximation import SmoothBody, approximate_problem
from .bellman import (
    SystemData,
    cross_check_limits,
    fixed_point,
    iterate,
    lyapunov_set,
    write_log,
)
from .errors import MinkowskiError, NonConvergence
from .geometry import DEFAULT_TOL, HPolytope, Tolerances, gauge
from .regulator import OptimizerMapData, PWLValueFunction, compose_stage_cost, simulate
from .serialize import dumps

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGENCE = 0, 1, 2


class ProblemError(ValueError):
    """Invalid problem file; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Problem:
    A: np.ndarray
    B: np.ndarray
    stage: HPolytope | SmoothBody
    terminal: HPolytope | SmoothBody | None
    K: np.ndarray | str
    tol: Tolerances
    mode: str
    horizon: int | str

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def smooth_fields(self) -> list[str]:
        return [name for name, s in (("stage", self.stage), ("terminal", self.terminal)) if isinstance(s, SmoothBody)]

    def system(self) -> SystemData:
        smooth = self.smooth_fields()
        if smooth:
            raise ProblemError(smooth[0], "smooth set; approximate it first with the 'approx' command")
        return SystemData(self.A, self.B, self.stage, self.terminal, self.K, self.tol)


def _matrix(data: dict, field: str) -> np.ndarray:
    if field not in data:
        raise ProblemError(field, "missing")
    try:
        M = np.array(data[field], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemError(field, "expected a numeric matrix") from exc
    if M.ndim != 2 or M.size == 0:
        raise ProblemError(field, f"expected a nonempty 2-D matrix, got shape {M.shape}")
    if not np.isfinite(M).all():
        raise ProblemError(field, "entries must be finite")
    return M


def _parse_set(value, field: str, dim: int) -> HPolytope | SmoothBody:
    if not isinstance(value, dict):
        raise ProblemError(field, "expected an object")
    try:
        if "normals" in value:
            declared = int(value.get("dim", dim))
            if declared != dim:
                raise ProblemError(field, f"dimension {declared} does not match expected {dim}")
            return HPolytope(value["normals"], dim=dim)
        if "kind" in value:
            body = SmoothBody.from_dict({"dim": dim, **value})
            if body.dim != dim:
                raise ProblemError(field, f"dimension {body.dim} does not match expected {dim}")
            return body
    except ProblemError:
        raise
    except (MinkowskiError, ValueError, TypeError, KeyError) as exc:
        raise ProblemError(field, str(exc)) from exc
    raise ProblemError(field, "expected an H-polytope {dim, normals} or a smooth body {kind, ...}")


def _parse_stage(value, n: int, m: int) -> HPolytope | SmoothBody:
    if not isinstance(value, dict):
        raise ProblemError("stage", "expected an object")
    if "C" in value:
        return _parse_set(value["C"], "stage.C", n + m)
    if "Q" in value or "R" in value:
        Q = _parse_set(value.get("Q"), "stage.Q", n)
        R = _parse_set(value.get("R"), "stage.R", m)
        S = _parse_set(value["S"], "stage.S", n + m) if value.get("S") is not None else None
        for name, s in (("stage.Q", Q), ("stage.R", R), ("stage.S", S)):
            if isinstance(s, SmoothBody):
                raise ProblemError(name, "composed stage costs need polytopic parts")
        return compose_stage_cost(Q, S, R)
    return _parse_set(value, "stage", n + m)


def parse_problem(data: dict) -> Problem:
    if not isinstance(data, dict):
        raise ProblemError("<root>", "expected a JSON object")
    A = _matrix(data, "A")
    if A.shape[0] != A.shape[1]:
        raise ProblemError("A", f"must be square, got shape {A.shape}")
    n = A.shape[0]
    B = _matrix(data, "B")
    if B.shape[0] != n:
        raise ProblemError("B", f"must have {n} rows to match A, got shape {B.shape}")
    m = B.shape[1]
    stage = _parse_stage(data.get("stage"), n, m)
    term = data.get("terminal")
    terminal = None if term is None else _parse_set(term, "terminal", n)

    K = data.get("K", "auto")
    if K != "auto":
        try:
            K = np.array(K, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ProblemError("K", "expected a matrix or 'auto'") from exc
        if K.shape != (m, n):
            raise ProblemError("K", f"must have shape {(m, n)}, got {K.shape}")

    tol_data = data.get("tolerances") or {}
    if not isinstance(tol_data, dict):
        raise ProblemError("tolerances", "expected an object")
    try:
        tol = Tolerances(**{k: float(v) for k, v in tol_data.items()})
    except (TypeError, ValueError) as exc:
        raise ProblemError("tolerances", str(exc)) from exc

    mode = data.get("mode", "lower")
    if mode not in ("lower", "upper", "terminal"):
        raise ProblemError("mode", f"unknown mode {mode!r}")
    if mode == "terminal" and terminal is None:
        raise ProblemError("terminal", "mode 'terminal' needs a terminal set")
    horizon = data.get("horizon", "fixpoint")
    if horizon != "fixpoint" and not (isinstance(horizon, int) and not isinstance(horizon, bool) and horizon >= 0):
        raise ProblemError("horizon", "expected a nonnegative integer or 'fixpoint'")
    return Problem(A, B, stage, terminal, K, tol, mode, horizon)


def _set_to_dict(s):
    return None if s is None else s.to_dict()


def problem_to_dict(p: Problem) -> dict:
    return {
        "A": p.A.tolist(),
        "B": p.B.tolist(),
        "stage": {"C": p.stage.to_dict()} if isinstance(p.stage, HPolytope) else p.stage.to_dict(),
        "terminal": _set_to_dict(p.terminal),
        "K": p.K if isinstance(p.K, str) else p.K.tolist(),
        "tolerances": {
            "eps_geom": p.tol.eps_geom,
            "eps_inclusion": p.tol.eps_inclusion,
            "eps_fixpoint": p.tol.eps_fixpoint,
        },
        "mode": p.mode,
        "horizon": p.horizon,
    }


def load_problem(path: str, args) -> Problem:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ProblemError("<file>", str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ProblemError("<file>", f"invalid JSON: {exc}") from exc
    prob = parse_problem(data)
    overrides = {}
    if args.tol_geom is not None:
        overrides["eps_geom"] = args.tol_geom
    if args.tol_fixpoint is not None:
        overrides["eps_fixpoint"] = args.tol_fixpoint
    if overrides:
        try:
            prob = replace(prob, tol=replace(prob.tol, **overrides))
        except ValueError as exc:
            raise ProblemError("tolerances", str(exc)) from exc
    return prob


# ---------------------------------------------------------------------------
# output


class _Sink:
    """Write to ``--out/name`` when given, else to stdout."""

    def __init__(self, args, name: str):
        self.path = Path(args.out) / name if args.out else None
        self.buf = io.StringIO()

    def write(self, text: str):
        self.buf.write(text)

    def close(self):
        if self.path is None:
            sys.stdout.write(self.buf.getvalue())
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(self.buf.getvalue(), encoding="utf-8")


def _summary(records) -> dict:
    last = records[-1] if records else None
    return {
        "k": last.k if last else 0,
        "final_rho": last.rho_prev if last else None,
        "monotone_down": all(r.monotone_down for r in records),
        "monotone_up": all(r.monotone_up for r in records[1:]) if len(records) > 1 else None,
        "within_bounds": all(r.within_bounds for r in records),
    }


def cmd_iterate(args) -> int:
    prob = load_problem(args.file, args)
    mode = args.mode or prob.mode
    horizon = prob.horizon if args.horizon is None else args.horizon
    if horizon != "fixpoint" and horizon < 0:
        raise ProblemError("--horizon", "must be nonnegative")
    sys_ = prob.system()
    if mode == "terminal" and sys_.Qf is None:
        raise ProblemError("terminal", "mode 'terminal' needs a terminal set")
    lyap = lyapunov_set(sys_) if mode == "upper" else None
    N = None if horizon == "fixpoint" else int(horizon)
    out = _Sink(args, "iterate.jsonl")
    code = EXIT_OK
    try:
        records = iterate(sys_, mode, N, lyap, max_iter=args.max_iter)
    except NonConvergence as exc:
        records = exc.records or []
        code = EXIT_NONCONVERGENCE
    write_log(records, out)
    summary = {"mode": mode, "converged": code == EXIT_OK, **_summary(records)}
    out.write(dumps({"summary": summary}) + "\n")
    out.close()
    return code


def cmd_fixpoint(args) -> int:
    prob = load_problem(args.file, args)
    sys_ = prob.system()
    fp = fixed_point(sys_, max_iter=args.max_iter)
    result = fp.to_dict()
    result["value_function"] = PWLValueFunction.from_polytope(fp.P_inf).to_dict()
    if args.cross_check:
        lyap = lyapunov_set(sys_)
        cc = cross_check_limits(sys_, lyap, max_iter=args.max_iter)
        result["cross_check"] = cc.to_dict()
        result["K"] = lyap.K.tolist()
    out = _Sink(args, "fixpoint.json")
    out.write(dumps(result) + "\n")
    out.close()
    return EXIT_OK


def _parse_vector(text: str, n: int, field: str) -> np.ndarray:
    try:
        x = np.array([float(t) for t in text.replace(";", ",").split(",") if t.strip()])
    except ValueError as exc:
        raise ProblemError(field, f"cannot parse {text!r}") from exc
    if x.shape != (n,):
        raise ProblemError(field, f"expected {n} components, got {x.size}")
    return x


def cmd_simulate(args) -> int:
    prob = load_problem(args.file, args)
    sys_ = prob.system()
    x0 = _parse_vector(args.x0, sys_.n, "--x0")
    if args.steps < 0:
        raise ProblemError("--steps", "must be nonnegative")
    if args.use_iterate is not None:
        if args.use_iterate < 1:
            raise ProblemError("--use-iterate", "must be at least 1")
        rec = iterate(sys_, "lower", args.use_iterate)[-1]
        om = OptimizerMapData.from_sets(rec.P, rec.T, rec.k)
    else:
        fp = fixed_point(sys_, max_iter=args.max_iter)
        om = OptimizerMapData.from_sets(fp.P_inf, fp.T_inf)
    traj = simulate(sys_, om, x0, args.steps)
    out = _Sink(args, "trajectory.csv")
    traj.to_csv(out)
    out.close()
    return EXIT_OK


def _parse_points(text: str | None, n: int) -> list[np.ndarray]:
    if not text:
        return []
    return [_parse_vector(chunk, n, "--points") for chunk in text.split(";") if chunk.strip()] if n > 1 else [
        _parse_vector(chunk, 1, "--points") for chunk in text.replace(";", ",").split(",") if chunk.strip()
    ]


def cmd_approx(args) -> int:
    if not args.delta > 0:
        raise ProblemError("--delta", "must be positive")
    prob = load_problem(args.file, args)
    points = _parse_points(args.points, prob.n)
    smooth = prob.smooth_fields()
    lower, upper, sandwiches = approximate_problem(
        prob.A, prob.B, prob.stage, prob.terminal, args.delta, K=prob.K, seed=args.seed, tol=prob.tol
    )
    lo_prob = replace(prob, stage=lower.C, terminal=lower.Qf)
    up_prob = replace(prob, stage=upper.C, terminal=upper.Qf)
    report: dict = {
        "delta": args.delta,
        "smooth_sets": smooth,
        "note": "no smooth sets" if not smooth else None,
        "sandwiches": sandwiches,
        "lower": problem_to_dict(lo_prob),
        "upper": problem_to_dict(up_prob),
    }
    if points:
        fp_lo = fixed_point(lower, max_iter=args.max_iter)
        fp_up = fixed_point(upper, max_iter=args.max_iter)
        report["bracket"] = [
            {"x": x.tolist(), "lower": gauge(fp_lo.P_inf, x), "upper": gauge(fp_up.P_inf, x)} for x in points
        ]
    if args.out:
        for name, p in (("lower.json", lo_prob), ("upper.json", up_prob)):
            sink = _Sink(args, name)
            sink.write(dumps(problem_to_dict(p)) + "\n")
            sink.close()
    out = _Sink(args, "approx.json")
    out.write(dumps(report) + "\n")
    out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol-fixpoint", type=float, default=None, help=f"fixed-point threshold (default {DEFAULT_TOL.eps_fixpoint})")
    common.add_argument("--tol-geom", type=float, default=None, help=f"redundancy slack (default {DEFAULT_TOL.eps_geom})")
    common.add_argument("--max-iter", type=int, default=1000)
    common.add_argument("--seed", type=int, default=0, help="direction sampling seed")
    common.add_argument("--out", default=None, help="directory for output files (default: stdout)")

    parser = argparse.ArgumentParser(prog="minkreg", description="Minkowski-gauge regulator for linear systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("iterate", parents=[common], help="Bellman iterates as JSON lines")
    p.add_argument("file")
    p.add_argument("--mode", choices=["lower", "upper", "terminal"], default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("fixpoint", parents=[common], help="fixed point of the set dynamics")
    p.add_argument("file")
    p.add_argument("--cross-check", action="store_true", help="compare lower/upper/terminal limits")
    p.set_defaults(func=cmd_fixpoint)

    p = sub.add_parser("simulate", parents=[common], help="closed-loop trajectory as CSV")
    p.add_argument("file")
    p.add_argument("--x0", required=True, help="initial state, comma separated")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--use-iterate", type=int, default=None, metavar="K", help="use the K-th lower iterate")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("approx", parents=[common], help="polytopic sandwiches of smooth sets")
    p.add_argument("file")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--points", default=None, help="sample states for the value bracket, ';' separated")
    p.set_defaults(func=cmd_approx)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (MinkowskiError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
