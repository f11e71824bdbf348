import io
import json

import numpy as np
import pytest
from conftest import l1_stage

from minkowski_regulator.bellman import (
    SystemData,
    closed_loop_stage,
    cross_check_limits,
    fixed_point,
    is_stabilizable,
    iterate,
    lyapunov_decrease_factor,
    lyapunov_set,
    one_step,
    riccati_gain,
    scale_into_terminal,
    write_log,
)
from minkowski_regulator.errors import DimensionMismatch, NonConvergence, NotStabilizing
from minkowski_regulator.geometry import HPolytope, gauge, includes, set_distance
from oracles import GaugeFn, ZeroFn, grid_min, value_iteration_1d


def test_system_validation():
    C = l1_stage(1, 1)
    with pytest.raises(DimensionMismatch, match="A must be square"):
        SystemData([[1.0, 0.0]], [[1.0]], C)
    with pytest.raises(DimensionMismatch, match="B must have"):
        SystemData([[1.0]], [[1.0], [1.0]], C)
    with pytest.raises(DimensionMismatch, match="C must live"):
        SystemData([[1.0]], [[1.0]], HPolytope.box([1.0]))
    with pytest.raises(DimensionMismatch, match="Qf"):
        SystemData([[1.0]], [[1.0]], C, Qf=HPolytope.box([1.0, 1.0]))
    with pytest.raises(DimensionMismatch, match="K"):
        SystemData([[1.0]], [[1.0]], C, K=[[1.0, 2.0]])


def test_stabilizability():
    assert is_stabilizable(np.diag([2.0, 0.5]), np.array([[1.0], [0.0]]))
    assert not is_stabilizable(np.diag([2.0, 0.5]), np.array([[0.0], [1.0]]))
    with pytest.raises(NotStabilizing):
        SystemData(np.diag([2.0, 0.5]), [[0.0], [1.0]], l1_stage(2, 1))


def test_riccati_gain_stabilizes():
    A = np.array([[1.2, 1.0], [0.0, 1.1]])
    B = np.array([[0.0], [1.0]])
    K = riccati_gain(A, B)
    assert max(abs(np.linalg.eigvals(A + B @ K))) < 1.0


def test_auto_gain_is_zero_for_stable_A(scalar_stable):
    np.testing.assert_array_equal(scalar_stable.gain(), [[0.0]])


def test_first_lower_step_is_projection_of_C(scalar_stable):
    rec = iterate(scalar_stable, "lower", 1)[0]
    assert rec.rho_prev is None
    assert set_distance(rec.T, scalar_stable.C) < 1e-12
    # V_1(x) = min_u |x| + |u| = |x|
    np.testing.assert_allclose(sorted(rec.P.normals[:, 0]), [-1.0, 1.0])


@pytest.mark.parametrize("a", [0.5, 2.0, -1.5])
def test_scalar_lower_iterates_match_value_iteration(a):
    sys = SystemData([[a]], [[1.0]], l1_stage(1, 1))
    recs = iterate(sys, "lower", 5)
    ref = value_iteration_1d(a, 1.0, sys.C.normals, steps=5)
    for rec, (p, q) in zip(recs, ref):
        assert gauge(rec.P, [1.0]) == pytest.approx(p, abs=1e-3)
        assert gauge(rec.P, [-1.0]) == pytest.approx(q, abs=1e-3)


@pytest.mark.parametrize("seed", range(4))
def test_one_step_matches_grid(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(scale=0.8, size=(2, 2))
    B = rng.normal(size=(2, 1))
    C = l1_stage(2, 1)
    sys = SystemData(A, B, C)
    P = HPolytope.box([1.0, 2.0])
    nxt = one_step(sys, P).P_next
    for x in rng.normal(size=(4, 2)):
        ref, _ = grid_min(C.normals, A, B, x, GaugeFn(P.normals))
        assert gauge(nxt, x) == pytest.approx(ref, abs=1e-3 * (1 + ref))


def test_one_step_dimension_check(scalar_stable):
    with pytest.raises(DimensionMismatch):
        one_step(scalar_stable, HPolytope.box([1.0, 1.0]))


def test_lower_iteration_monotone_and_bounded(double_integrator):
    recs = iterate(double_integrator, "lower", 6)
    assert all(r.monotone_down for r in recs[1:])
    assert all(r.within_bounds for r in recs)
    D = double_integrator.D_plus
    assert all(includes(D, r.P) for r in recs)


def test_lyapunov_set_certified(double_integrator):
    ly = lyapunov_set(double_integrator)
    assert ly.certified and ly.inclusion <= 1 + 1e-8
    assert lyapunov_decrease_factor(double_integrator, ly.L, ly.K) <= 1 + 1e-8
    # sampled decrease: ψ_L((A+BK)x) + ℓ(x, Kx) <= ψ_L(x)
    Acl = double_integrator.A + double_integrator.B @ ly.K
    for x in np.random.default_rng(0).normal(size=(50, 2)):
        lhs = gauge(ly.L, Acl @ x) + double_integrator.stage_cost(x, ly.K @ x)
        assert lhs <= gauge(ly.L, x) * (1 + 1e-8) + 1e-12


def test_closed_loop_stage_substitutes_gain(double_integrator):
    K = np.array([[-0.5, -1.0]])
    Cx = closed_loop_stage(double_integrator, K)
    for x in np.random.default_rng(1).normal(size=(10, 2)):
        assert gauge(Cx, x) == pytest.approx(double_integrator.stage_cost(x, K @ x))


def test_lyapunov_rejects_unstable_gain(scalar_unstable):
    with pytest.raises(NotStabilizing):
        lyapunov_set(scalar_unstable, K=[[0.0]])


def test_upper_iteration_monotone(double_integrator):
    ly = lyapunov_set(double_integrator)
    recs = iterate(double_integrator, "upper", 6, ly)
    assert all(r.monotone_up for r in recs)
    assert all(r.within_bounds for r in recs)


def test_iterate_edge_cases(scalar_stable):
    assert iterate(scalar_stable, "lower", 0) == []
    with pytest.raises(ValueError):
        iterate(scalar_stable, "terminal", 2)
    with pytest.raises(ValueError):
        iterate(scalar_stable, "sideways", 2)


def test_non_convergence_keeps_records(double_integrator):
    with pytest.raises(NonConvergence) as err:
        iterate(double_integrator, "lower", None, max_iter=2)
    assert len(err.value.records) == 2


def test_fixed_point_scalar(scalar_stable, scalar_unstable):
    fp = fixed_point(scalar_stable)
    assert fp.k_star == 1
    np.testing.assert_allclose(sorted(fp.P_inf.normals[:, 0]), [-1.5, 1.5], atol=1e-12)
    assert fp.residual <= 1e-12
    fp = fixed_point(scalar_unstable)
    assert gauge(fp.P_inf, [1.0]) == pytest.approx(3.0, abs=1e-9)


def test_fixed_point_double_integrator_residual(double_integrator):
    fp = fixed_point(double_integrator)
    assert fp.residual <= 1e-7
    assert json.loads(json.dumps(fp.to_dict()))["k_star"] == fp.k_star


def test_terminal_mode_and_scaling(scalar_stable):
    Qf = HPolytope.box([10.0])
    sys = scalar_stable.with_terminal(Qf)
    recs = iterate(sys, "terminal", 4)
    # from V_0 = 0.1|x| the iterates reach 1.5|x| after finitely many steps
    assert gauge(recs[-1].P, [1.0]) == pytest.approx(1.5, abs=1e-9)
    L = HPolytope.box([100.0])
    assert includes(Qf, scale_into_terminal(L, Qf))
    assert scale_into_terminal(HPolytope.box([1.0]), Qf).n_facets == 2


def test_cross_check_with_terminal(scalar_stable):
    sys = scalar_stable.with_terminal(HPolytope.box([0.5]))
    cc = cross_check_limits(sys)
    assert cc.sandwich_ok
    assert cc.rho_lower_upper <= 1e-7
    assert cc.rho_lower_terminal <= 1e-7 and cc.rho_upper_terminal <= 1e-7


def test_write_log_json_lines(scalar_stable):
    buf = io.StringIO()
    write_log(iterate(scalar_stable, "lower", 3), buf)
    lines = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert [d["k"] for d in lines] == [1, 2, 3]
    assert lines[0]["rho_prev"] is None
    assert lines[2]["P"]["dim"] == 1


def test_zero_terminal_value_oracle_consistency(scalar_stable):
    # the grid oracle with V = 0 reproduces V_1 = |x|
    v, _ = grid_min(scalar_stable.C.normals, [[0.5]], [[1.0]], [2.0], ZeroFn())
    assert v == pytest.approx(2.0, abs=1e-9)
