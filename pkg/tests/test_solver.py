"""Iteration mechanics: preconditioner, shadow coordinates, both step forms,
the run loop with its stopping rules, and the trace diagnostics."""

import csv
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nonmono.numlin import min_eig_sym
from nonmono.ops import AffineOp, BoxNormalCone, SingularResolvent, pd_matrix
from nonmono.rules import StepsizeOutOfRange
from nonmono.solver import (
    HISTORY_DIM_CAP,
    NotGeometric,
    WrongBranch,
    assemble_preconditioner,
    cpa_step,
    make_problem,
    min_residual_rate,
    pppa_step,
    rlinear_fit,
    run,
    shadow,
)


def _monotone_problem():
    """Strongly monotone affine pair with nonzero offsets and a known solution."""
    DA = np.array([[1.0, 0.6, -0.2], [-0.6, 1.0, 0.4], [0.2, -0.4, 1.0]])
    qA = np.array([1.0, -2.0, 0.5])
    L = np.array([[0.5, -1.0, 0.25], [0.0, 0.75, -0.5]])
    A = AffineOp(DA, qA)
    B = AffineOp(np.eye(2), np.array([0.3, -0.1]))
    problem = make_problem(L, A, B, name="monotone-test")
    T, t = pd_matrix(problem)
    zstar = -np.linalg.solve(T, t)
    return problem, T, t, zstar


def test_make_problem_rejects_wrong_operator_kinds():
    L = np.eye(2)
    box = BoxNormalCone(np.zeros(2), np.ones(2))
    with pytest.raises(TypeError):
        make_problem(L, box, AffineOp(np.eye(2)))
    with pytest.raises(TypeError):
        make_problem(L, AffineOp(np.eye(2)), object())
    with pytest.raises(ValueError):
        make_problem(np.ones((2, 3)), AffineOp(np.eye(2)), AffineOp(np.eye(2)))


def test_preconditioner_definite():
    L = np.eye(2)
    from nonmono.numlin import grouped_svd
    M, U = assemble_preconditioner(L, grouped_svd(L), 0.5, 0.5)
    assert_allclose(M, np.block([[2.0 * np.eye(2), -np.eye(2)],
                                 [-np.eye(2), 2.0 * np.eye(2)]]))
    assert_allclose(U, np.eye(4))


def _check_semidef_basis(L, gamma, tau):
    from nonmono.numlin import grouped_svd
    svd = grouped_svd(L)
    M, U = assemble_preconditioner(L, svd, gamma, tau)
    n, m = L.shape[1], L.shape[0]
    _, X1, Y1 = svd.block(0)
    m1 = X1.shape[1]
    assert U.shape == (n + m, n + m - m1)
    assert_allclose(U.T @ U, np.eye(U.shape[1]), atol=1e-12)
    kern = np.vstack([math.sqrt(gamma / tau) * X1, Y1])
    assert np.linalg.norm(M @ kern) <= 1e-10
    assert np.linalg.norm(U.T @ kern) <= 1e-10
    assert min_eig_sym(M) >= -1e-9
    assert np.linalg.norm(M - U @ (U.T @ M)) <= 1e-10 * (1.0 + np.linalg.norm(M))
    return M, U


def test_preconditioner_semidefinite_identity_L():
    _check_semidef_basis(np.eye(2), 1.0, 1.0)


def test_preconditioner_semidefinite_saddle(saddle):
    L = saddle.problem.L
    M, U = _check_semidef_basis(L, 0.1, 2.5)
    assert U.shape == (5, 3)


def test_preconditioner_rejects_oversized_steps():
    from nonmono.numlin import grouped_svd
    L = np.eye(2)
    with pytest.raises(StepsizeOutOfRange):
        assemble_preconditioner(L, grouped_svd(L), 1.5, 1.5)


def test_shadow_definite_passthrough(singvals, rng):
    z = rng.standard_normal(6)
    s, flag = shadow(singvals.problem, 0.5, 0.5, z)
    assert not flag
    assert_allclose(s, z)
    with pytest.raises(WrongBranch):
        shadow(singvals.problem, 0.5, 0.5, z, require=True)


def test_shadow_is_scaled_basis_coordinates(saddle, singvals, rng):
    for bundle, gamma, tau in [(saddle, 0.1, 2.5), (singvals, 1.0, 1.0),
                               (saddle, 0.5, 0.5)]:
        problem = bundle.problem
        svd = problem.svd
        M, U = assemble_preconditioner(problem.L, svd, gamma, tau)
        m1 = svd.block(0)[1].shape[1]
        z = rng.standard_normal(problem.n + problem.m)
        s, flag = shadow(problem, gamma, tau, z)
        assert flag
        assert s.shape == (problem.n + problem.m - m1,)
        scale = np.ones(U.shape[1])
        scale[:m1] = math.sqrt((gamma + tau) / tau)
        assert_allclose(s, scale * (U.T @ z), atol=1e-10)


def test_shadow_ignores_kernel_component(saddle, rng):
    problem = saddle.problem
    gamma, tau = 0.1, 2.5
    _, X1, Y1 = problem.svd.block(0)
    z = rng.standard_normal(5)
    c = rng.standard_normal(X1.shape[1])
    bump = np.concatenate([math.sqrt(gamma / tau) * (X1 @ c), Y1 @ c])
    s0, _ = shadow(problem, gamma, tau, z)
    s1, _ = shadow(problem, gamma, tau, z + 3.0 * bump)
    assert_allclose(s0, s1, atol=1e-10)


def test_shadow_drs_form(rng):
    """With L = I and gamma = tau the shadow carries exactly x - y."""
    problem = make_problem(np.eye(3), AffineOp(np.eye(3)), AffineOp(np.eye(3)))
    z = rng.standard_normal(6)
    s, flag = shadow(problem, 1.0, 1.0, z)
    assert flag
    assert s.shape == (3,)
    assert np.linalg.norm(s) == pytest.approx(np.linalg.norm(z[:3] - z[3:]), rel=1e-10)


def test_cpa_step_solves_resolvent_inclusions(singvals, rng):
    problem = singvals.problem
    gamma, tau, lam = 0.7, 0.9, 1.3
    x = rng.standard_normal(3)
    y = rng.standard_normal(3)
    xbar, ybar, xn, yn = cpa_step(problem, gamma, tau, lam, x, y)
    DA, qA = problem.A.D, problem.A.q
    DB, qB = problem.B.D, problem.B.q
    w = x - gamma * (problem.L.T @ y)
    assert_allclose(xbar + gamma * (DA @ xbar + qA), w, atol=1e-12)
    u = y + tau * (problem.L @ (2.0 * xbar - x))
    assert_allclose(tau * ybar + DB @ ybar, DB @ u + tau * qB, atol=1e-12)
    assert_allclose(xn, x + lam * (xbar - x))
    assert_allclose(yn, y + lam * (ybar - y))


def test_cpa_step_fixed_at_solution(qp_indef, qp_rankdef):
    for bundle, gamma, tau in [(qp_indef, 0.2, 3.5), (qp_rankdef, 1.0 / 12.0, 4.0)]:
        problem = bundle.problem
        xstar, ystar = problem.solution
        xbar, ybar, xn, yn = cpa_step(problem, gamma, tau, 1.0, xstar, ystar)
        assert_allclose(xbar, xstar, atol=1e-10)
        assert_allclose(ybar, ystar, atol=1e-10)
        assert_allclose(xn, xstar, atol=1e-10)


def test_pppa_step_matches_cpa_step(saddle, singvals, rng):
    cases = [
        (saddle.problem, 0.1, 2.0, 0.9),
        (saddle.problem, 0.1, 2.5, 0.9),     # semidefinite preconditioner
        (singvals.problem, 0.8, 0.9, 1.2),
        (_monotone_problem()[0], 0.4, 0.3, 1.0),
    ]
    for problem, gamma, tau, lam in cases:
        T, t = pd_matrix(problem)
        M, _ = assemble_preconditioner(problem.L, problem.svd, gamma, tau)
        n = problem.n
        z = rng.standard_normal(problem.n + problem.m)
        for _ in range(50):
            xbar, ybar, xn, yn = cpa_step(problem, gamma, tau, lam, z[:n], z[n:])
            zbar_p, znext_p = pppa_step(T, M, lam, z, offset=t)
            assert_allclose(np.concatenate([xbar, ybar]), zbar_p,
                            atol=1e-9 * (1.0 + np.linalg.norm(z)))
            assert_allclose(np.concatenate([xn, yn]), znext_p,
                            atol=1e-9 * (1.0 + np.linalg.norm(z)))
            z = np.concatenate([xn, yn])


def test_pppa_step_singular():
    M = np.eye(2)
    with pytest.raises(SingularResolvent):
        pppa_step(-M, M, 1.0, np.ones(2))


def test_run_converges_immediately_at_solution(saddle, raw_plan):
    plan = raw_plan(0.1, 2.0, 0.9, saddle.problem.svd.norm)
    trace = run(saddle.problem, plan, z0=np.zeros(5))
    assert trace.converged and trace.status == "converged"
    assert trace.iters == 1
    assert trace.res_norms[0] == 0.0
    assert_allclose(trace.z_final, np.zeros(5))


def test_run_monotone_relaxation_sweep(raw_plan):
    problem, T, t, zstar = _monotone_problem()
    gamma = 0.4
    tau = 0.9 / (gamma * problem.svd.norm ** 2)
    M, _ = assemble_preconditioner(problem.L, problem.svd, gamma, tau)
    for lam in (0.5, 1.0, 1.9):
        plan = raw_plan(gamma, tau, lam, problem.svd.norm)
        trace = run(problem, plan, z0=np.ones(5), max_iter=10_000)
        assert trace.converged
        assert np.linalg.norm(trace.zbar_final - zstar) <= 1e-4
        # the recorded residual is the inclusion residual of zbar
        v = M @ (trace.z_final - trace.zbar_final)
        assert_allclose(v, T @ trace.zbar_final + t, atol=1e-10)
        assert trace.res_norms[-1] <= 1e-8
        assert trace.res_norms[-1] == pytest.approx(np.linalg.norm(v), rel=1e-9)


def test_run_divergence_detected(raw_plan):
    problem = make_problem(np.eye(1), AffineOp(np.array([[-5.0]])),
                           AffineOp(np.eye(1)))
    plan = raw_plan(0.1, 0.1, 1.0, 1.0)
    trace = run(problem, plan, z0=np.ones(2))
    assert trace.status == "diverged"
    assert not trace.converged
    assert min_residual_rate(trace) is None


def test_run_max_iter_status(raw_plan):
    problem, _, _, _ = _monotone_problem()
    gamma = 0.4
    tau = 0.9 / (gamma * problem.svd.norm ** 2)
    plan = raw_plan(gamma, tau, 1.0, problem.svd.norm)
    trace = run(problem, plan, z0=np.ones(5), max_iter=3)
    assert trace.status == "max_iter"
    assert trace.iters == 3
    assert len(trace.res_norms) == 3


def test_run_aborts_on_singular_resolvent(raw_plan):
    problem = make_problem(np.eye(1), AffineOp(np.array([[-10.0]])),
                           AffineOp(np.eye(1)))
    plan = raw_plan(0.1, 0.1, 1.0, 1.0)
    with pytest.raises(SingularResolvent) as exc_info:
        run(problem, plan, z0=np.ones(2))
    partial = exc_info.value.partial_trace
    assert partial.status == "aborted"
    assert partial.iters == 0
    assert len(partial.res_norms) == 0


def test_run_z0_length_checked(saddle, raw_plan):
    plan = raw_plan(0.1, 2.0, 0.9, 2.0)
    with pytest.raises(ValueError):
        run(saddle.problem, plan, z0=np.zeros(4))


def test_run_history_bookkeeping(raw_plan):
    problem, _, _, _ = _monotone_problem()
    gamma = 0.4
    tau = 0.9 / (gamma * problem.svd.norm ** 2)
    plan = raw_plan(gamma, tau, 1.0, problem.svd.norm)
    trace = run(problem, plan, z0=np.ones(5))
    assert trace.xs is not None and trace.xs.shape == (trace.iters, 3)
    assert trace.ybars.shape == (trace.iters, 2)
    # recorded residual equals its definition, recomputed from the history
    k = trace.iters // 2
    dx = trace.xs[k] - trace.xbars[k]
    dy = trace.ys[k] - trace.ybars[k]
    vx = dx / gamma - problem.L.T @ dy
    vy = -problem.L @ dx + dy / tau
    assert trace.res_norms[k] == pytest.approx(
        math.hypot(np.linalg.norm(vx), np.linalg.norm(vy)), rel=1e-12)
    off = run(problem, plan, z0=np.ones(5), keep_history=False)
    assert off.xs is None and off.ybars is None


def test_run_history_cap(raw_plan):
    n = (HISTORY_DIM_CAP + 6) // 2
    problem = make_problem(np.eye(n), AffineOp(np.eye(n), np.ones(n)),
                           AffineOp(np.eye(n)))
    plan = raw_plan(0.5, 0.5, 1.0, 1.0)
    auto = run(problem, plan)
    assert auto.xs is None
    kept = run(problem, plan, keep_history=True)
    assert kept.xs is not None and kept.xs.shape == (kept.iters, n)


def test_write_csv_round_trip(tmp_path, raw_plan):
    problem, _, _, _ = _monotone_problem()
    gamma = 0.4
    tau = 0.9 / (gamma * problem.svd.norm ** 2)
    plan = raw_plan(gamma, tau, 1.0, problem.svd.norm)
    trace = run(problem, plan, z0=np.ones(5))
    path = tmp_path / "trace.csv"
    trace.write_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == (["k", "res_norm", "projdiff_norm", "shadow_norm"]
                       + [f"x_{i}" for i in range(3)] + [f"y_{j}" for j in range(2)])
    assert len(rows) - 1 == len(trace.res_norms)
    k = trace.iters - 1
    assert float(rows[k + 1][1]) == trace.res_norms[k]
    assert float(rows[k + 1][4]) == trace.xs[k][0]


def test_min_residual_rate_formula(raw_plan):
    problem, _, _, _ = _monotone_problem()
    gamma = 0.4
    tau = 0.9 / (gamma * problem.svd.norm ** 2)
    trace = run(problem, raw_plan(gamma, tau, 1.0, problem.svd.norm), z0=np.ones(5))
    diag = min_residual_rate(trace)
    sq = trace.res_norms ** 2
    expected = np.minimum.accumulate(sq) * (np.arange(len(sq)) + 1.0)
    assert_allclose(diag, expected)


def test_rlinear_fit_recovers_clean_rate():
    series = 0.9 ** np.arange(100)
    assert rlinear_fit(series) == pytest.approx(0.9, abs=1e-9)
    series = 5.0 * 0.5 ** np.arange(60)
    assert rlinear_fit(series) == pytest.approx(0.5, abs=1e-9)


def test_rlinear_fit_rejections():
    with pytest.raises(NotGeometric):
        rlinear_fit(np.ones(50))                     # constant
    with pytest.raises(NotGeometric):
        rlinear_fit(0.9 ** np.arange(9))             # too short
    with pytest.raises(NotGeometric):
        rlinear_fit(2.0 ** np.arange(40))            # growing
    wobble = 0.9 ** np.arange(80) * np.where(np.arange(80) % 2 == 0, 1.0, 1e-4)
    with pytest.raises(NotGeometric):
        rlinear_fit(wobble)                          # not log-linear
    sparse = np.zeros(12)
    sparse[0] = 1.0
    with pytest.raises(NotGeometric):
        rlinear_fit(sparse)                          # too few positive entries
