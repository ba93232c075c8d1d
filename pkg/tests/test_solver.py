import numpy as np
import pytest
import scipy.sparse as sp

from xfemp.assembly import (BoundaryConditions, MaterialSpec,
                            StabilizedLagrange, assemble)
from xfemp.cutcell import partition_all
from xfemp.enrichment import build_enrichment
from xfemp.levelset import VerticalPlane, build_levelset
from xfemp.mesh import build_structured_mesh
from xfemp.precond import build_tb, make_preconditioner
from xfemp.solver import (GmresResult, JacobiPreconditioner, LinearProblem,
                          SingularMatrixError, SolverConfig, build_ilu0,
                          direct_solve, gmres_solve, newton_solve)


def poisson5(n):
    """5-point Laplacian on an n-by-n grid."""
    main = 4.0 * np.ones(n * n)
    side = -np.ones(n * n - 1)
    side[np.arange(1, n * n) % n == 0] = 0.0
    updown = -np.ones(n * n - n)
    return sp.diags([main, side, side, updown, updown],
                    [0, 1, -1, n, -n]).tocsr()


def test_direct_identity():
    b = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(direct_solve(sp.eye(3).tocsr(), b), b)


def test_direct_two_by_two():
    a = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 3.0]]))
    np.testing.assert_allclose(direct_solve(a, np.array([3.0, 4.0])), [1.0, 1.0])


def test_direct_against_dense_oracle():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(50, 50))
    a = m @ m.T + 50 * np.eye(50)
    b = rng.normal(size=50)
    x = direct_solve(sp.csr_matrix(a), b)
    np.testing.assert_allclose(x, np.linalg.solve(a, b), rtol=1e-10)


def test_direct_singular_raises():
    a = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularMatrixError):
        direct_solve(a, np.array([1.0, 2.0]))


def test_gmres_identity_one_iteration():
    b = np.array([1.0, 2.0, 3.0, 4.0])
    res = gmres_solve(sp.eye(4).tocsr(), b, SolverConfig(method="gmres"))
    assert res.converged
    assert res.n_itr == 1
    np.testing.assert_allclose(res.x, b)


def test_gmres_distinct_eigenvalues_iteration_bound():
    k = 12
    a = sp.diags(np.arange(1.0, k + 1)).tocsr()
    rng = np.random.default_rng(1)
    b = rng.normal(size=k)
    res = gmres_solve(a, b, SolverConfig(method="gmres", gmres_tol=1e-10))
    assert res.converged
    assert res.n_itr <= k + 2


def test_gmres_matches_direct_solve():
    a = poisson5(8)
    rng = np.random.default_rng(2)
    b = rng.normal(size=a.shape[0])
    res = gmres_solve(a, b, SolverConfig(method="gmres", gmres_tol=1e-9))
    assert res.converged
    np.testing.assert_allclose(res.x, direct_solve(a, b), atol=1e-4)


def test_gmres_reports_true_residual():
    a = poisson5(10)
    rng = np.random.default_rng(3)
    b = rng.normal(size=a.shape[0])
    for precond in (None, JacobiPreconditioner(a), build_ilu0(a)):
        res = gmres_solve(a, b, SolverConfig(method="gmres", gmres_tol=1e-7),
                          M=precond)
        assert res.converged
        assert np.linalg.norm(b - a @ res.x) < 1e-7


def test_gmres_failure_returns_best_iterate():
    a = poisson5(6)
    rng = np.random.default_rng(4)
    b = rng.normal(size=a.shape[0])
    res = gmres_solve(a, b, SolverConfig(method="gmres", gmres_tol=1e-12,
                                         gmres_max_iter=3))
    assert not res.converged
    assert res.n_itr == 3
    assert np.isfinite(res.x).all()


def test_ilu0_exact_for_tridiagonal():
    n = 20
    a = sp.diags([2 * np.ones(n), -np.ones(n - 1), -np.ones(n - 1)],
                 [0, 1, -1]).tocsr()
    rng = np.random.default_rng(5)
    b = rng.normal(size=n)
    res = gmres_solve(a, b, SolverConfig(method="gmres", gmres_tol=1e-12),
                      M=build_ilu0(a))
    assert res.converged
    assert res.n_itr == 1  # no fill means the factorization is exact


def test_ilu0_of_diagonal_matrix_is_itself():
    a = sp.diags([2.0, 5.0, 9.0]).tocsr()
    m = build_ilu0(a)
    v = np.array([2.0, 10.0, 18.0])
    np.testing.assert_allclose(m.solve(v), [1.0, 2.0, 2.0])


def test_ilu0_zero_pivot_raises():
    a = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(SingularMatrixError):
        build_ilu0(a)


def test_ilu0_beats_unpreconditioned_gmres():
    a = poisson5(10)
    rng = np.random.default_rng(6)
    b = rng.normal(size=a.shape[0])
    cfg = SolverConfig(method="gmres", gmres_tol=1e-8)
    plain = gmres_solve(a, b, cfg)
    with_ilu = gmres_solve(a, b, cfg, M=build_ilu0(a))
    assert with_ilu.converged and plain.converged
    assert with_ilu.n_itr < plain.n_itr


def bar_problem(r=2.4):
    mesh = build_structured_mesh(5, 1, (0, 5, 0, 1))
    field = build_levelset(mesh, VerticalPlane(r))
    parts = partition_all(mesh, field.phi)
    table = build_enrichment(mesh, parts)
    sys = assemble(mesh, field, parts, table, MaterialSpec(1.0, 2.0),
                   BoundaryConditions(dirichlet=(("left", 0.0), ("right", 1.0))),
                   StabilizedLagrange(3.0))
    return mesh, parts, table, sys


def test_newton_linear_problem_single_iteration():
    _, _, _, sys = bar_problem()
    res = newton_solve(LinearProblem(sys), tol_drop=1e-10)
    assert res.converged
    assert res.n_iterations == 1
    assert res.residual_norms[-1] <= 1e-10 * res.residual_norms[0]


def test_newton_zero_problem():
    mesh = build_structured_mesh(5, 1, (0, 5, 0, 1))
    field = build_levelset(mesh, VerticalPlane(2.4))
    parts = partition_all(mesh, field.phi)
    table = build_enrichment(mesh, parts)
    sys = assemble(mesh, field, parts, table, MaterialSpec(1.0, 2.0),
                   BoundaryConditions(dirichlet=(("left", 0.0), ("right", 0.0))),
                   StabilizedLagrange(3.0))
    res = newton_solve(LinearProblem(sys))
    assert res.converged
    assert res.n_iterations <= 1
    np.testing.assert_allclose(res.u_hat, 0.0, atol=1e-14)


def test_newton_preconditioned_matches_identity():
    mesh, parts, table, sys = bar_problem()
    plain = newton_solve(LinearProblem(sys))
    tb = build_tb(mesh, parts, table)
    pre = newton_solve(LinearProblem(sys),
                       make_preconditioner(tb, "TB", t_tol=np.inf))
    assert np.linalg.norm(pre.u_hat - plain.u_hat) <= \
        1e-9 * np.linalg.norm(plain.u_hat)


def test_newton_with_gmres_inner_solver():
    _, _, _, sys = bar_problem()
    res = newton_solve(LinearProblem(sys),
                       solver=SolverConfig(method="gmres", gmres_tol=1e-12))
    ref = newton_solve(LinearProblem(sys))
    np.testing.assert_allclose(res.u_hat, ref.u_hat, atol=1e-9)
    assert res.gmres is not None and res.gmres.converged


def test_gmres_restart_cycles():
    a = poisson5(8)
    rng = np.random.default_rng(7)
    b = rng.normal(size=a.shape[0])
    full = gmres_solve(a, b, SolverConfig(method="gmres", gmres_tol=1e-8))
    restarted = gmres_solve(a, b, SolverConfig(method="gmres", gmres_tol=1e-8,
                                               restart=5, gmres_max_iter=500))
    assert restarted.converged
    assert restarted.n_itr >= full.n_itr  # restarts can only slow it down
    np.testing.assert_allclose(restarted.x, full.x, atol=1e-6)
