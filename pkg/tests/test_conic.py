import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from robustwf import conic
from robustwf.conic import (ConeSpec, ConicProgram, ConicProgramError, Free, NonNegative, PSD,
                            ProgramBuilder, Status, hermitian_deembed, hermitian_embed,
                            hermitian_entry, smat, solve, svec)

from conftest import random_hermitian


# -- embedding ---------------------------------------------------------------

def test_embed_identity():
    np.testing.assert_array_equal(hermitian_embed(np.eye(2)), np.eye(4))


def test_embed_doubles_eigenvalues():
    H = np.array([[0, 1j], [-1j, 0]])
    np.testing.assert_allclose(np.linalg.eigvalsh(hermitian_embed(H)), [-1, -1, 1, 1], atol=1e-14)


def test_embed_min_eigenvalue_matches():
    rng = np.random.default_rng(3)
    for n in (1, 3, 6):
        H = random_hermitian(rng, n)
        assert abs(np.linalg.eigvalsh(hermitian_embed(H))[0] - np.linalg.eigvalsh(H)[0]) <= 1e-10


def test_embed_trace_and_inner_product_double():
    rng = np.random.default_rng(4)
    A, B = random_hermitian(rng, 4), random_hermitian(rng, 4)
    EA, EB = hermitian_embed(A), hermitian_embed(B)
    assert np.trace(EA) == pytest.approx(2 * np.trace(A).real)
    assert np.sum(EA * EB) == pytest.approx(2 * np.trace(A @ B).real)


def test_embed_rejects_non_hermitian():
    with pytest.raises(ValueError):
        hermitian_embed(np.array([[0, 1], [0, 0]], complex))


def test_deembed_inverts_embed():
    H = random_hermitian(np.random.default_rng(5), 5)
    np.testing.assert_allclose(hermitian_deembed(hermitian_embed(H)), H, atol=1e-15)


def test_svec_preserves_inner_product():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((5, 5)); A = A + A.T
    B = rng.standard_normal((5, 5)); B = B + B.T
    assert svec(A) @ svec(B) == pytest.approx(np.sum(A * B))
    np.testing.assert_allclose(smat(svec(A)), A)


def test_hermitian_entry_selects_components():
    rng = np.random.default_rng(7)
    X = random_hermitian(rng, 3)
    for i, j in itertools.product(range(3), repeat=2):
        assert np.trace(hermitian_entry(3, i, j, "re") @ X).real == pytest.approx(X[i, j].real)
        assert np.trace(hermitian_entry(3, i, j, "im") @ X).real == pytest.approx(X[i, j].imag)


# -- small programs with known answers --------------------------------------------

def _min_trace_program():
    b = ProgramBuilder()
    X = b.symmetric("X", 2)
    b.add_equality({X: np.diag([1.0, 0.0])}, 1.0)
    b.set_objective({X: np.eye(2)})
    return b.build()


def test_min_trace_with_fixed_corner():
    program, layout = _min_trace_program()
    sol = solve(program)
    assert sol.status is Status.OPTIMAL
    assert sol.objective_value == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(layout.value(sol.primal, "X"), np.diag([1.0, 0.0]), atol=1e-5)
    assert sol.residuals.max() <= 1e-7


def test_two_by_two_lmi():
    b = ProgramBuilder()
    X = b.symmetric("X", 2)
    t = b.free("t", 1)
    b.add_equality([(X, np.diag([1.0, 0.0])), (t, [-1.0])], 0.0)
    b.add_equality([(X, np.diag([0.0, 1.0])), (t, [-1.0])], 0.0)
    b.add_equality({X: np.array([[0, 0.5], [0.5, 0]])}, 1.0)
    b.set_objective({t: [1.0]})
    program, layout = b.build()
    sol = solve(program)
    assert sol.optimal
    assert layout.value(sol.primal, "t")[0] == pytest.approx(1.0, abs=1e-6)


def test_complex_min_eigenvalue():
    # min tr(C X) s.t. tr X = 1, X >= 0 has value lambda_min(C)
    rng = np.random.default_rng(8)
    for n in (2, 4, 7):
        C = random_hermitian(rng, n)
        b = ProgramBuilder()
        X = b.hermitian("X", n)
        b.add_equality({X: np.eye(n)}, 1.0)
        b.set_objective({X: C})
        program, layout = b.build()
        sol = solve(program)
        assert sol.optimal
        lam = np.linalg.eigvalsh(C)[0]
        assert sol.objective_value == pytest.approx(lam, rel=1e-6, abs=1e-6)
        Xv = layout.value(sol.primal, "X")
        assert np.trace(Xv).real == pytest.approx(1.0, abs=1e-6)


def _lp_vertex_oracle(A, b, c):
    """Minimum of c^T x over {Ax = b, x >= 0} by enumerating basic solutions."""
    m, n = A.shape
    best = np.inf
    for cols in itertools.combinations(range(n), m):
        B = A[:, cols]
        if abs(np.linalg.det(B)) < 1e-10:
            continue
        xb = np.linalg.solve(B, b)
        if np.all(xb >= -1e-12):
            best = min(best, float(c[list(cols)] @ xb))
    return best


def test_random_lps_match_vertex_enumeration():
    rng = np.random.default_rng(9)
    for _ in range(15):
        m, n = 2, 5
        A = rng.standard_normal((m, n))
        x0 = rng.random(n) + 0.1
        b = A @ x0
        c = rng.random(n) + 0.05  # positive cost keeps the problem bounded
        program = ConicProgram(c, sp.csr_matrix(A), b, ConeSpec((NonNegative(n),)))
        sol = solve(program)
        assert sol.optimal
        assert sol.objective_value == pytest.approx(_lp_vertex_oracle(A, b, c), rel=1e-6, abs=1e-7)


def test_infeasible_lp_is_detected():
    # x1 + x2 = -1 with x >= 0
    program = ConicProgram(np.ones(2), sp.csr_matrix([[1.0, 1.0]]), np.array([-1.0]),
                           ConeSpec((NonNegative(2),)))
    assert solve(program).status is Status.INFEASIBLE


def test_unbounded_lp_is_detected():
    # minimize -x1 with x1 - x2 = 0, x >= 0
    program = ConicProgram(np.array([-1.0, 0.0]), sp.csr_matrix([[1.0, -1.0]]), np.array([0.0]),
                           ConeSpec((NonNegative(2),)))
    assert solve(program).status is Status.UNBOUNDED


def test_iteration_limit_returns_best_iterate():
    program, _ = _min_trace_program()
    sol = solve(program, max_iterations=1)
    assert sol.status is Status.MAX_ITERATIONS
    assert np.all(np.isfinite(sol.primal))


def test_optimal_status_implies_residuals_within_tolerance():
    program, _ = _min_trace_program()
    for tol in (1e-4, 1e-7, 1e-9):
        sol = solve(program, tolerance=tol)
        assert sol.optimal and sol.residuals.max() <= tol


def test_malformed_programs_are_rejected():
    with pytest.raises(ConicProgramError):
        solve(ConicProgram(np.ones(3), sp.csr_matrix(np.ones((1, 2))), np.ones(1), ConeSpec((NonNegative(3),))))
    with pytest.raises(ConicProgramError):
        solve(ConicProgram(np.array([np.nan, 1.0]), sp.csr_matrix(np.ones((1, 2))), np.ones(1),
                           ConeSpec((NonNegative(2),))))
    program, _ = _min_trace_program()
    with pytest.raises(ConicProgramError):
        solve(program, tolerance=0.0)


def test_cone_spec_rejects_empty_blocks():
    with pytest.raises((ConicProgramError, ValueError)):
        ConeSpec((PSD(0),))


def test_require_optimal_raises_with_subproblem_name():
    program, _ = _min_trace_program()
    sol = solve(program, max_iterations=1)
    with pytest.raises(conic.SolverFailure, match="probe"):
        conic.require_optimal(sol, "probe")


def test_program_json_roundtrip(tmp_path):
    program, _ = _min_trace_program()
    path = tmp_path / "p.json"
    program.to_json(path)
    again = ConicProgram.from_json(path)
    np.testing.assert_array_equal(again.objective, program.objective)
    np.testing.assert_array_equal(again.equalities.toarray(), program.equalities.toarray())
    assert solve(again).objective_value == pytest.approx(solve(program).objective_value)


def test_mixed_cones_against_cvxpy():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(10)
    n = 4
    C = random_hermitian(rng, n, psd=True)
    w = rng.random(n) + 0.5
    # min tr(C X) + w^T z  s.t. X_kk + z_k >= 1 (with slack), X >= 0, z >= 0
    b = ProgramBuilder()
    X = b.hermitian("X", n)
    z = b.nonneg("z", n)
    s = b.nonneg("s", n)
    for k in range(n):
        E = np.zeros((n, n)); E[k, k] = 1
        e = np.zeros(n); e[k] = 1
        b.add_equality([(X, E), (z, e), (s, -e)], 1.0)
    b.set_objective([(X, C), (z, w)])
    program, _ = b.build()
    ours = solve(program)
    assert ours.optimal

    Xv = cp.Variable((n, n), hermitian=True)
    zv = cp.Variable(n, nonneg=True)
    prob = cp.Problem(cp.Minimize(cp.real(cp.trace(C @ Xv)) + w @ zv),
                      [Xv >> 0, cp.real(cp.diag(Xv)) + zv >= 1])
    try:
        prob.solve()
    except cp.error.SolverError:
        pytest.skip("no cvxpy SDP solver available")
    assert ours.objective_value == pytest.approx(prob.value, rel=1e-4, abs=1e-5)
