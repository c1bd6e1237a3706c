import numpy as np
import pytest

from forchflow.analysis import l2_error
from forchflow.constitutive import eval_K, flux_batch
from forchflow.femspace import FeField, gradients
from forchflow.manufactured import POLY_A, get_case
from forchflow.mesh import build_unit_square
from forchflow.system import (
    DiscreteState,
    MixedSpaces,
    NewtonConfig,
    NonConvergence,
    ProblemData,
    TimeGrid,
    _Step,
    assemble_jacobian,
    assemble_residual,
    initial_state,
    newton_solve,
    time_march,
)


@pytest.fixture(scope="module")
def spaces4():
    return MixedSpaces(build_unit_square(4))


def _random_state(spaces, rng, time):
    return spaces.state(rng.standard_normal(spaces.ndofs), time)


def _naive_residual(spaces, cand, prev, data, dt):
    """Triangle-by-triangle loop with the edge-midpoint rule (exact for quadratics)."""
    mesh = spaces.mesh
    nv = mesh.num_vertices
    m = cand.m.coefficients.reshape(2, nv)
    rho, rho_p = cand.rho.coefficients, prev.rho.coefficients
    R_m = np.zeros((2, nv))
    R_r = np.zeros(nv)
    mid_bary = np.array([[0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5]])
    for tri in mesh.triangles:
        P = mesh.vertices[tri]
        A = np.array([[1, 1, 1], P[:, 0], P[:, 1]])
        area = 0.5 * abs(np.linalg.det(A))
        grads = np.linalg.inv(A)[:, 1:]  # row i is grad of barycentric i
        g_rho = rho[tri] @ grads
        q = g_rho * eval_K(data.poly, np.linalg.norm(g_rho))
        for b in mid_bary:
            x = b @ P
            w = area / 3
            m_q = m[:, tri] @ b
            f_q = data.source(x[None], cand.time)[0]
            drho = (rho[tri] - rho_p[tri]) @ b
            for i in range(3):
                R_m[:, tri[i]] += w * (m_q + q) * b[i]
                R_r[tri[i]] += w * (drho / dt * b[i] - m_q @ grads[i] - f_q * b[i])
    gl, gw = np.polynomial.legendre.leggauss(4)
    for (a, b), side in zip(mesh.boundary_edges, mesh.boundary_sides):
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        L = np.linalg.norm(pb - pa)
        for s, w in zip(0.5 * (gl + 1), 0.5 * gw):
            x = (1 - s) * pa + s * pb
            psi = data.psi(x[None], cand.time, side)[0]
            R_r[a] += L * w * psi * (1 - s)
            R_r[b] += L * w * psi * s
    return np.concatenate([R_m.ravel(), R_r])


@pytest.mark.parametrize("case_id", ["1A", "1B"])
def test_residual_matches_naive_loop(spaces4, case_id):
    data = get_case(case_id).problem_data()
    rng = np.random.default_rng(1)
    prev = _random_state(spaces4, rng, 0.3)
    cand = _random_state(spaces4, rng, 0.3 + 0.1)
    R = assemble_residual(cand, prev, data, 0.1, spaces4)
    ref = _naive_residual(spaces4, cand, prev, data, 0.1)
    assert np.abs(R - ref).max() <= 1e-12 * max(1.0, np.abs(ref).max())


def test_residual_checks_time_stamp(spaces4):
    data = get_case("1A").problem_data()
    s = initial_state(data, spaces4)
    with pytest.raises(ValueError):
        assemble_residual(s, s, data, 0.1, spaces4)


@pytest.mark.parametrize("case_id", ["1A", "2B"])
def test_jacobian_directional_finite_difference(spaces4, case_id):
    data = get_case(case_id).problem_data()
    rng = np.random.default_rng(2)
    prev = _random_state(spaces4, rng, 0.0)
    step = _Step(spaces4, prev, data, 0.25)
    x = rng.standard_normal(spaces4.ndofs)
    J = assemble_jacobian(spaces4.state(x, 0.25), data, 0.25, spaces4)
    eps = 1e-7
    for _ in range(20):
        v = rng.standard_normal(x.shape)
        fd = (step.residual(x + eps * v) - step.residual(x - eps * v)) / (2 * eps)
        assert np.linalg.norm(J @ v - fd) <= 1e-5 * np.linalg.norm(fd)


def test_flux_jacobian_at_zero_gradient_is_scaled_coupling(spaces4):
    C = spaces4.flux_jacobian(POLY_A, np.full(spaces4.n_rho, 2.5))
    K0 = eval_K(POLY_A, 0.0)
    assert abs(C - K0 * spaces4.coupling).max() <= 1e-14


def test_jacobian_sparsity(spaces4):
    data = get_case("1A").problem_data()
    s = initial_state(data, spaces4)
    J = assemble_jacobian(s, data, 0.1, spaces4)
    assert J.shape == (spaces4.ndofs, spaces4.ndofs)
    # no coupling between different momentum components
    nv = spaces4.n_rho
    assert abs(J[:nv, nv : 2 * nv]).max() == 0
    # density rows only see vertices sharing a triangle
    mesh = spaces4.mesh
    neighbours = np.zeros((nv, nv), bool)
    for tri in mesh.triangles:
        neighbours[np.ix_(tri, tri)] = True
    block = J[2 * nv :, 2 * nv :].toarray() != 0
    assert not np.any(block & ~neighbours)


def test_initial_state_zero_data(spaces4):
    data = ProblemData(
        POLY_A, lambda x, t: 0 * x[..., 0], lambda x, t, s: 0 * x[..., 0], lambda x: 0 * x[..., 0]
    )
    s = initial_state(data, spaces4)
    assert np.all(s.rho.coefficients == 0) and np.all(s.m.coefficients == 0)


def test_initial_state_example_one(spaces4):
    s = initial_state(get_case("1A").problem_data(), spaces4)
    expected = -eval_K(POLY_A, np.sqrt(2.0))
    np.testing.assert_allclose(s.m.nodal, expected, rtol=1e-12)
    np.testing.assert_allclose(s.rho.coefficients, spaces4.mesh.vertices.sum(axis=1), atol=1e-13)


def test_newton_zero_iterations_at_discrete_solution(spaces4):
    data = get_case("1A").problem_data()
    s0 = initial_state(data, spaces4)
    s1, its, _ = newton_solve(s0, data, 0.25, NewtonConfig(tol=1e-12), spaces4)
    again, its2, _ = newton_solve(s0, data, 0.25, NewtonConfig(tol=1e-10), spaces4, guess=s1)
    assert its2 == 0
    np.testing.assert_array_equal(again.vector, s1.vector)


def test_newton_converges_quickly(spaces4):
    data = get_case("1A").problem_data()
    s0 = initial_state(data, spaces4)
    _, its, res = newton_solve(s0, data, 0.25, NewtonConfig(), spaces4)
    assert 1 <= its <= 8
    assert res <= 1e-9


def test_stationary_state_is_preserved(spaces4):
    data = ProblemData(
        POLY_A, lambda x, t: 0 * x[..., 0], lambda x, t, s: 0 * x[..., 0],
        lambda x: np.full(x.shape[:-1], 3.0),
    )
    final = time_march(data, spaces4, TimeGrid.uniform(1.0, 4))
    np.testing.assert_allclose(final.rho.coefficients, 3.0, atol=1e-12)
    np.testing.assert_allclose(final.m.coefficients, 0.0, atol=1e-12)
    assert final.time == 1.0


@pytest.mark.parametrize("case_id", ["1A", "2A"])
def test_discrete_mass_balance(case_id):
    spaces = MixedSpaces(build_unit_square(8))
    history = []
    time_march(get_case(case_id).problem_data(), spaces, TimeGrid.uniform(1.0, 8), history=history)
    assert len(history) == 8
    assert max(abs(r.mass_balance) for r in history) <= 1e-8


def test_solution_stays_bounded():
    case = get_case("2A")
    spaces = MixedSpaces(build_unit_square(8))
    history = []
    time_march(case.problem_data(), spaces, TimeGrid.uniform(1.0, 8), history=history)
    zero = lambda x, t: 0 * x[..., 0]
    for rec in history:
        t = rec.state.time
        exact_norm = l2_error(FeField(spaces.rho_space, np.zeros(spaces.n_rho)), case.rho_exact, t)
        assert l2_error(rec.state.rho, zero, t) <= 2 * exact_norm
    # m_h is minus the L2 projection of K(|grad rho_h|) grad rho_h
    V = spaces.rho_space
    for rec in history:
        m_q = rec.state.m.at_quad_points()
        m_norm = np.sqrt(np.sum(V.quad_weights[..., None] * m_q * m_q))
        q, _ = flux_batch(case.poly, gradients(rec.state.rho))
        q_norm = np.sqrt(np.sum(V.areas * np.sum(q * q, axis=1)))
        assert m_norm <= q_norm + 1e-10


def test_debug_mode_runs_jacobian_check(spaces4):
    data = get_case("2B").problem_data()
    s0 = initial_state(data, spaces4)
    _, its, _ = newton_solve(s0, data, 0.25, NewtonConfig(debug=True), spaces4)
    assert its >= 1


def test_nonconvergence_is_reported():
    data = get_case("2B").problem_data()
    spaces = MixedSpaces(build_unit_square(4))
    with pytest.raises(NonConvergence) as info:
        time_march(data, spaces, TimeGrid.uniform(1.0, 2), NewtonConfig(tol=1e-300, max_iter=1))
    assert info.value.step == 1
    assert info.value.iterations == 1


def test_state_meshes_must_match():
    a = MixedSpaces(build_unit_square(2))
    b = MixedSpaces(build_unit_square(2))
    with pytest.raises(ValueError):
        DiscreteState(FeField(a.rho_space, np.zeros(a.n_rho)), FeField(b.m_space, np.zeros(b.n_m)), 0.0)


def test_time_grid_validation():
    assert TimeGrid.uniform(1.0, 4).dt == 0.25
    with pytest.raises(ValueError):
        TimeGrid(0.0, 3)
