import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forchflow.femspace import (
    FeField,
    ScalarP1Space,
    VectorP1Space,
    assemble_mass,
    eval_field,
    eval_gradient,
    gradients,
    interpolate,
    l2_project,
    projection_residual,
)
from forchflow.mesh import build_unit_square
from forchflow.quadrature import EDGE_RULE, TRIANGLE_RULE


def _monomial_exact(p, q):
    # int over {x,y >= 0, x+y <= 1} of x^p y^q
    return math.factorial(p) * math.factorial(q) / math.factorial(p + q + 2)


@pytest.mark.parametrize("p, q", [(p, q) for p in range(5) for q in range(5) if p + q <= 4])
def test_triangle_rule_exactness(p, q):
    xy = TRIANGLE_RULE.reference_points
    approx = 0.5 * np.sum(TRIANGLE_RULE.weights * xy[:, 0] ** p * xy[:, 1] ** q)
    assert approx == pytest.approx(_monomial_exact(p, q), abs=1e-14)


@pytest.mark.parametrize("p", range(6))
def test_edge_rule_exactness(p):
    t = EDGE_RULE.reference_points[:, 0]
    assert np.sum(EDGE_RULE.weights * t**p) == pytest.approx(1 / (p + 1), abs=1e-14)


def test_rule_weights_positive():
    assert np.all(TRIANGLE_RULE.weights > 0) and np.all(EDGE_RULE.weights > 0)
    assert TRIANGLE_RULE.weights.sum() == pytest.approx(1.0, abs=1e-15)


@pytest.fixture(scope="module")
def space4():
    return ScalarP1Space(build_unit_square(4))


def test_eval_field_constant_and_hat(space4):
    c = FeField(space4, np.full(space4.ndofs, 3.5))
    assert eval_field(c, 7, (0.2, 0.3)) == pytest.approx(3.5)
    tri = space4.mesh.triangles[5]
    hat = np.zeros(space4.ndofs)
    hat[tri[1]] = 1.0
    assert eval_field(FeField(space4, hat), 5, (1.0, 0.0)) == 1.0
    assert eval_field(FeField(space4, hat), 5, (0.0, 1.0)) == 0.0


def test_linear_reproduction(space4):
    f = interpolate(lambda x: x[..., 0] + x[..., 1], space4)
    mesh = space4.mesh
    for t in range(mesh.num_triangles):
        centroid = mesh.vertices[mesh.triangles[t]].mean(axis=0)
        assert eval_field(f, t, (1 / 3, 1 / 3)) == pytest.approx(centroid.sum(), abs=1e-15)
        np.testing.assert_allclose(eval_gradient(f, t), [1, 1], atol=1e-13)
    np.testing.assert_allclose(gradients(FeField(space4, np.ones(space4.ndofs))), 0, atol=1e-13)


def test_partition_of_unity(space4):
    np.testing.assert_allclose(space4.basis_grads.sum(axis=1), 0, atol=1e-12)


def test_gradient_matches_finite_difference(space4):
    rng = np.random.default_rng(0)
    f = FeField(space4, rng.standard_normal(space4.ndofs))
    h = 1e-6
    for t in (0, 9, 31):
        B = np.linalg.inv(
            np.column_stack(np.diff(space4.mesh.vertices[space4.mesh.triangles[t]][[0, 1, 0, 2]], axis=0)[::2])
        )
        p = np.array([0.25, 0.25])
        # directional derivatives in reference coordinates, mapped back
        d_ref = np.array([
            (eval_field(f, t, p + [h, 0]) - eval_field(f, t, p - [h, 0])) / (2 * h),
            (eval_field(f, t, p + [0, h]) - eval_field(f, t, p - [0, h])) / (2 * h),
        ])
        np.testing.assert_allclose(eval_gradient(f, t), B.T @ d_ref, atol=1e-8, rtol=1e-10)


def test_vector_field_evaluation(space4):
    V = VectorP1Space(space4)
    f = interpolate(lambda x: np.stack([x[..., 0], 2 * x[..., 1]], axis=-1), V)
    tri = space4.mesh.triangles[3]
    c = space4.mesh.vertices[tri].mean(axis=0)
    np.testing.assert_allclose(eval_field(f, 3, (1 / 3, 1 / 3)), [c[0], 2 * c[1]], atol=1e-15)


def test_mass_matrix():
    space = ScalarP1Space(build_unit_square(1))
    M = assemble_mass(space)
    assert M.sum() == pytest.approx(1.0, abs=1e-15)
    space = ScalarP1Space(build_unit_square(6))
    M = assemble_mass(space)
    assert abs(M - M.T).max() <= 1e-15
    assert M.sum() == pytest.approx(1.0, abs=1e-13)
    # SPD: dense Cholesky succeeds
    np.linalg.cholesky(M.toarray())
    Mv = assemble_mass(VectorP1Space(space))
    assert Mv.shape == (2 * space.ndofs, 2 * space.ndofs)
    assert Mv.sum() == pytest.approx(2.0, abs=1e-13)


def test_weighted_mass_constant_weight(space4):
    Mw = space4.weighted_mass(lambda x: np.full(x.shape[:-1], 2.0))
    assert abs(Mw - 2 * space4.mass).max() <= 1e-15


def test_projection_reproduces_constants_and_linears(space4):
    one = l2_project(lambda x: np.ones(x.shape[:-1]), space4)
    np.testing.assert_allclose(one.coefficients, 1.0, atol=1e-13)
    lin = l2_project(lambda x: x[..., 0] + x[..., 1], space4)
    np.testing.assert_allclose(lin.coefficients, space4.mesh.vertices.sum(axis=1), atol=1e-13)
    V = VectorP1Space(space4)
    vec = l2_project(lambda x: np.stack([x[..., 1], -x[..., 0]], axis=-1), V)
    np.testing.assert_allclose(vec.nodal, np.column_stack([space4.mesh.vertices[:, 1], -space4.mesh.vertices[:, 0]]), atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(k=st.floats(0.5, 4), phase=st.floats(0, 3), n=st.sampled_from([3, 5, 8]))
def test_projection_orthogonality(k, phase, n):
    space = ScalarP1Space(build_unit_square(n))
    src = lambda x: np.sin(k * x[..., 0] + phase) * np.exp(x[..., 1])
    f = l2_project(src, space)
    assert projection_residual(f, src) <= 1e-10


def _l2_err(field, src):
    sp = field.space
    d = field.at_quad_points() - src(sp.quad_points)
    return np.sqrt(np.sum(sp.quad_weights * d * d))


def test_projection_second_order():
    src = lambda x: np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])
    ns = [8, 16, 32]
    errs = [_l2_err(l2_project(src, ScalarP1Space(build_unit_square(n))), src) for n in ns]
    slope = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert 1.8 <= slope <= 2.2


def test_boundary_load_integrates_perimeter(space4):
    b = space4.boundary_load(np.ones(space4.edge_quad_weights.shape))
    assert b.sum() == pytest.approx(4.0, abs=1e-14)
    interior = np.setdiff1d(np.arange(space4.ndofs), space4.mesh.boundary_edges.ravel())
    assert np.all(b[interior] == 0)


def test_field_length_checked(space4):
    with pytest.raises(ValueError):
        FeField(space4, np.zeros(3))
