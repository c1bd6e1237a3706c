import math

import numpy as np
import pytest

from forchflow.manufactured import (
    CASES,
    POLY_A,
    POLY_B,
    build_case,
    case_catalog,
    consistency_check,
    get_case,
)
from forchflow.mesh import SIDE_NORMALS


def test_catalog_contents():
    assert sorted(CASES) == ["1A", "1B", "2A", "2B"]
    assert [c.case_id for c in case_catalog()] == ["1A", "1B", "2A", "2B"]
    assert get_case(1, "B").poly is POLY_B
    assert get_case("2a").poly is POLY_A
    with pytest.raises(KeyError):
        get_case(3, "A")


def test_m_exact_example_one_at_zero():
    x = np.array([[0.3, 0.7], [0.9, 0.1]])
    np.testing.assert_allclose(get_case("1A").m_exact(x, 0.0), -0.5586454809180582, rtol=1e-14)


@pytest.mark.parametrize("case_id", sorted(CASES))
def test_consistency_with_pde(case_id):
    rep = consistency_check(get_case(case_id))
    assert rep.max_flux_residual <= 1e-5
    assert rep.max_continuity_residual <= 1e-5


@pytest.mark.parametrize("case_id", sorted(CASES))
def test_closed_forms_match_generic_construction(case_id):
    case = get_case(case_id)
    generic = build_case(int(case_id[0]), case.poly)
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 1, size=(200, 2))
    for t in (0.0, 0.4, 1.0):
        np.testing.assert_allclose(case.m_exact(x, t), generic.m_exact(x, t), rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(case.f(x, t), generic.f(x, t), rtol=1e-11, atol=1e-13)


def test_psi_example_1B():
    case = get_case("1B")
    t = 0.6
    e = math.exp(-2 * t)
    mag = 10 * e / (5 + math.sqrt(25 + 95 * math.sqrt(2) * e))
    pts = np.array([[0.0, 0.25], [0.0, 0.8]])
    np.testing.assert_allclose(case.psi(pts, t, "left"), mag, rtol=1e-14)
    np.testing.assert_allclose(case.psi(pts + [1, 0], t, "right"), -mag, rtol=1e-14)
    np.testing.assert_allclose(case.psi(pts[:, ::-1], t, "bottom"), mag, rtol=1e-14)


@pytest.mark.parametrize("case_id", sorted(CASES))
def test_psi_is_normal_momentum(case_id):
    case = get_case(case_id)
    s = np.linspace(0, 1, 7)
    on_side = {
        "bottom": np.column_stack([s, 0 * s]),
        "right": np.column_stack([1 + 0 * s, s]),
        "top": np.column_stack([s, 1 + 0 * s]),
        "left": np.column_stack([0 * s, s]),
    }
    for side, x in on_side.items():
        np.testing.assert_allclose(case.psi(x, 0.5, side), case.m_exact(x, 0.5) @ SIDE_NORMALS[side])


def test_initial_condition_and_problem_data():
    case = get_case("2A")
    x = np.array([[0.5, 0.5]])
    assert case.rho0(x)[0] == pytest.approx(0.5)
    data = case.problem_data()
    assert data.poly is POLY_A
    assert data.rho0(x)[0] == pytest.approx(0.5)
    assert data.porosity(x)[0] == 1.0


def test_cases_pickle():
    import pickle

    for case in case_catalog():
        clone = pickle.loads(pickle.dumps(case))
        x = np.array([[0.2, 0.4]])
        np.testing.assert_array_equal(clone.f(x, 0.3), case.f(x, 0.3))


def test_consistency_rejects_bad_step():
    with pytest.raises(ValueError):
        consistency_check(get_case("1A"), fd_step=0.1)
