import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_spacetime.model import (
    ChainSpec,
    Mesh2DSpec,
    ModelSystem,
    assemble_chain,
    assemble_mesh2d,
    rect_mesh,
    triangle_stiffness,
    plane_stress_matrix,
)


def test_single_mass_spring():
    sys = assemble_chain(ChainSpec([2.0], [(0, None, 8.0)]))
    np.testing.assert_array_equal(sys.M, [[2.0]])
    np.testing.assert_array_equal(sys.K, [[8.0]])
    np.testing.assert_array_equal(sys.g, [0.0])


def test_fixed_free_chain():
    sys = assemble_chain(ChainSpec([1.0, 1.0], [(-1, 0, 1.0), (0, 1, 1.0)]))
    np.testing.assert_array_equal(sys.K, [[2.0, -1.0], [-1.0, 1.0]])
    np.testing.assert_array_equal(sys.M, np.eye(2))


def test_free_mass_has_zero_stiffness():
    sys = assemble_chain(ChainSpec([1.0]))
    np.testing.assert_array_equal(sys.K, [[0.0]])


def test_gravity_sign_convention():
    sys = assemble_chain(ChainSpec([2.0, 3.0], [(0, 1, 1.0)], gravity=[1.0, -2.0]))
    np.testing.assert_allclose(sys.g, [-2.0, 6.0])


def test_clamping_removes_dof():
    sys = assemble_chain(ChainSpec([1.0, 2.0, 3.0], [(0, 1, 1.0), (1, 2, 2.0)], fixed=[0]))
    assert sys.n == 2
    np.testing.assert_allclose(sys.K, [[3.0, -2.0], [-2.0, 2.0]])
    np.testing.assert_allclose(np.diag(sys.M), [2.0, 3.0])


@pytest.mark.parametrize(
    "spec, msg",
    [
        (ChainSpec([1.0], fixed=[0]), "empty system"),
        (ChainSpec([]), "empty system"),
        (ChainSpec([1.0, -1.0]), "positive"),
        (ChainSpec([1.0], [(0, 3, 1.0)]), "out of range"),
        (ChainSpec([1.0], [(0, None, -1.0)]), "stiffness"),
    ],
)
def test_chain_rejections(spec, msg):
    with pytest.raises(ValueError, match=msg):
        assemble_chain(spec)


def test_model_system_validation():
    with pytest.raises(ValueError, match="symmetric"):
        ModelSystem(np.eye(2), [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError, match="positive definite"):
        ModelSystem(np.diag([1.0, 0.0]), np.eye(2))
    with pytest.raises(ValueError, match="semidefinite"):
        ModelSystem(np.eye(2), np.diag([1.0, -1.0]))
    with pytest.raises(ValueError, match="Rayleigh"):
        ModelSystem(np.eye(1), np.eye(1), alpha=-1.0)
    sys = ModelSystem(np.eye(2), np.eye(2), alpha=0.5, beta=0.25)
    np.testing.assert_allclose(sys.D, 0.75 * np.eye(2))


def _rigid_fields(V):
    tx = np.tile([1.0, 0.0], len(V))
    ty = np.tile([0.0, 1.0], len(V))
    rot = np.ravel([[-y, x] for x, y in V])
    return tx, ty, rot


def test_triangle_rigid_null_space():
    V = np.array([[0.0, 0.0], [1.3, 0.2], [0.4, 0.9]])
    sys = assemble_mesh2d(Mesh2DSpec(V, [[0, 1, 2]], young=3.0, poisson=0.25))
    scale = np.abs(sys.K).max()
    for f in _rigid_fields(V):
        assert np.abs(sys.K @ f).max() <= 1e-10 * scale


def test_lumped_mass_conservation():
    V, T = rect_mesh(3, 2, 2.0, 1.5)
    sys = assemble_mesh2d(Mesh2DSpec(V, T, density=2.5))
    # each vertex mass appears twice (x and y DOF)
    assert abs(np.trace(sys.M) / 2 - 2.5 * 3.0) <= 1e-12 * 7.5


def test_clamped_square_is_spd():
    V, T = rect_mesh(1, 1)
    sys = assemble_mesh2d(Mesh2DSpec(V, T, fixed=[0, 2]))
    assert sys.n == 4
    np.linalg.cholesky(sys.K)


def test_degenerate_triangle_named():
    V = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]]
    with pytest.raises(ValueError, match=r"degenerate triangle 1: \(0, 1, 2\)"):
        assemble_mesh2d(Mesh2DSpec(V, [[0, 1, 3], [0, 1, 2]]))


def test_mesh_gravity_load():
    V, T = rect_mesh(2, 1)
    sys = assemble_mesh2d(Mesh2DSpec(V, T, gravity=[0.0, -9.81]))
    np.testing.assert_allclose(sys.g[1::2], 9.81 * np.diag(sys.M)[1::2])
    np.testing.assert_allclose(sys.g[0::2], 0.0)


def test_assembly_deterministic():
    V, T = rect_mesh(3, 2)
    spec = Mesh2DSpec(V, T, young=7.0, fixed=[0])
    a, b = assemble_mesh2d(spec, 0.1, 0.2), assemble_mesh2d(spec, 0.1, 0.2)
    assert np.array_equal(a.K, b.K) and np.array_equal(a.M, b.M) and np.array_equal(a.g, b.g)


@settings(max_examples=30, deadline=None)
@given(
    pts=st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=3, max_size=3),
    nu=st.floats(0.0, 0.49),
)
def test_element_stiffness_psd_and_rigid(pts, nu):
    xy = np.array(pts)
    (a, b), (c, d) = xy[1] - xy[0], xy[2] - xy[0]
    area = 0.5 * abs(a * d - b * c)
    if area < 1e-3:
        return
    Ke, _ = triangle_stiffness(xy, plane_stress_matrix(1.0, nu))
    scale = np.abs(Ke).max()
    np.testing.assert_allclose(Ke, Ke.T, atol=1e-12 * scale)
    assert np.linalg.eigvalsh(Ke).min() >= -1e-10 * scale
    for f in _rigid_fields(xy):
        assert np.abs(Ke @ f).max() <= 1e-9 * scale * max(1.0, np.abs(xy).max())
