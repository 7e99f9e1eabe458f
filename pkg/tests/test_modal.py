import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_spacetime.modal import check_basis, eigendecompose, from_modal, mode_table, to_modal
from sparse_spacetime.model import ChainSpec, Mesh2DSpec, ModelSystem, assemble_chain, assemble_mesh2d, rect_mesh


def test_single_dof():
    b = eigendecompose(ModelSystem([[2.0]], [[8.0]]))
    np.testing.assert_allclose(b.lam, [4.0])
    np.testing.assert_allclose(b.phi, [[1 / np.sqrt(2)]])


def test_two_mass_chain_eigenvalues(chain2):
    _, b = chain2
    expect = [(3 - np.sqrt(5)) / 2, (3 + np.sqrt(5)) / 2]
    assert np.abs(b.lam - expect).max() <= 1e-12


def test_delta_formula():
    sys = ModelSystem(np.eye(1), [[2.0]], alpha=0.1, beta=0.2)
    b = eigendecompose(sys)
    assert abs(b.delta[0] - 0.25) <= 1e-14


def test_rigid_mode_reported():
    sys = assemble_chain(ChainSpec([1.0, 1.0], [(0, 1, 1.0)]))
    b = eigendecompose(sys)
    assert b.rigid.tolist() == [True, False]
    assert b.lam[0] == 0.0
    assert eigendecompose(assemble_chain(ChainSpec([1.0]))).rigid.tolist() == [True]


def test_r_out_of_range(chain2):
    sys, _ = chain2
    for r in (0, 3):
        with pytest.raises(ValueError, match="modes"):
            eigendecompose(sys, r)


def test_sign_convention(chain2):
    _, b = chain2
    for i in range(b.r):
        assert b.phi[np.argmax(np.abs(b.phi[:, i])), i] > 0


def test_modal_maps(chain2):
    _, b = chain2
    np.testing.assert_allclose(from_modal(b, [0.0, 1.0]), b.phi[:, 1])
    np.testing.assert_allclose(to_modal(b, b.phi[:, 0] + 2 * b.phi[:, 1]), [1.0, 2.0], atol=1e-14)
    with pytest.raises(ValueError):
        to_modal(b, np.ones(3))
    with pytest.raises(ValueError):
        from_modal(b, np.ones(3))


def test_mode_table(chain2):
    rows = mode_table(chain2[1])
    assert [r["mode"] for r in rows] == [0, 1]
    assert all(r["regime"] == "Underdamped" for r in rows)


def _mesh(seed):
    rng = np.random.default_rng(seed)
    V, T = rect_mesh(3, 2, 3.0, 1.0)
    V = V + 0.05 * rng.standard_normal(V.shape)
    return assemble_mesh2d(Mesh2DSpec(V, T, young=10.0, density=1.3, fixed=[0, 4]), 0.1, 0.01)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_mesh_basis_invariants(seed):
    b = eigendecompose(_mesh(seed))
    chk = check_basis(b)
    assert chk["eig_residual"] <= 1e-10
    assert chk["orthonormality"] <= 1e-10
    assert np.all(np.diff(b.lam) >= 0)


def test_eigenvalues_invariant_under_unit_rescaling():
    sys = _mesh(0)
    for s in (1e-3, 1e3):
        scaled = ModelSystem(s * sys.M, s * sys.K)
        np.testing.assert_allclose(eigendecompose(scaled).lam, eigendecompose(sys).lam, rtol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4))
def test_round_trip_on_full_span(w):
    b = eigendecompose(assemble_chain(ChainSpec([1.0, 2.0, 0.5, 1.5], [(-1, 0, 3.0), (0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.7)])))
    u = from_modal(b, w)
    assert np.abs(from_modal(b, to_modal(b, u)) - u).max() <= 1e-10 * max(1.0, np.abs(u).max())
