from __future__ import annotations

import math

import numpy as np
import pytest

from splitband.analytic import WaveguideGeometry
from splitband.mesh import MeshConfig, build_mesh
from splitband.solver import (
    EigenSolveError,
    assemble,
    assemble_full,
    convergence_study,
    dof_map,
    open_window_spectrum,
    reduced_operators,
    reference_spectrum,
    solve_lowest,
)

GEOM = WaveguideGeometry(2.0, 2.3)
SMALL = MeshConfig(8, 4, 0.7, 2)
# small enough for dense linear algebra
TINY = MeshConfig(4, 4, 0.7, 1)


@pytest.fixture(scope="module")
def mesh():
    return build_mesh(GEOM, SMALL, tips=(1e-2,))


def test_mass_and_stiffness_integrate_exactly(mesh):
    k_full, b_full, d_full = assemble_full(mesh)
    one = np.ones(mesh.n_nodes)
    area = 2 * GEOM.h * (GEOM.d_minus + GEOM.d_plus)
    assert one @ b_full @ one == pytest.approx(area, rel=1e-12)
    assert abs(one @ k_full @ one) < 1e-9
    x = mesh.nodes[:, 0]
    # integral of d(x1)/dx1 over the cell
    assert one @ d_full @ x == pytest.approx(area, rel=1e-12)


def test_reduced_operators_are_symmetric(mesh):
    kr, gr, br = reduced_operators(mesh)
    assert abs(kr - kr.T).max() == 0
    assert abs(br - br.T).max() == 0
    assert abs(gr + gr.T).max() == 0


def test_gluing_removes_window_nodes(mesh):
    _, n0 = dof_map(mesh)
    _, n1 = dof_map(mesh.with_window(1e-2))
    glued = int(mesh.with_window(1e-2).shared.sum())
    assert n0 - n1 == glued


def test_bloch_form_is_hermitian_and_positive():
    form = assemble(build_mesh(GEOM, TINY, tips=(1e-2,)).with_window(1e-2), 1.0)
    a = form.A
    assert abs(a - a.conj().T).max() < 1e-13
    dense = a.toarray()
    assert np.linalg.eigvalsh(dense).min() >= -1e-10 * np.abs(dense).sum(axis=0).max()


def test_negative_quasimomentum_is_the_conjugate(mesh):
    a = assemble(mesh, 0.7).A
    b = assemble(mesh, -0.7).A
    assert abs(a.conj() - b).max() < 1e-14


@pytest.mark.parametrize("k", [0.0, 1.0, math.pi])
def test_decoupled_cell_matches_reference(mesh, k):
    form = assemble(mesh, k)
    r = solve_lowest(form, 6)
    ref = reference_spectrum(GEOM, k, 6)
    assert np.all(r.eigenvalues >= ref - 1e-12)
    assert np.max(np.abs(r.eigenvalues - ref) / ref) < 2e-2
    assert np.all(r.residuals <= 1e-10)
    assert np.all(np.diff(r.eigenvalues) >= 0)


def test_double_eigenvalues_at_zone_edge_are_listed_twice(mesh):
    r = solve_lowest(assemble(mesh, math.pi), 6)
    ref = reference_spectrum(GEOM, math.pi, 6)
    assert ref[0] == pytest.approx(ref[1])
    # the mesh is not mirror symmetric, so the pair splits at discretisation level
    assert r.eigenvalues[:2] == pytest.approx(ref[:2], rel=5e-3)


def test_sparse_and_dense_paths_agree():
    form = assemble(build_mesh(GEOM, TINY, tips=(1e-2,)).with_window(1e-2), 2.5)
    dense = solve_lowest(form, 6, dense_threshold=10**9)
    sparse = solve_lowest(form, 6, dense_threshold=0)
    assert sparse.info["method"] != dense.info["method"]
    assert np.allclose(dense.eigenvalues, sparse.eigenvalues, rtol=1e-10)


def test_window_only_raises_eigenvalues(mesh):
    base = solve_lowest(assemble(mesh, 2.5), 6).eigenvalues
    glued = solve_lowest(assemble(mesh.with_window(1e-2), 2.5), 6).eigenvalues
    assert np.all(glued - base >= -1e-10)


def test_open_interface_matches_wide_strip():
    mesh = build_mesh(GEOM, SMALL).with_window(GEOM.h)
    r = solve_lowest(assemble(mesh, 1.0), 4)
    ref = open_window_spectrum(GEOM, 1.0, 4)
    assert np.max(np.abs(r.eigenvalues - ref) / ref) < 1e-2


def test_eigenvectors_satisfy_the_pencil(mesh):
    form = assemble(mesh, 0.3)
    r = solve_lowest(form, 3, return_vectors=True)
    x = r.eigenvectors
    for i, lam in enumerate(r.eigenvalues):
        res = form.A @ x[:, i] - lam * (form.B @ x[:, i])
        assert np.linalg.norm(res) < 1e-8 * np.linalg.norm(x[:, i])


def test_solver_failures_are_reported(mesh):
    with pytest.raises(EigenSolveError) as info:
        solve_lowest(assemble(mesh, 0.3), 3, dense_threshold=0, max_restarts=0)
    assert info.value.diagnostics["n_dof"] > 0
    with pytest.raises(ValueError, match="tol"):
        solve_lowest(assemble(mesh, 0.3), 3, tol=1e-30)


def test_convergence_orders_against_exact_values():
    study = convergence_study(GEOM, 0.0, 1.0, base=MeshConfig(4, 4, 1.0, 2), count=3)
    assert study.orders.shape == (2, 3)
    assert np.all(study.orders[-1] > 1.8)
    assert study.n_dof[0] < study.n_dof[1] < study.n_dof[2]
    assert len(study.rows()) == 3


def test_reference_spectra_are_sorted_and_complete():
    ref = reference_spectrum(GEOM, 0.0, 8)
    assert np.all(np.diff(ref) >= 0)
    assert ref[0] == pytest.approx(0.25)
    wide = open_window_spectrum(GEOM, 0.0, 3)
    assert wide[0] == pytest.approx((math.pi / (2 + math.pi)) ** 2)
