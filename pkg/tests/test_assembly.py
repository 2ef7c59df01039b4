import math

import numpy as np
import pytest

from elastosg.assembly import (
    PhysicalParams,
    SymmetricSparseOperator,
    apply_dirichlet,
    assemble_mass,
    assemble_nonlinear_load,
    assemble_stiffness,
    build_space,
)
from elastosg.errors import AssemblyError, ConfigurationError, InconsistencyError
from elastosg.mesh import build_box_mesh

from conftest import UNIT, UNIT_PARAMS, single_tet_space, unit_space


@pytest.mark.parametrize("n, degree, expected", [(1, 1, 8), (2, 1, 27), (1, 2, 8 + 19), (2, 3, 7**3)])
def test_scalar_dof_counts(n, degree, expected):
    space = unit_space(n, degree)
    assert space.scalar_dof_count == expected
    assert np.array_equal(np.unique(space.element_dof_map), np.arange(expected))


def test_dofs_are_conforming_across_faces():
    # a continuous piecewise field evaluated from either side of interior faces agrees
    space = unit_space(2, 3)
    mesh = space.mesh
    coeffs = np.random.default_rng(0).standard_normal(space.scalar_dof_count)
    faces = mesh.tets[:, [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]]
    key = np.sort(faces, axis=2).reshape(-1, 3)
    owner = np.repeat(np.arange(mesh.n_tets), 4)
    order = np.lexsort(key.T[::-1])
    key, owner = key[order], owner[order]
    same = np.all(key[1:] == key[:-1], axis=1)
    w = np.array([0.2, 0.3, 0.5])
    for i in np.flatnonzero(same)[:40]:
        x = w @ mesh.vertices[key[i]]
        vals = []
        for t in (owner[i], owner[i + 1]):
            amap = space.affine_map(t)
            ref = np.linalg.solve(amap.jacobian, x - amap.origin)
            vals.append(space.basis.values(ref[None])[0] @ coeffs[space.element_dof_map[t]])
        assert vals[0] == pytest.approx(vals[1], abs=1e-12)


def test_reference_tet_mass_matrix():
    M = assemble_mass(single_tet_space()).toarray()
    vol = 1 / 6
    assert np.allclose(M, vol / 20 * (np.ones((4, 4)) + np.eye(4)), atol=1e-15)


@pytest.mark.parametrize("n, degree", [(2, 1), (2, 2), (1, 3)])
def test_mass_is_spd_and_integrates_one(n, degree):
    M = assemble_mass(unit_space(n, degree))
    one = np.ones(M.dimension)
    assert one @ M @ one == pytest.approx(1.0, abs=1e-10)
    assert M.symmetry_defect() <= 1e-12
    assert np.linalg.eigvalsh(M.toarray()).min() > 0


def test_mass_integrates_one_on_larger_box():
    M = assemble_mass(build_space(build_box_mesh((-1, -1, -1), (1, 1, 1), 3), 2))
    one = np.ones(M.dimension)
    assert one @ M @ one == pytest.approx(8.0, rel=1e-10)


def test_degenerate_element_is_reported():
    space = single_tet_space([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
    with pytest.raises(AssemblyError) as err:
        assemble_mass(space)
    assert err.value.tet == 0


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_stiffness_kills_constants(degree):
    space = unit_space(2, degree)
    K = assemble_stiffness(space, UNIT_PARAMS)
    c = np.ones(space.vector_dof_count)
    assert np.abs(K @ c).max() <= 1e-10


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_stiffness_energy_of_linear_field(degree):
    space = unit_space(2, degree)
    K = assemble_stiffness(space, UNIT_PARAMS)
    v = space.interpolate(lambda x: np.column_stack([x[:, 0], 0 * x[:, 0], 0 * x[:, 0]]))
    assert K.quadratic_form(v) == pytest.approx(3.0, rel=1e-12)


def test_stiffness_weights_follow_the_form():
    # rotation-free shear u = (x2, 0, 0): grad term only, div u = 0
    space = unit_space(2, 1)
    K = assemble_stiffness(space, PhysicalParams(1.0, 0.7, 0.2))
    v = space.interpolate(lambda x: np.column_stack([x[:, 1], 0 * x[:, 0], 0 * x[:, 0]]))
    assert K.quadratic_form(v) == pytest.approx(0.9, rel=1e-12)


def test_stiffness_symmetry_and_coercivity(cube2, rng):
    space, _, K = cube2
    assert K.symmetry_defect() <= 1e-12
    for _ in range(5):
        v, w = rng.standard_normal((2, space.vector_dof_count))
        assert K.quadratic_form(v, w) == pytest.approx(K.quadratic_form(w, v), rel=1e-12)
        v[space.vector_boundary_mask] = 0.0
        assert K.quadratic_form(v) > 0


def test_stiffness_continuity_bound(cube2, rng):
    # |B(v, w)| <= ||v||_B ||w||_B
    space, _, K = cube2
    for _ in range(20):
        v, w = rng.standard_normal((2, space.vector_dof_count))
        assert abs(K.quadratic_form(v, w)) <= math.sqrt(K.quadratic_form(v) * K.quadratic_form(w)) * (1 + 1e-12)


def test_green_identity_for_smooth_field():
    # B(u, v) = -(div-form operator applied to u, v) for v vanishing on the boundary
    space = unit_space(2, 3)
    params = PhysicalParams(1.0, 0.5, 0.8)
    K = assemble_stiffness(space, params)
    M = assemble_mass(space)
    # u = (x1^2 x2, 0, x3^2): grad u and div u are polynomial
    u = space.interpolate(lambda x: np.column_stack([x[:, 0] ** 2 * x[:, 1], 0 * x[:, 0], x[:, 2] ** 2]))
    # -(l1+l2) lap u - l2 grad div u
    lam = params.lambda1 + params.lambda2
    l2 = params.lambda2

    def rhs(x):
        x1, x2, x3 = x.T
        f1 = -lam * 2 * x2 - l2 * (2 * x2)
        f2 = -l2 * (2 * x1)
        f3 = -lam * 2 - l2 * 2
        return np.column_stack([f1, f2, 0 * x1 + f3])

    f = space.interpolate(rhs)
    N = space.scalar_dof_count
    Mf = (M.matrix @ f.reshape(3, N).T).T.reshape(-1)
    rng = np.random.default_rng(3)
    v = rng.standard_normal(3 * N)
    v[space.vector_boundary_mask] = 0.0
    # u, f cubic at most, so both sides agree to roundoff
    assert K.quadratic_form(u, v) == pytest.approx(Mf @ v, rel=1e-9)


def test_operator_dump_is_sorted(tmp_path):
    M = assemble_mass(unit_space(1, 1))
    path = tmp_path / "m.txt"
    M.dump(path)
    rows = [ln.split() for ln in path.read_text().splitlines()]
    ij = [(int(r[0]), int(r[1])) for r in rows]
    assert ij == sorted(ij)
    assert len(rows) == M.matrix.nnz
    assert np.array_equal(M.row_offsets, M.matrix.indptr)


def test_assembly_is_deterministic():
    a = assemble_stiffness(unit_space(2, 2), UNIT_PARAMS)
    b = assemble_stiffness(unit_space(2, 2), UNIT_PARAMS)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.column_indices, b.column_indices)


def test_load_of_zero_is_exactly_zero(cube2):
    space = cube2[0]
    assert not assemble_nonlinear_load(space, np.zeros(space.vector_dof_count)).any()


def test_load_of_half_pi_is_mass_row_sums(cube2):
    space, M, _ = cube2
    N = space.scalar_dof_count
    u = np.zeros(3 * N)
    u[:N] = math.pi / 2
    load = assemble_nonlinear_load(space, u)
    assert np.allclose(load[:N], M @ np.ones(N), atol=1e-14)
    assert not load[N:].any()


def test_load_small_amplitude_is_linear(cube2):
    space, M, _ = cube2
    N = space.scalar_dof_count
    x1 = space.interpolate(lambda x: np.column_stack([x[:, 0], 0 * x[:, 0], 0 * x[:, 0]]))
    linear = M @ x1[:N]
    for eps in (1e-2, 1e-3):
        dev = np.abs(assemble_nonlinear_load(space, eps * x1)[:N] - eps * linear).max()
        assert dev <= eps**3 * np.abs(linear).max()


def test_load_rejects_bad_length(cube2):
    with pytest.raises(InconsistencyError):
        assemble_nonlinear_load(cube2[0], np.zeros(7))


def test_dirichlet_full_and_empty_masks(cube2):
    M = cube2[1]
    full = apply_dirichlet(M, np.ones(M.dimension, dtype=bool))
    assert np.array_equal(full.toarray(), np.eye(M.dimension))
    empty = apply_dirichlet(M, np.zeros(M.dimension, dtype=bool))
    assert np.array_equal(empty.toarray(), M.toarray())
    with pytest.raises(ConfigurationError):
        apply_dirichlet(M, np.zeros(3, dtype=bool))


def test_dirichlet_keeps_spd(rng):
    A = rng.standard_normal((50, 50))
    A = A @ A.T + 50 * np.eye(50)
    mask = np.zeros(50, dtype=bool)
    mask[::2] = True
    out = apply_dirichlet(SymmetricSparseOperator(A), mask)
    assert out.symmetry_defect() == 0.0
    assert np.linalg.eigvalsh(out.toarray()).min() > 0
    b = rng.standard_normal(50)
    b[mask] = 0.0
    assert not np.linalg.solve(out.toarray(), b)[mask].any()


def test_params_from_modulus():
    p = PhysicalParams.from_modulus(E=2.5, beta=0.25)
    assert p.lambda1 == pytest.approx(1.0, abs=1e-12)
    assert p.lambda2 == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ConfigurationError):
        PhysicalParams(rho=0.0, lambda1=1.0, lambda2=1.0)
