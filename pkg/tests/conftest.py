import sys
import numpy as np
import pytest

from elastosg.assembly import FeSpace, PhysicalParams, assemble_mass, assemble_stiffness, build_space
from elastosg.elements import reference_basis
from elastosg.mesh import BoxMesh, build_box_mesh

UNIT = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
UNIT_PARAMS = PhysicalParams(rho=1.0, lambda1=1.0, lambda2=1.0)


def unit_space(n, degree):
    return build_space(build_box_mesh(*UNIT, n), degree)


def single_tet_space(vertices=None, free=True):
    """Degree-1 space on one tetrahedron (the reference tet by default).

    With ``free`` the boundary mask is empty so every dof takes part in a step.
    """
    v = np.array(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]] if vertices is None else vertices, dtype=float
    )
    mesh = BoxMesh(
        lo=v.min(axis=0),
        hi=v.max(axis=0),
        cells_per_axis=1,
        vertices=v,
        tets=np.array([[0, 1, 2, 3]]),
        boundary_vertex_flags=np.ones(4, dtype=bool),
        h=float(max(np.linalg.norm(a - b) for a in v for b in v)),
        vertex_lattice=np.zeros((4, 3), dtype=np.int64),
    )
    space = FeSpace(mesh, 1, 4, np.array([[0, 1, 2, 3]]), v, reference_basis(1))
    if free:
        space._boundary = np.zeros(4, dtype=bool)
    return space


def random_interior_field(space, rng):
    v = rng.standard_normal(space.vector_dof_count)
    v[space.vector_boundary_mask] = 0.0
    return v


@pytest.fixture(scope="session")
def cube2():
    """Unit cube, 2 cells per axis, degree 2, with mass and stiffness."""
    space = unit_space(2, 2)
    return space, assemble_mass(space), assemble_stiffness(space, UNIT_PARAMS)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.report_lines():
        terminalreporter.write_line(line)
