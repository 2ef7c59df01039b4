"""Global FE space, operators and load vectors.

Vector fields are stored as flat arrays of length ``3 * N`` in
component-major order: entries ``[l*N:(l+1)*N]`` hold component ``l``
of every scalar dof.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .elements import AffineMap, ReferenceBasis, quadrature, reference_basis
from .errors import AssemblyError, ConfigurationError, InconsistencyError
from .mesh import BoxMesh, boundary_dof_mask


@dataclass(frozen=True)
class PhysicalParams:
    rho: float
    lambda1: float
    lambda2: float
    E: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigurationError(f"density must be positive, got {self.rho}")
        if self.lambda1 < 0 or not self.lambda2 > 0:
            raise ConfigurationError(f"need lambda1 >= 0 and lambda2 > 0, got {self.lambda1}, {self.lambda2}")

    @classmethod
    def from_modulus(cls, E: float, beta: float, rho: float = 1.0) -> "PhysicalParams":
        """Lame-type parameters from elastic modulus E and Poisson ratio beta."""
        lam1 = beta * E / ((1.0 + beta) * (1.0 - 2.0 * beta))
        lam2 = E / (2.0 * (1.0 + beta))
        return cls(rho=rho, lambda1=lam1, lambda2=lam2, E=E, beta=beta)


@dataclass(eq=False)
class FeSpace:
    """Continuous degree-k Lagrange space on a Kuhn box mesh.

    The degree-k lattice nodes of the mesh are exactly the points of the
    uniform grid refined k times, so global dofs are numbered on that grid.
    """

    mesh: BoxMesh
    degree: int
    scalar_dof_count: int
    element_dof_map: np.ndarray  # (T, nb)
    dof_coords: np.ndarray  # (N, 3)
    basis: ReferenceBasis = field(repr=False)
    _geometry: dict = field(default_factory=dict, repr=False)
    _boundary: np.ndarray | None = field(default=None, repr=False)

    @property
    def vector_dof_count(self) -> int:
        return 3 * self.scalar_dof_count

    @property
    def boundary_mask(self) -> np.ndarray:
        if self._boundary is None:
            self._boundary = boundary_dof_mask(self.mesh, self)
        return self._boundary

    @property
    def vector_boundary_mask(self) -> np.ndarray:
        return np.tile(self.boundary_mask, 3)

    def geometry(self):
        """Per-tet jacobian inverse-transposes and |det J| (cached)."""
        if "invT" not in self._geometry:
            v = self.mesh.vertices[self.mesh.tets]
            jac = np.transpose(v[:, 1:] - v[:, :1], (0, 2, 1))
            det = np.linalg.det(jac)
            bad = np.flatnonzero(~(det > 0))
            if bad.size:
                raise AssemblyError(int(bad[0]), float(det[bad[0]]))
            self._geometry["invT"] = np.transpose(np.linalg.inv(jac), (0, 2, 1))
            self._geometry["det"] = det
            self._geometry["origin"] = v[:, 0]
            self._geometry["jac"] = jac
        g = self._geometry
        return g["jac"], g["invT"], g["det"], g["origin"]

    def affine_map(self, tet: int) -> AffineMap:
        return AffineMap.from_vertices(self.mesh.vertices[self.mesh.tets[tet]])

    def physical_gradients(self, ref_points: np.ndarray) -> np.ndarray:
        """(T, q, nb, 3) physical basis gradients at reference points."""
        _, invT, _, _ = self.geometry()
        g = self.basis.ref_gradients(ref_points)
        return np.einsum("eij,qaj->eqai", invT, g)

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant of ``func: (N,3) coords -> (N,) or (N,3)``, flat."""
        vals = np.asarray(func(self.dof_coords), dtype=float)
        if vals.ndim == 1:
            return vals.copy()
        return vals.T.reshape(-1).copy()

    def evaluate(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Evaluate a scalar (N,) or stacked (c, N) FE field at points."""
        tet, bary = self.mesh.locate(points)
        bary = np.clip(bary, 0.0, 1.0)
        phi = self.basis.values(bary[:, 1:])  # (P, nb)
        dofs = self.element_dof_map[tet]  # (P, nb)
        c = np.atleast_2d(coeffs)
        out = np.einsum("pa,cpa->cp", phi, c[:, dofs])
        return out[0] if np.ndim(coeffs) == 1 else out


def build_space(mesh: BoxMesh, degree: int) -> FeSpace:
    basis = reference_basis(degree)
    k = degree
    n = mesh.cells_per_axis
    m = k * n + 1
    # lattice coords in units of cell/k are integer combinations of vertex lattice coords
    vlat = mesh.vertex_lattice[mesh.tets]  # (T, 4, 3)
    node_lat = np.einsum("ab,tbc->tac", basis.node_multi_indices, vlat)  # (T, nb, 3)
    dof_map = node_lat[..., 0] + m * (node_lat[..., 1] + m * node_lat[..., 2])
    ax = np.arange(m)
    kk, jj, ii = np.meshgrid(ax, ax, ax, indexing="ij")
    grid = np.column_stack([ii.ravel(), jj.ravel(), kk.ravel()])
    coords = mesh.lo + (mesh.hi - mesh.lo) * (grid / (k * n))
    coords = np.where(grid == k * n, mesh.hi, coords)
    dof_map.setflags(write=False)
    coords.setflags(write=False)
    return FeSpace(mesh, degree, m**3, dof_map, coords, basis)


class SymmetricSparseOperator:
    """Symmetric sparse matrix in CSR storage (both triangles stored)."""

    def __init__(self, matrix: sparse.spmatrix | sparse.sparray):
        csr = sparse.csr_matrix(matrix)
        csr.sum_duplicates()
        csr.sort_indices()
        self.matrix = csr

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def row_offsets(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def column_indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def values(self) -> np.ndarray:
        return self.matrix.data

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def __rmatmul__(self, x: np.ndarray) -> np.ndarray:
        return self.matrix.T @ x

    __array_ufunc__ = None  # keep ndarray @ op routed to __rmatmul__

    def quadratic_form(self, x: np.ndarray, y: np.ndarray | None = None) -> float:
        y = x if y is None else y
        return float(y @ (self.matrix @ x))

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def symmetry_defect(self) -> float:
        """max |A - A^T| relative to max |A|."""
        diff = abs(self.matrix - self.matrix.T)
        scale = max(abs(self.matrix).max(), 1e-300)
        return float(diff.max() / scale) if diff.nnz else 0.0

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def dump(self, path: str | Path) -> None:
        """Coordinate-format text dump ``i j value`` sorted by (i, j)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w") as fh:
            for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{i} {j} {v:.17g}\n")


def _scatter_matrix(dof_map: np.ndarray, local: np.ndarray, size: int) -> sparse.csr_matrix:
    nb = dof_map.shape[1]
    rows = np.repeat(dof_map, nb, axis=1).ravel()
    cols = np.tile(dof_map, (1, nb)).ravel()
    # coo -> csr sums duplicates in input order, which is element order
    return sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(size, size)).tocsr()


def assemble_mass(space: FeSpace) -> SymmetricSparseOperator:
    """Scalar mass matrix: M_ab = integral of phi_a phi_b."""
    rule = quadrature(2 * space.degree)
    _, _, det, _ = space.geometry()
    phi = space.basis.values(rule.ref_points)  # (q, nb)
    ref_local = np.einsum("q,qa,qb->ab", rule.weights, phi, phi)
    local = det[:, None, None] * ref_local[None]
    return SymmetricSparseOperator(_scatter_matrix(space.element_dof_map, local, space.scalar_dof_count))


def stiffness_blocks(space: FeSpace, params: PhysicalParams) -> np.ndarray:
    """Element stiffness matrices (T, 3, nb, 3, nb) for the form

    B(u, v) = (lambda1 + lambda2) (grad u, grad v)_* + lambda2 (div u, div v).
    """
    rule = quadrature(max(2 * (space.degree - 1), 1))
    _, _, det, _ = space.geometry()
    grads = space.physical_gradients(rule.ref_points)  # (T, q, nb, 3)
    wq = rule.weights[None, :] * det[:, None]  # (T, q)
    # D[e, i, a, l, b] = integral of d_i phi_a * d_l phi_b
    D = np.einsum("eq,eqai,eqbl->eialb", wq, grads, grads, optimize=True)
    lap = np.einsum("eiaib->eab", D)
    K = params.lambda2 * D
    for i in range(3):
        K[:, i, :, i, :] += (params.lambda1 + params.lambda2) * lap
    return K


def assemble_stiffness(space: FeSpace, params: PhysicalParams) -> SymmetricSparseOperator:
    """Operator of the bilinear form B on component-major vector dofs."""
    K = stiffness_blocks(space, params)
    N = space.scalar_dof_count
    nb = space.basis.node_count
    vec_map = np.concatenate([space.element_dof_map + l * N for l in range(3)], axis=1)
    local = K.reshape(len(K), 3 * nb, 3 * nb)
    return SymmetricSparseOperator(_scatter_matrix(vec_map, local, 3 * N))


class NonlinearLoad:
    """Evaluates the load integral of sin(u_l) phi_a at quadrature points.

    Precomputes the basis table and weights so repeated evaluation during
    the time march costs two small tensor contractions and a scatter.
    """

    def __init__(self, space: FeSpace, exact_degree: int | None = None):
        self.space = space
        rule = quadrature(exact_degree or 2 * space.degree + 2)
        _, _, det, _ = space.geometry()
        self.phi = space.basis.values(rule.ref_points)  # (q, nb)
        self.wdet = rule.weights[None, :] * det[:, None]  # (T, q)
        self.flat_map = space.element_dof_map.ravel()

    def __call__(self, coeffs: np.ndarray, func=np.sin) -> np.ndarray:
        space = self.space
        N = space.scalar_dof_count
        if coeffs.shape != (3 * N,):
            raise InconsistencyError(f"expected {3 * N} vector coefficients, got {coeffs.shape}")
        U = coeffs.reshape(3, N)[:, space.element_dof_map]  # (3, T, nb)
        uq = np.einsum("qa,cea->ceq", self.phi, U)
        fq = func(uq) * self.wdet[None]
        local = np.einsum("qa,ceq->cea", self.phi, fq)  # (3, T, nb)
        out = np.empty(3 * N)
        for c in range(3):
            out[c * N : (c + 1) * N] = np.bincount(self.flat_map, weights=local[c].ravel(), minlength=N)
        return out


def assemble_nonlinear_load(space: FeSpace, coeffs: np.ndarray) -> np.ndarray:
    """Load vector for F(u) = (sin u1, sin u2, sin u3) against every phi_a e_l."""
    return NonlinearLoad(space)(np.asarray(coeffs, dtype=float))


def apply_dirichlet(op: SymmetricSparseOperator, mask: np.ndarray) -> SymmetricSparseOperator:
    """Zero masked rows and columns and put 1 on their diagonal."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (op.dimension,):
        raise InconsistencyError(f"mask length {mask.shape} does not match dimension {op.dimension}")
    keep = sparse.diags((~mask).astype(float))
    pinned = sparse.diags(mask.astype(float))
    return SymmetricSparseOperator(keep @ op.matrix @ keep + pinned)
