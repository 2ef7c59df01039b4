"""Structured tetrahedral meshes of axis-aligned boxes.

Each of the n^3 cubes is split into 6 tetrahedra sharing the cube's main
diagonal (Kuhn subdivision).  The tetrahedron with permutation ``p`` of the
axes covers the local points with ``x[p0] >= x[p1] >= x[p2]``, which makes
point location a sort.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InconsistencyError, InvalidDomainError, InvalidResolutionError

BOUNDARY_ATOL = 1e-14

KUHN_PERMUTATIONS: tuple[tuple[int, int, int], ...] = tuple(itertools.permutations(range(3)))

_PERM_CODE_TO_INDEX = np.full(27, -1, dtype=np.int64)
for _i, _p in enumerate(KUHN_PERMUTATIONS):
    _PERM_CODE_TO_INDEX[_p[0] * 9 + _p[1] * 3 + _p[2]] = _i


@dataclass(frozen=True, eq=False)
class BoxMesh:
    lo: np.ndarray
    hi: np.ndarray
    cells_per_axis: int
    vertices: np.ndarray  # (V, 3) float
    tets: np.ndarray  # (T, 4) int
    boundary_vertex_flags: np.ndarray  # (V,) bool
    h: float
    # integer lattice coordinates of the vertices, in cell units
    vertex_lattice: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def cell_size(self) -> np.ndarray:
        return (self.hi - self.lo) / self.cells_per_axis

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def signed_volumes(self) -> np.ndarray:
        p = self.vertices[self.tets]
        d = p[:, 1:] - p[:, :1]
        return np.linalg.det(d) / 6.0

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (tet index, barycentric coordinates) for each point.

        Points on shared faces go to one of the adjacent tets; any choice
        is fine since the FE fields are continuous.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.cells_per_axis
        scaled = (pts - self.lo) / self.cell_size
        cell = np.clip(np.floor(scaled).astype(np.int64), 0, n - 1)
        local = scaled - cell
        # stable descending order of the local coordinates picks the tet
        order = np.argsort(-local, axis=1, kind="stable")
        perm_index = _PERM_CODE_TO_INDEX[order[:, 0] * 9 + order[:, 1] * 3 + order[:, 2]]
        cube = cell[:, 0] + n * (cell[:, 1] + n * cell[:, 2])
        tet = 6 * cube + perm_index

        verts = self.vertices[self.tets[tet]]
        jac = np.transpose(verts[:, 1:] - verts[:, :1], (0, 2, 1))
        ref = np.linalg.solve(jac, (pts - verts[:, 0])[..., None])[..., 0]
        bary = np.column_stack([1.0 - ref.sum(axis=1), ref])
        return tet, bary

    def dump(self, path: str | Path) -> None:
        """Write the plain-text mesh dump (header, vertices with flags, tets)."""
        lines = [f"vertices {self.n_vertices} tets {self.n_tets}"]
        for x, b in zip(self.vertices, self.boundary_vertex_flags):
            lines.append(f"{x[0]:.17g} {x[1]:.17g} {x[2]:.17g} {int(b)}")
        for t in self.tets:
            lines.append(" ".join(str(int(i)) for i in t))
        Path(path).write_text("\n".join(lines) + "\n")


def build_box_mesh(lo, hi, n: int) -> BoxMesh:
    """Kuhn-subdivided uniform mesh of the box [lo, hi] with n cells per axis."""
    lo = np.asarray(lo, dtype=float).reshape(3)
    hi = np.asarray(hi, dtype=float).reshape(3)
    if not np.all(hi > lo):
        raise InvalidDomainError(f"degenerate box: lo={lo.tolist()}, hi={hi.tolist()}")
    if int(n) != n or n < 1:
        raise InvalidResolutionError(f"cells per axis must be a positive integer, got {n!r}")
    n = int(n)

    ax = np.arange(n + 1)
    # vertex id = i + (n+1) j + (n+1)^2 k
    kk, jj, ii = np.meshgrid(ax, ax, ax, indexing="ij")
    lattice = np.column_stack([ii.ravel(), jj.ravel(), kk.ravel()])
    vertices = lo + (hi - lo) * (lattice / n)
    # snap the far faces exactly onto hi
    vertices = np.where(lattice == n, hi, vertices)

    def vid(c):
        return c[..., 0] + (n + 1) * (c[..., 1] + (n + 1) * c[..., 2])

    cells = np.arange(n)
    ck, cj, ci = np.meshgrid(cells, cells, cells, indexing="ij")
    origin = np.column_stack([ci.ravel(), cj.ravel(), ck.ravel()])  # cube order: x fastest

    eye = np.eye(3, dtype=np.int64)
    tets = np.empty((len(origin), 6, 4), dtype=np.int64)
    for p_idx, perm in enumerate(KUHN_PERMUTATIONS):
        c0 = origin
        c1 = c0 + eye[perm[0]]
        c2 = c1 + eye[perm[1]]
        c3 = c2 + eye[perm[2]]
        tets[:, p_idx] = np.stack([vid(c0), vid(c1), vid(c2), vid(c3)], axis=1)
    tets = tets.reshape(-1, 4)

    # odd permutations give negatively oriented tets; swap two vertices
    d = vertices[tets[:, 1:]] - vertices[tets[:, :1]]
    neg = np.linalg.det(d) < 0
    tets[neg, 1], tets[neg, 2] = tets[neg, 2].copy(), tets[neg, 1].copy()

    flags = np.any(
        (np.abs(vertices - lo) <= BOUNDARY_ATOL) | (np.abs(vertices - hi) <= BOUNDARY_ATOL),
        axis=1,
    )
    mesh = BoxMesh(
        lo=lo,
        hi=hi,
        cells_per_axis=n,
        vertices=vertices,
        tets=tets,
        boundary_vertex_flags=flags,
        h=0.0,
        vertex_lattice=lattice,
    )
    object.__setattr__(mesh, "h", max_diameter(mesh))
    for arr in (mesh.vertices, mesh.tets, mesh.boundary_vertex_flags, mesh.vertex_lattice):
        arr.setflags(write=False)
    return mesh


def max_diameter(mesh: BoxMesh) -> float:
    """Largest pairwise vertex distance over all tetrahedra."""
    p = mesh.vertices[mesh.tets]
    diam = 0.0
    for a, b in itertools.combinations(range(4), 2):
        diam = max(diam, float(np.max(np.linalg.norm(p[:, a] - p[:, b], axis=1))))
    return diam


def boundary_dof_mask(mesh: BoxMesh, space) -> np.ndarray:
    """Boolean mask over scalar dofs lying on the box surface."""
    if space.mesh is not mesh:
        raise InconsistencyError("space was not built on this mesh")
    x = space.dof_coords
    return np.any(
        (np.abs(x - mesh.lo) <= BOUNDARY_ATOL) | (np.abs(x - mesh.hi) <= BOUNDARY_ATOL),
        axis=1,
    )


def read_mesh_dump(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse a mesh dump back into (vertices, boundary flags, tets)."""
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    nv, nt = int(head[1]), int(head[3])
    vrows = np.array([ln.split() for ln in lines[1 : 1 + nv]], dtype=float)
    tets = np.array([ln.split() for ln in lines[1 + nv : 1 + nv + nt]], dtype=np.int64)
    return vrows[:, :3], vrows[:, 3].astype(bool), tets
